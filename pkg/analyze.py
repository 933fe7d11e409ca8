"""
Command-line entry point for the refinement analyzer.

Solves, verifies and audits level-optimal maximin refinements, closest pairs
and the induced equilibria on JSON instance files. Reports go to standard
output as JSON (profiles may be CSV); diagnostics go to standard error.
"""

import argparse
import json
import logging
import sys

import numpy as np

from config import AUDIT_CONFIG, EXIT_CODES, LOG_FORMAT, QUADRATURE, TOLERANCES, get_seed
from src.models.attainment import RELATIONS, value_table
from src.models.divergence import exp_neg, f_divergence, integrand_by_name
from src.models.equilibrium import build_equilibrium, extract_pair, structure_audit, verify_walras
from src.models.flow_oracle import fit, fit_breakpoints
from src.models.maximin import profile_table, solve_lom, verify_lom, weakness_report
from src.models.measure_core import FallbackPolicy, is_refinement, payload
from src.models.pairing import paired_divergence, solve_closest_pair, universal_audit
from src.oracles.lp_reference import lp_fit, min_divergence_oracle
from src.parsers.instance_parser import (parse_allocation, parse_instance, parse_plan,
                                         serialize_allocation, serialize_certificate,
                                         serialize_plan, write_json)
from src.utils.errors import (ConstructionError, InputFormatError, InstanceError, IntegrandError,
                              PreconditionError, SolverError, SpaceMismatchError)
from src.utils.helpers import format_fraction, to_fraction, to_jsonable

logger = logging.getLogger('refinet')


def _emit(doc):
    print(json.dumps(to_jsonable(doc), indent=2))


def _status(passed):
    return EXIT_CODES['ok'] if passed else EXIT_CODES['verification_failed']


def cmd_solve(args):
    instance = parse_instance(args.instance)
    plan = solve_lom(instance, args.side)
    certificate = verify_lom(plan)
    if args.out:
        write_json(serialize_plan(plan), args.out)
    _emit({'plan': serialize_plan(plan), 'certificate': serialize_certificate(certificate)})
    return _status(certificate.verdict)


def cmd_verify(args):
    instance = parse_instance(args.instance)
    plan = parse_plan(args.plan, instance)
    if not is_refinement(plan):
        _emit({'verdict': False, 'reason': f"plan is not a refinement from side {plan.source_side}"})
        return EXIT_CODES['verification_failed']
    certificate = verify_lom(plan)
    _emit(serialize_certificate(certificate))
    return _status(certificate.verdict)


def cmd_pair(args):
    instance = parse_instance(args.instance)
    theta = integrand_by_name(args.theta) if args.theta else None
    first, second = solve_closest_pair(instance, args.side, theta, FallbackPolicy(args.fallback))
    report = universal_audit((first, second), n_competitors=args.competitors, seed=args.seed,
                             fallback=FallbackPolicy(args.fallback))
    plans = {first.source_side: first, second.source_side: second}
    if args.out0:
        write_json(serialize_plan(plans[0]), args.out0)
    if args.out1:
        write_json(serialize_plan(plans[1]), args.out1)
    doc = {'plans': [serialize_plan(plans[0]), serialize_plan(plans[1])], 'audit': report.to_dict()}
    if theta is not None:
        doc['paired_divergence'] = {'theta': theta.name, 'value': paired_divergence(first, second, theta)}
    _emit(doc)
    return _status(report.verdict)


def cmd_profiles(args):
    instance = parse_instance(args.instance)
    plan = parse_plan(args.plan, instance)
    table = profile_table(plan)
    if args.csv:
        table.map(format_fraction).to_csv(sys.stdout, index=False)
    else:
        _emit(table.to_dict(orient='records'))
    return EXIT_CODES['ok']


def _load_pair(args, instance):
    if not args.plan0 or not args.plan1:
        raise InputFormatError("Both plan files are required unless --allocation is given")
    return parse_plan(args.plan0, instance), parse_plan(args.plan1, instance)


def _allocation(args, instance):
    if args.allocation:
        return parse_allocation(args.allocation, instance)
    return build_equilibrium(*_load_pair(args, instance))


def cmd_equilibrium(args):
    instance = parse_instance(args.instance)
    fallback = FallbackPolicy(args.fallback)
    if args.action == 'build':
        allocation, price = build_equilibrium(*_load_pair(args, instance))
        doc = serialize_allocation(allocation, price)
        if args.out:
            write_json(doc, args.out)
        _emit(doc)
        return EXIT_CODES['ok']

    allocation, price = _allocation(args, instance)
    if args.action == 'check':
        walras = verify_walras(allocation, price, instance)
        structure = structure_audit(allocation, price, instance, fallback) if walras.passed else None
        _emit({'walras': walras.to_dict(), 'structure': structure.to_dict() if structure else None})
        return _status(walras.passed and structure.passed)

    pi0, pi1 = extract_pair(allocation, instance, fallback)
    certificates = [verify_lom(pi0), verify_lom(pi1)]
    _emit({
        'plans': [serialize_plan(pi0), serialize_plan(pi1)],
        'lom': [c.verdict for c in certificates],
    })
    return _status(all(c.verdict for c in certificates))


def cmd_attainment(args):
    if not args.epsilon and args.grid is None:
        raise PreconditionError("Give --epsilon and/or --grid")
    relations = [args.relation] if args.relation else list(RELATIONS)
    grids = [args.grid] if args.grid is not None else []
    table = value_table(args.epsilon or [], grids, relations, args.quad_points)
    _emit(table.replace({np.nan: None}).to_dict(orient='records'))
    return EXIT_CODES['ok']


def _compare_fit(instance, side, seed):
    profile = fit_breakpoints(instance, side)
    points = sorted(set(profile.breakpoints) | {b + 1 for b in profile.breakpoints})
    mids = [(a + b) / 2 for a, b in zip(points, points[1:])]
    rng = np.random.default_rng(seed)
    draws = [to_fraction(f"{int(rng.integers(0, 64))}/{int(rng.integers(1, 17))}") for _ in range(5)]
    rows = []
    for t in sorted(set(points) | set(mids) | set(draws)):
        flow_value, lp_value = fit(instance, side, t), lp_fit(instance, side, t)
        rows.append({'t': t, 'flow': flow_value, 'lp': lp_value, 'match': flow_value == lp_value})
    return rows, all(row['match'] for row in rows)


def _compare_divergence(instance, side, theta):
    plan = solve_lom(instance, side)
    lom_value = f_divergence(payload(plan), instance.nu(1 - side), theta)
    _, oracle_value = min_divergence_oracle(instance, side, theta, TOLERANCES['oracle'])
    slack = TOLERANCES['oracle'] * (1 + abs(float(lom_value)))
    passed = oracle_value >= float(lom_value) - slack
    return {'theta': theta.name, 'lom_value': lom_value, 'oracle_value': oracle_value}, passed


def cmd_oracle(args):
    instance = parse_instance(args.instance)
    if args.compare == 'fit':
        rows, passed = _compare_fit(instance, args.side, args.seed)
        _emit({'compare': 'fit', 'passed': passed, 'rows': rows})
    else:
        theta = integrand_by_name(args.theta) if args.theta else exp_neg()
        detail, passed = _compare_divergence(instance, args.side, theta)
        _emit({'compare': 'divergence', 'passed': passed, **detail})
    return _status(passed)


def cmd_weakness(args):
    _emit(weakness_report(n_random=args.n_random, seed=args.seed))
    return EXIT_CODES['ok']


def build_parser():
    parser = argparse.ArgumentParser(
        prog='analyze.py',
        description='Level-optimal maximin refinements, closest pairs and induced equilibria.')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging on stderr')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('solve', help='solve and certify a LOM refinement')
    p.add_argument('instance')
    p.add_argument('--side', type=int, choices=(0, 1), default=0)
    p.add_argument('--out')
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser('verify', help='exit 0 iff the plan is LOM')
    p.add_argument('instance')
    p.add_argument('plan')
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser('pair', help='closest pair with its universal audit')
    p.add_argument('instance')
    p.add_argument('--side', type=int, choices=(0, 1), default=0)
    p.add_argument('--theta', help='integrand name, e.g. square, exp_neg, hs:2')
    p.add_argument('--competitors', type=int, default=AUDIT_CONFIG['n_competitors'])
    p.add_argument('--seed', type=int, default=get_seed())
    p.add_argument('--fallback', choices=[f.value for f in FallbackPolicy], default='uniform')
    p.add_argument('--out0')
    p.add_argument('--out1')
    p.set_defaults(handler=cmd_pair)

    p = sub.add_parser('profiles', help='Over, Fit and truncated mass on the certificate levels')
    p.add_argument('instance')
    p.add_argument('plan')
    p.add_argument('--csv', action='store_true')
    p.set_defaults(handler=cmd_profiles)

    p = sub.add_parser('equilibrium', help='allocation-price pairs of a LOM pair')
    p.add_argument('action', choices=('build', 'check', 'extract'))
    p.add_argument('instance')
    p.add_argument('plan0', nargs='?')
    p.add_argument('plan1', nargs='?')
    p.add_argument('--allocation', help='saved allocation file for check/extract')
    p.add_argument('--fallback', choices=[f.value for f in FallbackPolicy], default='uniform')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_equilibrium)

    p = sub.add_parser('attainment', help='epsilon family values and grid minima')
    p.add_argument('--epsilon', action='append', help='rational in (0, 1/2); repeatable')
    p.add_argument('--grid', type=int)
    p.add_argument('--relation', choices=RELATIONS)
    p.add_argument('--quad-points', type=int, default=QUADRATURE['attainment_points'])
    p.set_defaults(handler=cmd_attainment)

    p = sub.add_parser('oracle', help='cross-check against the reference oracles')
    p.add_argument('instance')
    p.add_argument('--compare', choices=('fit', 'divergence'), required=True)
    p.add_argument('--side', type=int, choices=(0, 1), default=0)
    p.add_argument('--theta')
    p.add_argument('--seed', type=int, default=get_seed())
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser('weakness', help='pointwise versus LOM with zero-weight atoms')
    p.add_argument('--n-random', type=int, default=200)
    p.add_argument('--seed', type=int, default=get_seed())
    p.set_defaults(handler=cmd_weakness)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format=LOG_FORMAT, stream=sys.stderr)
    try:
        return args.handler(args)
    except InputFormatError as exc:
        print(exc.located(), file=sys.stderr)
        return EXIT_CODES['malformed_input']
    except (InstanceError, SpaceMismatchError, PreconditionError, IntegrandError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES['malformed_input']
    except (ConstructionError, SolverError) as exc:
        logger.error("%s", exc)
        return EXIT_CODES['verification_failed']


if __name__ == "__main__":
    sys.exit(main())
