"""Command line front end for the Dwork family engine.

    python dwork_cli.py family --n 4 --d 4 --w 1,1,1,1
    python dwork_cli.py operator --n 4 --d 4 --w 1,1,1,1 --v 1,2,2,3 --coords t --raw
    python dwork_cli.py verify --n 3 --d 3 --w 1,1,1
    python dwork_cli.py deformation --n 4 --d 4 --w 1,1,1,1 --v 1,1,3,3 --order 20
    python dwork_cli.py frobenius --n 4 --d 4 --w 1,1,1,1 --v 1,2,2,3 --p 3 --prec 4

JSON goes to stdout with sorted keys, diagnostics to stderr.  Exit codes:
0 success, 1 verification false, 2 usage or domain error, 3 oracle cap
exceeded, 4 unsupported case.
"""
import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import pandas as pd

from core_arith import to_rational
from deformation import DEFAULT_ORDER, deformation_data, frobenius_for_pair, fundamental_solutions
from dwork_family import (FamilySurvey, char_vector, is_totally_nonzero, rank, representatives,
                          validate_family)
from errors import DomainError, DworkError, UsageError
from griffiths_oracle import GriffithsOracle
from pf_operators import (build_hyp_prime, build_P_prime, cancel, hyp_operator, is_irreducible,
                          perturb_parameter, reduce_P)

logger = logging.getLogger(__name__)

# Configuration
COMMANDS = ('family', 'operator', 'verify', 'deformation', 'frobenius', 'solutions')
FORMATS = ('json', 'text')
COORDS = ('lambda', 't')
DEFAULT_FORMAT = 'json'
DEFAULT_COORDS = 'lambda'
DEFAULT_JOBS = 1

EXIT_OK = 0
EXIT_FALSE = 1


@dataclass(frozen=True)
class JobSpec:
    command: str
    n: int
    d: int
    w: tuple
    v: tuple = None
    order: int = DEFAULT_ORDER
    p: int = None
    prec: int = None
    f0_path: str = None
    format: str = DEFAULT_FORMAT
    coords: str = DEFAULT_COORDS
    raw: bool = False
    jobs: int = DEFAULT_JOBS
    timings: bool = False
    mutate: int = None

    def meta(self):
        out = {k: v for k, v in asdict(self).items() if v is not None}
        out['w'] = list(self.w)
        if self.v is not None:
            out['v'] = list(self.v)
        return out


def _int_list(text):
    try:
        return tuple(int(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, required=True, help="Number of variables")
    common.add_argument("--d", type=int, required=True, help="Degree of the hypersurface")
    common.add_argument("--w", type=_int_list, required=True, help='Weights, e.g. "1,1,1,1"')
    common.add_argument("--format", choices=FORMATS, default=DEFAULT_FORMAT)
    common.add_argument("--jobs", type=int, default=DEFAULT_JOBS,
                        help="Worker processes for family-wide runs")
    common.add_argument("--timings", action="store_true", help="Include wall_time_ms in the output")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")

    with_v = argparse.ArgumentParser(add_help=False)
    with_v.add_argument("--v", type=_int_list, help="Character vector; all representatives if omitted")

    with_order = argparse.ArgumentParser(add_help=False)
    with_order.add_argument("--order", type=int, default=DEFAULT_ORDER, help="Series truncation order")

    parser = argparse.ArgumentParser(
        prog="dwork_cli",
        description="Picard-Fuchs operators, Griffiths-Dwork verification and "
                    "deformation matrices for generalized Dwork families",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("family", parents=[common], help="Orbit representatives, ranks and index sets")

    op = sub.add_parser("operator", parents=[common, with_v], help="P(V, W) or Hyp(V, W, b)")
    op.add_argument("--coords", choices=COORDS, default=DEFAULT_COORDS)
    op.add_argument("--raw", action="store_true", help="Also emit the unreduced operator")

    verify = sub.add_parser("verify", parents=[common, with_v], help="Griffiths-Dwork check of P' and P")
    verify.add_argument("--mutate", type=int, nargs="?", const=0, default=None,
                        help=argparse.SUPPRESS)

    sub.add_parser("deformation", parents=[common, with_v, with_order], help="A(lam) = W(0)^-1 W(lam)")
    sub.add_parser("solutions", parents=[common, with_v, with_order],
                   help="Hypergeometric series solutions at lam = 0")

    frob = sub.add_parser("frobenius", parents=[common, with_v, with_order],
                          help="F(lam) = A_V(lam)^-1 F(0) A_V1(lam^p)")
    frob.add_argument("--p", type=int, required=True, help="Prime not dividing d * prod(w)")
    frob.add_argument("--prec", type=int, help="Also reduce coefficients mod p^prec")
    frob.add_argument("--f0", dest="f0_path", help="JSON file with the matrix F(0); identity if omitted")
    return parser


def spec_from_args(args):
    spec = JobSpec(
        command=args.command, n=args.n, d=args.d, w=args.w,
        v=getattr(args, 'v', None),
        order=getattr(args, 'order', DEFAULT_ORDER),
        p=getattr(args, 'p', None),
        prec=getattr(args, 'prec', None),
        f0_path=getattr(args, 'f0_path', None),
        format=args.format,
        coords=getattr(args, 'coords', DEFAULT_COORDS),
        raw=getattr(args, 'raw', False),
        jobs=args.jobs,
        timings=args.timings,
        mutate=getattr(args, 'mutate', None),
    )
    if spec.jobs < 1:
        raise UsageError(f"--jobs must be at least 1, got {spec.jobs}")
    if spec.order < 1:
        raise UsageError(f"--order must be positive, got {spec.order}")
    if spec.prec is not None and spec.prec < 1:
        raise UsageError(f"--prec must be positive, got {spec.prec}")
    return spec


def load_f0(path):
    try:
        with open(path, encoding='utf-8') as fh:
            rows = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read F(0) from {path}: {exc}") from exc
    if not isinstance(rows, list) or not all(isinstance(row, list) for row in rows):
        raise UsageError(f"F(0) in {path} must be a list of rows")
    return [[to_rational(x) for x in row] for row in rows]


# ---------------------------------------------------------------- commands

def _family(spec):
    return validate_family(spec.n, spec.d, spec.w)


def _vector(family, v):
    V = char_vector(family, v)
    if not is_totally_nonzero(V):
        r = rank(family, V)
        raise DomainError(f"V = ({V}) is not totally nonzero (rank of its orbit: {r})")
    return V


def _targets(spec, family):
    if spec.v is not None:
        return [_vector(family, spec.v)]
    return representatives(family)


def cmd_family_info(spec):
    survey = FamilySurvey(_family(spec))
    return survey.generate_report(), EXIT_OK


def operator_record(spec, family, V):
    record = {'v': str(V), 'rank': rank(family, V)}
    if spec.coords == 't':
        h_prime = build_hyp_prime(family, V)
        h = cancel(h_prime)
        record.update({
            'N': V.N,
            'hyp': h.to_json(),
            'pretty': h.pretty(),
            'irreducible': is_irreducible(h),
            'operator': hyp_operator(h).to_json(),
        })
        if spec.raw:
            record['hyp_prime'] = h_prime.to_json()
    else:
        P = reduce_P(family, V)
        record.update({'operator': P.to_json(), 'pretty': P.pretty(), 'order': P.order()})
        if spec.raw:
            P_prime = build_P_prime(family, V)
            record['P_prime'] = {'operator': P_prime.to_json(), 'pretty': P_prime.pretty()}
    return record


def verify_record(spec, family, V):
    oracle = GriffithsOracle(family)
    P = reduce_P(family, V)
    if spec.mutate is not None:
        P = perturb_parameter(P, spec.mutate)
        logger.warning("verifying a mutated operator: %s", P.pretty())
    checks = {
        'P_prime': oracle.verify(V, build_P_prime(family, V)),
        'P': oracle.verify(V, P),
    }
    return {
        'v': str(V),
        'annihilates': all(r.annihilates for r in checks.values()),
        'checks': {name: r.to_json(spec.timings) for name, r in checks.items()},
    }


def deformation_record(spec, family, V):
    return deformation_data(family, V, spec.order).to_json()


def solutions_record(spec, family, V):
    basis = fundamental_solutions(family, V, spec.order)
    return {
        'v': str(V),
        'rank': len(basis.exponents),
        'exponents': list(basis.exponents),
        'hyp': cancel(build_hyp_prime(family, V)).to_json(),
        'solutions': basis.to_json(),
        'series': [w.to_json() for w in basis.solutions],
    }


def frobenius_record(spec, family, V):
    F0 = load_f0(spec.f0_path) if spec.f0_path else None
    result = frobenius_for_pair(family, V, spec.p, spec.order, F0=F0, prec=spec.prec)
    return result.to_json()


RECORD_BUILDERS = {
    'operator': operator_record,
    'verify': verify_record,
    'deformation': deformation_record,
    'solutions': solutions_record,
    'frobenius': frobenius_record,
}


def _run_one(spec, v):
    family = _family(spec)
    start = time.perf_counter()
    record = RECORD_BUILDERS[spec.command](spec, family, char_vector(family, v))
    if spec.timings:
        record['wall_time_ms'] = int((time.perf_counter() - start) * 1000)
    return record


def cmd_per_vector(spec):
    family = _family(spec)
    targets = [V.v for V in _targets(spec, family)]
    if spec.jobs > 1 and len(targets) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            records = list(pool.map(_run_one, [spec] * len(targets), targets))
    else:
        records = [_run_one(spec, v) for v in targets]
    code = EXIT_OK
    if spec.command == 'verify' and not all(r['annihilates'] for r in records):
        code = EXIT_FALSE
    return {'family': family.to_json(), 'records': records}, code


def cmd_operator(spec):
    return cmd_per_vector(replace(spec, command='operator'))


def cmd_verify(spec):
    return cmd_per_vector(replace(spec, command='verify'))


def cmd_deformation(spec):
    return cmd_per_vector(replace(spec, command='deformation'))


def cmd_solutions(spec):
    return cmd_per_vector(replace(spec, command='solutions'))


def cmd_frobenius(spec):
    if spec.p is None:
        raise UsageError("frobenius needs --p")
    return cmd_per_vector(replace(spec, command='frobenius'))


COMMAND_RUNNERS = {
    'family': cmd_family_info,
    'operator': cmd_operator,
    'verify': cmd_verify,
    'deformation': cmd_deformation,
    'solutions': cmd_solutions,
    'frobenius': cmd_frobenius,
}


def run(spec):
    """(payload, exit code) for one JobSpec"""
    if spec.command not in COMMAND_RUNNERS:
        raise UsageError(f"unknown command {spec.command!r}; expected one of {', '.join(COMMANDS)}")
    start = time.perf_counter()
    result, code = COMMAND_RUNNERS[spec.command](spec)
    elapsed = int((time.perf_counter() - start) * 1000)
    logger.info("%s finished in %d ms", spec.command, elapsed)
    meta = spec.meta()
    if spec.timings:
        meta['wall_time_ms'] = elapsed
    return {'meta': meta, 'result': result}, code


def render_text(payload):
    result = payload['result']
    if payload['meta']['command'] == 'family':
        frame = pd.DataFrame(result['orbits'])
        header = ', '.join(f"{k}: {v}" for k, v in sorted(result['summary'].items()))
        return f"{header}\n{frame.to_string(index=False)}"
    frame = pd.json_normalize(result['records'], max_level=1)
    return frame.to_string(index=False)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        payload, code = run(spec)
    except DworkError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    if spec.format == 'text':
        print(render_text(payload))
    else:
        print(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False))
    return code


if __name__ == "__main__":
    sys.exit(main())
