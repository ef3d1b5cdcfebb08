"""Command line front end: parse datum files, dispatch, emit JSON reports.

Commands: validate, capacity, bl, scale, semistable, extremisers, factorize,
oracle, selftest.  Reports go to standard out, diagnostics to standard
error.  Exit codes: 0 success, 1 usage error, 2 computation error,
3 indeterminate outcome.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .bl import BLDatum, bl_constant
from .capacity import (
    CapacityConfig,
    brute_force_capacity,
    extremiser_from_scaling,
    factorization_check,
    objective,
    stationarity_residual,
)
from .model import QuiverDatum, validate_datum
from .scaling import ScalingConfig, ScalingReport, run_scaling
from .serialization import DatumFileError, canonical_json, matrix_to_lists, parse_datum

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ERROR = 2
EXIT_INDETERMINATE = 3

COMMANDS = (
    "validate",
    "capacity",
    "bl",
    "scale",
    "semistable",
    "extremisers",
    "factorize",
    "oracle",
    "selftest",
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the interface contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="quivercap",
        description="Capacity of quiver data and Brascamp-Lieb constants by operator scaling.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("path", nargs="?", help="datum file (JSON); not used by selftest")
    parser.add_argument("--tol-ds", type=float, default=1e-12)
    parser.add_argument("--max-iter", type=int, default=100_000)
    parser.add_argument("--positivity-threshold", type=float, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--oracle-cap", type=int, default=16)
    parser.add_argument("--format", choices=("json", "text"), default="json")
    parser.add_argument(
        "--d1",
        default=None,
        help="factorize only: JSON object mapping vertex id to the first block dimension",
    )
    return parser


def _scaling_config(args) -> ScalingConfig:
    return ScalingConfig(
        tol_ds=args.tol_ds,
        max_iter=args.max_iter,
        positivity_threshold=args.positivity_threshold,
        seed=args.seed,
    )


def _capacity_config(args) -> CapacityConfig:
    return CapacityConfig(seed=args.seed, oracle_cap=args.oracle_cap)


def _config_echo(args) -> dict:
    return {
        "tol_ds": args.tol_ds,
        "max_iter": args.max_iter,
        "positivity_threshold": args.positivity_threshold,
        "seed": args.seed,
        "oracle_cap": args.oracle_cap,
    }


def _ds_trace(report: ScalingReport, limit: int = 1000) -> list:
    trace = list(report.ds_trace)
    if len(trace) <= limit:
        return trace
    step = -(-len(trace) // limit)  # ceil division keeps the rule deterministic
    sampled = trace[::step]
    if sampled[-1] != trace[-1]:
        sampled.append(trace[-1])
    return sampled


def _witness_dict(report: ScalingReport):
    if report.witness is None:
        return None
    return {
        "kind": "subspace",
        "description": report.witness.description,
        "verified": report.witness_verified,
        "subspaces": {v: matrix_to_lists(b) for v, b in report.witness.subspaces.items()},
    }


def _scaling_dict(report: ScalingReport) -> dict:
    return {
        "status": report.status,
        "capacity": report.capacity,
        "capacity_estimate": report.capacity_estimate,
        "ds_final": report.ds_final,
        "iterations": report.iterations,
        "character_log": report.logabs_character,
        "max_cond": report.max_cond,
        "witness": _witness_dict(report),
        "reason": report.reason,
    }


def _weighted(datum) -> QuiverDatum:
    return datum.weighted() if isinstance(datum, BLDatum) else datum


def _cmd_validate(datum, args) -> tuple[dict, int]:
    problems = validate_datum(_weighted(datum))
    return {"status": "ok" if not problems else "invalid", "violations": problems}, EXIT_OK


def _cmd_capacity(datum, args) -> tuple[dict, int]:
    report = run_scaling(_weighted(datum), _scaling_config(args))
    doc = _scaling_dict(report)
    return doc, EXIT_INDETERMINATE if report.status == "indeterminate" else EXIT_OK


def _cmd_scale(datum, args) -> tuple[dict, int]:
    report = run_scaling(_weighted(datum), _scaling_config(args))
    doc = _scaling_dict(report)
    doc["group"] = {x: matrix_to_lists(b) for x, b in report.group.items()}
    doc["scaled"] = {name: matrix_to_lists(m) for name, m in report.current.items()}
    doc["ds_trace"] = _ds_trace(report)
    return doc, EXIT_INDETERMINATE if report.status == "indeterminate" else EXIT_OK


def _cmd_semistable(datum, args) -> tuple[dict, int]:
    report = run_scaling(_weighted(datum), _scaling_config(args))
    decision = {"converged": "yes", "capacity_zero": "no", "indeterminate": "indeterminate"}[
        report.status
    ]
    doc = {
        "status": report.status,
        "semistable": decision,
        "capacity": report.capacity,
        "ds_final": report.ds_final,
        "iterations": report.iterations,
        "witness": _witness_dict(report),
    }
    return doc, EXIT_INDETERMINATE if decision == "indeterminate" else EXIT_OK


def _cmd_extremisers(datum, args) -> tuple[dict, int]:
    weighted = _weighted(datum)
    report = run_scaling(weighted, _scaling_config(args))
    doc = _scaling_dict(report)
    if report.status == "converged":
        ys = extremiser_from_scaling(report)
        doc["extremiser"] = [matrix_to_lists(y) for y in ys]
        doc["stationarity_residual"] = stationarity_residual(weighted, ys)
        doc["objective_at_extremiser"] = objective(weighted, ys)
        return doc, EXIT_OK
    if report.status == "capacity_zero":
        doc["extremiser"] = None
        return doc, EXIT_OK
    return doc, EXIT_INDETERMINATE


def _cmd_bl(datum, args) -> tuple[dict, int]:
    if not isinstance(datum, BLDatum):
        raise DatumFileError("the bl command needs a datum file with 'exponents'")
    report = bl_constant(datum, _scaling_config(args))
    doc = {
        "status": report.status,
        "bl": report.bl,
        "feasible": report.feasible,
        "capacity": report.capacity,
        "omega": report.omega,
        "geometric_bl": report.geometric_bl,
        "bl_character_route": report.character_route,
        "route_gap": report.route_gap,
    }
    return doc, EXIT_INDETERMINATE if report.status == "indeterminate" else EXIT_OK


def _cmd_factorize(datum, args) -> tuple[dict, int]:
    if args.d1 is None:
        raise DatumFileError("factorize needs --d1 with the first block dimensions")
    try:
        dims1 = {str(k): int(v) for k, v in json.loads(args.d1).items()}
    except (json.JSONDecodeError, AttributeError, TypeError, ValueError) as exc:
        raise DatumFileError(f"--d1: {exc}") from exc
    report = factorization_check(_weighted(datum), dims1, _scaling_config(args))
    doc = {
        "status": "ok" if report.relative_gap is not None else "indeterminate",
        "capacity_total": report.capacity_total,
        "capacity_first": report.capacity_first,
        "capacity_second": report.capacity_second,
        "relative_gap": report.relative_gap,
        "statuses": list(report.statuses),
    }
    return doc, EXIT_OK if report.relative_gap is not None else EXIT_INDETERMINATE


def _cmd_oracle(datum, args) -> tuple[dict, int]:
    value = brute_force_capacity(_weighted(datum), _capacity_config(args))
    return {"status": "ok", "capacity": value, "method": "brute_force"}, EXIT_OK


def _selftest_checks():
    """Built-in battery mirroring the acceptance suite at smoke scale."""
    from .blowup import apply_T, apply_T_adjoint, kraus_dense
    from .instances import (
        geometric_family,
        hoelder_datum,
        kronecker,
        random_converging_datum,
        row_projector_datum,
        zero_representation,
    )
    from .capacity import minimize_Y
    from .scaling import ds_distance

    rng = np.random.default_rng(0)
    checks = []

    k = kronecker(2.0)
    rep = run_scaling(k)
    checks.append(("kronecker capacity 4", abs(rep.capacity - 4.0) <= 1e-10))
    checks.append(("kronecker ds 18", abs(ds_distance(k) - 18.0) <= 1e-12))

    for idx, g in enumerate(geometric_family(rng, 4)):
        r = run_scaling(g)
        checks.append(
            (f"geometric datum {idx} capacity 1", r.converged and abs(r.capacity - 1.0) <= 1e-8)
        )

    for name, bad in (("zero rep", zero_representation(2)), ("row projector", row_projector_datum())):
        r = run_scaling(bad)
        checks.append(
            (f"{name} capacity 0 with witness", r.status == "capacity_zero" and r.witness_verified)
        )

    datum, rep = random_converging_datum(rng, size_cap=10)
    bf = brute_force_capacity(datum, CapacityConfig(seed=0))
    fp = minimize_Y(datum)
    agree = abs(rep.capacity - bf) <= 1e-4 * max(1.0, bf) and abs(fp.value - bf) <= 1e-4 * max(1.0, bf)
    checks.append(("triple oracle agreement", agree))

    x = np.abs(rng.standard_normal((datum.total_dim, datum.total_dim)))
    x = x @ x.T
    dense = sum(kk.T @ x @ kk for kk in kraus_dense(datum))
    checks.append(
        ("structured vs dense operator", float(np.linalg.norm(apply_T(datum, x) - dense)) <= 1e-10)
    )
    y = rng.standard_normal((datum.total_dim, datum.total_dim))
    y = (y + y.T) / 2
    lhs = float(np.trace(apply_T(datum, x) @ y))
    rhs = float(np.trace(x @ apply_T_adjoint(datum, y)))
    checks.append(("adjoint identity", abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs))))

    hoelder = bl_constant(hoelder_datum(3))
    checks.append(("hoelder BL constant 1", abs(hoelder.bl - 1.0) <= 1e-8 and hoelder.geometric_bl))
    return checks


def _cmd_selftest(args) -> tuple[dict, int]:
    checks = _selftest_checks()
    results = [{"name": name, "passed": bool(ok)} for name, ok in checks]
    ok = all(r["passed"] for r in results)
    for r in results:
        print(("PASS" if r["passed"] else "FAIL") + f"  {r['name']}", file=sys.stderr)
    return {"status": "ok" if ok else "failed", "checks": results}, EXIT_OK if ok else EXIT_ERROR


def _as_text(doc: dict, prefix: str = "") -> str:
    lines = []
    for key in sorted(doc):
        value = doc[key]
        if isinstance(value, dict):
            lines.append(f"{prefix}{key}:")
            lines.append(_as_text(value, prefix + "  "))
        elif isinstance(value, float) and math.isinf(value):
            lines.append(f"{prefix}{key}: inf")
        else:
            lines.append(f"{prefix}{key}: {value!r}")
    return "\n".join(line for line in lines if line)


def emit(doc: dict, args) -> None:
    doc = dict(doc)
    doc["config"] = _config_echo(args)
    doc["version"] = __version__
    if args.format == "json":
        sys.stdout.write(canonical_json(doc))
    else:
        print(_as_text(doc))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "selftest":
        doc, code = _cmd_selftest(args)
        emit(doc, args)
        return code

    if args.path is None:
        print("quivercap: error: this command needs a datum file", file=sys.stderr)
        return EXIT_USAGE

    try:
        datum = parse_datum(args.path)
    except (OSError, DatumFileError) as exc:
        print(f"quivercap: {exc}", file=sys.stderr)
        return EXIT_ERROR

    handlers = {
        "validate": _cmd_validate,
        "capacity": _cmd_capacity,
        "bl": _cmd_bl,
        "scale": _cmd_scale,
        "semistable": _cmd_semistable,
        "extremisers": _cmd_extremisers,
        "factorize": _cmd_factorize,
        "oracle": _cmd_oracle,
    }
    try:
        doc, code = handlers[args.command](datum, args)
    except (DatumFileError, ValueError, ZeroDivisionError) as exc:
        print(f"quivercap: {exc}", file=sys.stderr)
        return EXIT_ERROR
    emit(doc, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
