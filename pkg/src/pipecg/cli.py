"""Benchmark front end: problem construction, strategy runs, reporting.

Three subcommands: ``solve`` runs one strategy and emits a run record,
``compare`` runs several on the same problem and tabulates them against a
baseline, ``profile`` prints the device profile and the partition it
implies.  Problems come from a Matrix Market file or the built-in stencil
generator; the right-hand side is manufactured from the constant solution
1/sqrt(N) so the error against the exact solution is always known.

Exit codes: 0 converged, 1 usage or input error, 2 solver breakdown,
3 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .devices import Device, DeviceKind, DeviceProfile, TransferChannel, profile_devices
from .hybrid import hybrid1_solve, hybrid2_solve, hybrid3_solve
from .kernels import jacobi_setup, spmv
from .partition import decompose_1d, decompose_2d, derive_split
from .solvers import SolveReport, SolverBreakdown, SolverConfig, pcg_solve, pipecg_solve
from .sparse import (
    CapacityError,
    CsrMatrix,
    MatrixMarketError,
    generate_poisson125,
    load_matrix_market,
)

__all__ = [
    "ProblemSpec",
    "RunRecord",
    "build_problem",
    "main",
    "STRATEGIES",
]

STRATEGIES = ("pcg", "pipecg", "hybrid1", "hybrid2", "hybrid3")

CSV_COLUMNS = [
    "problem", "N", "nnz", "strategy", "iterations", "converged",
    "final_norm", "wall_ms", "transfer_values", "verify_inf_err", "speedup",
]


@dataclass
class ProblemSpec:
    """One benchmark problem: a matrix source plus iteration controls."""

    matrix_path: str | None = None
    poisson_n: int | None = None
    tolerance: float = 1e-5
    max_iterations: int = 10000
    x0_policy: str = "zero"
    rhs_policy: str = "manufactured"

    def __post_init__(self):
        if (self.matrix_path is None) == (self.poisson_n is None):
            raise ValueError("exactly one of matrix_path and poisson_n is required")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.x0_policy != "zero" or self.rhs_policy != "manufactured":
            raise ValueError("unsupported problem policy")

    @property
    def problem_id(self) -> str:
        if self.poisson_n is not None:
            return f"poisson-{self.poisson_n}"
        return Path(self.matrix_path).stem


def build_problem(spec: ProblemSpec):
    """Materialize (A, b, x_true, x0, pc) for a problem spec.

    x_true is the constant vector 1/sqrt(N), b = A x_true, x0 = 0, and the
    preconditioner is the matrix diagonal.
    """
    if spec.poisson_n is not None:
        A = generate_poisson125(spec.poisson_n)
    else:
        A = load_matrix_market(spec.matrix_path)
    if A.n_rows != A.n_cols:
        raise ValueError("benchmark problems need a square matrix")
    N = A.n_rows
    x_true = np.full(N, 1.0 / np.sqrt(N))
    b = spmv(A, x_true)
    x0 = np.zeros(N)
    pc = jacobi_setup(A)
    return A, b, x_true, x0, pc


@dataclass
class RunRecord:
    """One solver run in serializable form; JSON round-trips losslessly."""

    problem: str
    strategy: str
    n: int
    nnz: int
    wall_ms: float
    timestamp: str
    devices: dict
    report: SolveReport
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "strategy": self.strategy,
            "n": int(self.n),
            "nnz": int(self.nnz),
            "wall_ms": float(self.wall_ms),
            "timestamp": self.timestamp,
            "devices": dict(self.devices),
            "report": self.report.to_dict(),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(
            problem=data["problem"],
            strategy=data["strategy"],
            n=data["n"],
            nnz=data["nnz"],
            wall_ms=data["wall_ms"],
            timestamp=data["timestamp"],
            devices=dict(data["devices"]),
            report=SolveReport.from_dict(data["report"]),
            error=data.get("error"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls.from_dict(json.loads(text))


def _device_snapshot(args) -> dict:
    return {
        "host_workers": args.host_workers,
        "accel_workers": args.accel_workers,
        "host_throttle": args.host_throttle,
        "accel_throttle": args.accel_throttle,
        "xfer_latency_us": args.xfer_latency_us,
        "xfer_bandwidth_mbps": args.xfer_bandwidth_mbps,
    }


def _make_devices(args) -> tuple[Device, Device]:
    host = Device(DeviceKind.HOST, args.host_workers, args.host_throttle)
    accel = Device(DeviceKind.ACCEL, args.accel_workers, args.accel_throttle)
    return host, accel


def _make_channel(args) -> TransferChannel:
    return TransferChannel(
        latency_s=args.xfer_latency_us * 1e-6,
        bandwidth_bytes_per_s=args.xfer_bandwidth_mbps * 1e6,
    )


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        tolerance=args.tol,
        max_iterations=args.max_iters,
        record_history=args.history,
        drift_check_interval=args.drift_every,
    )


def run_strategy(strategy, A, b, x0, pc, cfg, args):
    """Dispatch one strategy, constructing devices for the hybrid ones."""
    if strategy == "pcg":
        return pcg_solve(A, b, x0, pc, cfg)
    if strategy == "pipecg":
        return pipecg_solve(A, b, x0, pc, cfg)
    host, accel = _make_devices(args)
    try:
        if strategy == "hybrid1":
            return hybrid1_solve(A, b, x0, pc, cfg, (host, accel), _make_channel(args))
        if strategy == "hybrid2":
            return hybrid2_solve(A, b, x0, pc, cfg, (host, accel), _make_channel(args))
        if strategy == "hybrid3":
            return hybrid3_solve(
                A, b, x0, pc, cfg, (host, accel),
                (_make_channel(args), _make_channel(args)),
                profile_override=args.pin_ratio,
                profile_rows=args.profile_rows,
            )
        raise ValueError(f"unknown strategy {strategy!r}")
    finally:
        host.close()
        accel.close()


def _run_record(strategy, prob, A, b, x_true, x0, pc, cfg, args) -> RunRecord:
    t0 = time.perf_counter()
    x, report = run_strategy(strategy, A, b, x0, pc, cfg, args)
    wall_ms = (time.perf_counter() - t0) * 1e3
    report.verification_error = float(np.max(np.abs(x - x_true))) if x.size else 0.0
    return RunRecord(
        problem=prob.problem_id,
        strategy=strategy,
        n=A.n_rows,
        nnz=A.nnz,
        wall_ms=wall_ms,
        timestamp=datetime.now(timezone.utc).isoformat(),
        devices=_device_snapshot(args),
        report=report,
    )


def _csv_rows(records: list[RunRecord], baseline: str | None) -> str:
    base_wall = None
    if baseline is not None:
        for rec in records:
            if rec.strategy == baseline:
                base_wall = rec.wall_ms
                break
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        speedup = ""
        if base_wall is not None and rec.wall_ms > 0:
            speedup = format(base_wall / rec.wall_ms, ".17g")
        err = rec.report.verification_error
        writer.writerow([
            rec.problem,
            rec.n,
            rec.nnz,
            rec.strategy,
            rec.report.iterations,
            "true" if rec.report.converged else "false",
            format(rec.report.final_norm, ".17g"),
            format(rec.wall_ms, ".17g"),
            rec.report.transfer_values,
            "" if err is None else format(err, ".17g"),
            speedup,
        ])
    return buf.getvalue()


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _problem_spec(args) -> ProblemSpec:
    return ProblemSpec(
        matrix_path=args.matrix,
        poisson_n=args.poisson,
        tolerance=args.tol,
        max_iterations=args.max_iters,
    )


def cmd_solve(args) -> int:
    prob = _problem_spec(args)
    A, b, x_true, x0, pc = build_problem(prob)
    cfg = _solver_config(args)
    record = _run_record(args.strategy, prob, A, b, x_true, x0, pc, cfg, args)
    if args.format == "csv":
        _emit(_csv_rows([record], None), args.out)
    else:
        _emit(record.to_json(), args.out)
    return 0 if record.report.converged else 3


def cmd_compare(args) -> int:
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise ValueError("no strategies given")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    baseline = args.baseline or strategies[0]
    if baseline not in strategies:
        raise ValueError(f"baseline {baseline!r} is not among the strategies")
    prob = _problem_spec(args)
    A, b, x_true, x0, pc = build_problem(prob)
    cfg = _solver_config(args)
    records = []
    for strategy in strategies:
        try:
            rec = _run_record(strategy, prob, A, b, x_true, x0, pc, cfg, args)
        except SolverBreakdown as exc:
            rec = RunRecord(
                problem=prob.problem_id,
                strategy=strategy,
                n=A.n_rows,
                nnz=A.nnz,
                wall_ms=0.0,
                timestamp=datetime.now(timezone.utc).isoformat(),
                devices=_device_snapshot(args),
                report=SolveReport(
                    converged=False,
                    iterations=exc.iteration,
                    final_norm=float("nan"),
                    strategy=strategy,
                ),
                error=str(exc),
            )
        records.append(rec)
    if args.format == "json":
        _emit(json.dumps({"records": [r.to_dict() for r in records]}, indent=2), args.out)
    else:
        _emit(_csv_rows(records, baseline), args.out)
    return 0 if all(r.report.converged for r in records) else 3


def cmd_profile(args) -> int:
    prob = _problem_spec(args)
    if prob.poisson_n is not None:
        A = generate_poisson125(prob.poisson_n)
    else:
        A = load_matrix_market(prob.matrix_path)
    if A.n_rows != A.n_cols:
        raise ValueError("profiling needs a square matrix")
    host, accel = _make_devices(args)
    try:
        if args.pin_ratio is not None:
            profile = DeviceProfile.pinned(args.pin_ratio, A.nnz)
        else:
            profile = profile_devices(A, host, accel, profile_rows=args.profile_rows)
    finally:
        host.close()
        accel.close()
    part = decompose_2d(A, decompose_1d(A, derive_split(profile, A.nnz)))
    payload = {
        "problem": prob.problem_id,
        "n": A.n_rows,
        "nnz": A.nnz,
        "profile": profile.to_dict(),
        "partition": part.summary(),
    }
    _emit(json.dumps(payload, indent=2), args.out)
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; other codes are reserved for solver outcomes
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser, default_format: str) -> None:
    src = parser.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market file")
    src.add_argument("--poisson", type=int, metavar="N",
                     help="generate the 125-point stencil matrix on an N^3 grid")
    parser.add_argument("--tol", type=float, default=1e-5,
                        help="absolute tolerance on the preconditioned residual norm")
    parser.add_argument("--max-iters", type=int, default=10000)
    parser.add_argument("--host-workers", type=int, default=1)
    parser.add_argument("--accel-workers", type=int, default=1)
    parser.add_argument("--host-throttle", type=float, default=1.0,
                        help="host kernel slowdown multiplier (>= 1)")
    parser.add_argument("--accel-throttle", type=float, default=1.0,
                        help="accelerator kernel slowdown multiplier (>= 1)")
    parser.add_argument("--xfer-latency-us", type=int, default=0,
                        help="injected transfer latency, microseconds")
    parser.add_argument("--xfer-bandwidth-mbps", type=float, default=0.0,
                        help="transfer bandwidth, megabytes/second (0 = infinite)")
    parser.add_argument("--pin-ratio", type=float, default=None,
                        help="fix the host share of nonzeros instead of profiling")
    parser.add_argument("--profile-rows", type=int, default=None,
                        help="profile on the first R rows only")
    parser.add_argument("--history", action="store_true",
                        help="record per-iteration residual norms")
    parser.add_argument("--drift-every", type=int, default=0,
                        help="record recurrence drift every K iterations")
    parser.add_argument("--out", default=None, help="output path (default stdout)")
    parser.add_argument("--format", choices=("json", "csv"), default=default_format)
    parser.add_argument("--seed", type=int, default=None,
                        help="reserved; current solvers are deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pipecg-bench",
                     description="Pipelined CG benchmark on an emulated two-device node")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_solve = sub.add_parser("solve", help="run one strategy")
    _add_common(p_solve, default_format="json")
    p_solve.add_argument("--strategy", choices=STRATEGIES, required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_compare = sub.add_parser("compare", help="run several strategies on one problem")
    _add_common(p_compare, default_format="csv")
    p_compare.add_argument("--strategies", default=",".join(STRATEGIES),
                           help="comma-separated strategy list")
    p_compare.add_argument("--baseline", default=None,
                           help="strategy the speedup column is relative to")
    p_compare.set_defaults(func=cmd_compare)

    p_profile = sub.add_parser("profile", help="print device profile and partition")
    _add_common(p_profile, default_format="json")
    p_profile.set_defaults(func=cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SolverBreakdown as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MatrixMarketError, CapacityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
