"""Reference single-executor Krylov solvers.

Two mathematically equivalent methods for SPD systems: classic
preconditioned conjugate gradient, and its pipelined rewrite whose dot
products decouple from the preconditioner application and matrix product of
the same iteration.  The pipelined form is the one the multi-device
orchestrators replay, so its state and scalar recurrences live here for
reuse.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .kernels import dot, fused_pipecg_update, jacobi_apply, norm2, spmv
from .sparse import CsrMatrix

__all__ = [
    "SolverConfig",
    "SolverBreakdown",
    "PipecgState",
    "SolveReport",
    "pcg_solve",
    "pipecg_scalars",
    "pipecg_init",
    "pipecg_solve",
    "true_residual_norm",
]


@dataclass
class SolverConfig:
    """Iteration controls shared by every strategy.

    ``tolerance`` is absolute and applies to the preconditioned residual
    norm sqrt((u, u)), the quantity both methods compute anyway; the true
    residual is a separate verification output.  ``drift_check_interval``
    (0 = off) records |b - Ax - r| / |b| every k-th iteration to monitor
    recurrence drift.
    """

    tolerance: float = 1e-5
    max_iterations: int = 10000
    record_history: bool = False
    drift_check_interval: int = 0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.drift_check_interval < 0:
            raise ValueError("drift_check_interval must be nonnegative")


class SolverBreakdown(RuntimeError):
    """A scalar left the representable/SPD regime mid-iteration."""

    def __init__(self, quantity: str, iteration: int, value: float):
        self.quantity = quantity
        self.iteration = iteration
        self.value = value
        super().__init__(
            f"{quantity} = {value!r} at iteration {iteration}: "
            "input is not SPD or the recurrence lost finiteness"
        )


@dataclass
class PipecgState:
    """All ten iteration vectors and the scalar recurrence of the
    pipelined method.

    Vector roles: x iterate, r residual, u preconditioned residual,
    w = Au, m = preconditioned w, n = Am, and the four auxiliary
    directions z, q, s, p.  All share length N.
    """

    x: np.ndarray
    r: np.ndarray
    u: np.ndarray
    w: np.ndarray
    m: np.ndarray
    n: np.ndarray
    z: np.ndarray
    q: np.ndarray
    s: np.ndarray
    p: np.ndarray
    gamma: float
    gamma_prev: float
    delta: float
    alpha: float
    alpha_prev: float
    beta: float
    norm: float
    iteration: int = 0


@dataclass
class SolveReport:
    """Outcome of one solver run.

    ``history`` (when recorded) holds the preconditioned residual norm at
    entry to every iteration plus the final value, so its length is
    iterations + 1 and its last element equals ``final_norm``.
    ``transfer_values`` counts float64 values moved over channels during
    the iteration loop; ``transfer_values_total`` additionally includes
    one-time setup traffic.  ``profile`` and ``partition`` are filled by
    the split-matrix strategy only.
    """

    converged: bool
    iterations: int
    final_norm: float
    strategy: str
    history: list | None = None
    phase_times: dict = field(default_factory=dict)
    verification_error: float | None = None
    transfer_values: int = 0
    transfer_values_total: int = 0
    drift_history: list | None = None
    profile: Any = None
    partition: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "final_norm": float(self.final_norm),
            "strategy": self.strategy,
            "history": None if self.history is None else [float(h) for h in self.history],
            "phase_times": {k: float(v) for k, v in self.phase_times.items()},
            "verification_error": None
            if self.verification_error is None
            else float(self.verification_error),
            "transfer_values": int(self.transfer_values),
            "transfer_values_total": int(self.transfer_values_total),
            "drift_history": None
            if self.drift_history is None
            else [[int(i), float(v)] for i, v in self.drift_history],
            "profile": None if self.profile is None else self.profile.to_dict(),
            "partition": None if self.partition is None else dict(self.partition),
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolveReport":
        from .devices import DeviceProfile

        profile = data.get("profile")
        return cls(
            converged=data["converged"],
            iterations=data["iterations"],
            final_norm=data["final_norm"],
            strategy=data["strategy"],
            history=data.get("history"),
            phase_times=dict(data.get("phase_times", {})),
            verification_error=data.get("verification_error"),
            transfer_values=data.get("transfer_values", 0),
            transfer_values_total=data.get("transfer_values_total", 0),
            drift_history=data.get("drift_history"),
            profile=None if profile is None else DeviceProfile(**profile),
            partition=data.get("partition"),
        )


def _check_system(A: CsrMatrix, b, x0) -> tuple[np.ndarray, np.ndarray]:
    if A.n_rows != A.n_cols:
        raise ValueError("solvers need a square matrix")
    b = np.ascontiguousarray(b, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    if b.shape != (A.n_rows,) or x0.shape != (A.n_rows,):
        raise ValueError("b and x0 must have length n_rows")
    return b, x0


def true_residual_norm(A: CsrMatrix, x, b) -> float:
    """Euclidean norm of b - Ax, recomputed from scratch."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,):
        raise ValueError("b must have length n_rows")
    return norm2(b - spmv(A, x))


def _drift_value(A: CsrMatrix, x, r, b, b_norm: float) -> float:
    resid = b - spmv(A, x)
    return norm2(resid - r) / b_norm if b_norm > 0 else norm2(resid - r)


def pcg_solve(
    A: CsrMatrix, b, x0, pc, cfg: SolverConfig | None = None
) -> tuple[np.ndarray, SolveReport]:
    """Solve Ax = b by preconditioned conjugate gradient.

    Parameters
    ----------
    A : CsrMatrix
        Symmetric positive definite (documented requirement, not checked;
        violations surface as :class:`SolverBreakdown`).
    b, x0 : array_like
        Right-hand side and starting iterate, length ``A.n_rows``.
    pc : JacobiPreconditioner
        Applied as u = M^{-1} r each iteration.
    cfg : SolverConfig, optional

    Returns
    -------
    (x, report)
        The final iterate and a :class:`SolveReport`.  Convergence is
        declared when sqrt((u, u)) < ``cfg.tolerance``, checked at the top
        of every iteration.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    b, x0 = _check_system(A, b, x0)

    x = x0.copy()
    r = b - spmv(A, x)
    u = jacobi_apply(pc, r)
    p = np.zeros_like(u)
    s = np.empty_like(u)
    gamma = dot(r, u)
    gamma_prev = 0.0
    norm = math.sqrt(dot(u, u))
    b_norm = norm2(b)

    history = [norm] if cfg.record_history else None
    drift = [] if cfg.drift_check_interval > 0 else None
    t_setup = time.perf_counter()

    it = 0
    while norm >= cfg.tolerance and it < cfg.max_iterations:
        beta = 0.0 if it == 0 else gamma / gamma_prev
        np.multiply(p, beta, out=p)
        p += u
        spmv(A, p, out=s)
        delta = dot(s, p)
        if delta <= 0.0 or not math.isfinite(delta):
            raise SolverBreakdown("delta", it, delta)
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * s
        jacobi_apply(pc, r, out=u)
        gamma_prev = gamma
        gamma = dot(u, r)
        if gamma < 0.0 or not math.isfinite(gamma):
            raise SolverBreakdown("gamma", it, gamma)
        norm = math.sqrt(dot(u, u))
        it += 1
        if history is not None:
            history.append(norm)
        if drift is not None and it % cfg.drift_check_interval == 0:
            drift.append([it, _drift_value(A, x, r, b, b_norm)])

    t_end = time.perf_counter()
    report = SolveReport(
        converged=norm < cfg.tolerance,
        iterations=it,
        final_norm=norm,
        strategy="pcg",
        history=history,
        phase_times={
            "setup": t_setup - t_start,
            "iterations": t_end - t_setup,
        },
        drift_history=drift,
    )
    return x, report


def pipecg_scalars(
    gamma: float, gamma_prev: float, delta: float, alpha_prev: float, iteration: int
) -> tuple[float, float]:
    """Step scalars (alpha, beta) of the pipelined recurrence.

    Iteration 0 uses beta = 0 and alpha = gamma/delta; afterwards
    beta = gamma_i/gamma_{i-1} and alpha = gamma_i/(delta -
    beta*gamma_i/alpha_{i-1}).  A zero or non-finite alpha denominator
    raises :class:`SolverBreakdown`.
    """
    if iteration == 0:
        beta = 0.0
        denom = delta
    else:
        beta = gamma / gamma_prev
        denom = delta - beta * gamma / alpha_prev
    if denom == 0.0 or not math.isfinite(denom):
        raise SolverBreakdown("alpha denominator", iteration, denom)
    return gamma / denom, beta


def pipecg_init(A: CsrMatrix, b, x0, pc) -> PipecgState:
    """Build the pipelined iteration state from a starting iterate.

    Computes r = b - Ax0, u = M^{-1}r, w = Au, m = M^{-1}w, n = Am and the
    scalars gamma = (r,u), delta = (w,u), norm = sqrt((u,u)).  The four
    auxiliary vectors start at zero: beta_0 = 0 makes their first update
    independent of initial content, zeros keep runs reproducible.
    """
    b, x0 = _check_system(A, b, x0)
    x = x0.copy()
    r = b - spmv(A, x)
    u = jacobi_apply(pc, r)
    w = spmv(A, u)
    m = jacobi_apply(pc, w)
    n = spmv(A, m)
    gamma = dot(r, u)
    delta = dot(w, u)
    norm = math.sqrt(dot(u, u))
    zero = np.zeros_like(x)
    return PipecgState(
        x=x, r=r, u=u, w=w, m=m, n=n,
        z=zero.copy(), q=zero.copy(), s=zero.copy(), p=zero.copy(),
        gamma=gamma, gamma_prev=0.0, delta=delta,
        alpha=0.0, alpha_prev=0.0, beta=0.0, norm=norm,
    )


def pipecg_solve(
    A: CsrMatrix, b, x0, pc, cfg: SolverConfig | None = None
) -> tuple[np.ndarray, SolveReport]:
    """Solve Ax = b by pipelined preconditioned conjugate gradient.

    Same contract and stopping rule as :func:`pcg_solve`.  Each iteration
    runs: scalar recurrence, one fused pass updating all eight recurred
    vectors, the three dot products (gamma, delta, norm), then m = M^{-1}w
    and n = Am.  With ``cfg.drift_check_interval`` k > 0 the report gains
    a [iteration, |b - Ax - r|/|b|] sample every k iterations.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    state = pipecg_init(A, b, x0, pc)
    b_arr = np.ascontiguousarray(b, dtype=np.float64)
    b_norm = norm2(b_arr)

    history = [state.norm] if cfg.record_history else None
    drift = [] if cfg.drift_check_interval > 0 else None
    t_setup = time.perf_counter()

    it = 0
    while state.norm >= cfg.tolerance and it < cfg.max_iterations:
        alpha, beta = pipecg_scalars(
            state.gamma, state.gamma_prev, state.delta, state.alpha_prev, it
        )
        fused_pipecg_update(state, alpha, beta)
        gamma_next = dot(state.r, state.u)
        delta = dot(state.w, state.u)
        norm = math.sqrt(dot(state.u, state.u))
        if gamma_next < 0.0 or not math.isfinite(gamma_next):
            raise SolverBreakdown("gamma", it, gamma_next)
        if not math.isfinite(delta):
            raise SolverBreakdown("delta", it, delta)
        jacobi_apply(pc, state.w, out=state.m)
        spmv(A, state.m, out=state.n)
        state.gamma_prev = state.gamma
        state.gamma = gamma_next
        state.delta = delta
        state.alpha_prev = alpha
        state.alpha = alpha
        state.beta = beta
        state.norm = norm
        it += 1
        state.iteration = it
        if history is not None:
            history.append(norm)
        if drift is not None and it % cfg.drift_check_interval == 0:
            drift.append([it, _drift_value(A, state.x, state.r, b_arr, b_norm)])

    t_end = time.perf_counter()
    report = SolveReport(
        converged=state.norm < cfg.tolerance,
        iterations=it,
        final_norm=state.norm,
        strategy="pipecg",
        history=history,
        phase_times={
            "setup": t_setup - t_start,
            "iterations": t_end - t_setup,
        },
        drift_history=drift,
    )
    return state.x, report
