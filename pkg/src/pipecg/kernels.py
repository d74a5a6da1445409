"""Numerical kernels shared by every solver and execution strategy.

All reductions accumulate sequentially left to right and every vector update
walks elements in index order, so results are reproducible bit for bit no
matter which strategy ran them.  The hot loops are numba-compiled; plain
numpy would reassociate reductions (BLAS) and break that contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .sparse import CsrMatrix, RowRangeView

__all__ = [
    "spmv",
    "spmv_phase",
    "dot",
    "norm2",
    "JacobiPreconditioner",
    "jacobi_setup",
    "jacobi_apply",
    "fused_pipecg_update",
    "PhaseOrderError",
]


class PhaseOrderError(RuntimeError):
    """Phase 2 of a split product ran before phase 1 for that output."""


@njit(cache=True, nogil=True)
def _poisson125_fill(n, row_offsets, col_indices, values):
    n2 = n * n
    pos = 0
    row = 0
    for iz in range(n):
        lz = -2 if iz >= 2 else -iz
        hz = 2 if iz + 2 <= n - 1 else n - 1 - iz
        for iy in range(n):
            ly = -2 if iy >= 2 else -iy
            hy = 2 if iy + 2 <= n - 1 else n - 1 - iy
            for ix in range(n):
                lx = -2 if ix >= 2 else -ix
                hx = 2 if ix + 2 <= n - 1 else n - 1 - ix
                row_offsets[row] = pos
                diag = float((hz - lz + 1) * (hy - ly + 1) * (hx - lx + 1))
                for dz in range(lz, hz + 1):
                    base_z = row + dz * n2
                    for dy in range(ly, hy + 1):
                        base = base_z + dy * n
                        for dx in range(lx, hx + 1):
                            col = base + dx
                            col_indices[pos] = col
                            values[pos] = diag if col == row else -1.0
                            pos += 1
                row += 1
    row_offsets[row] = pos


@njit(cache=True, nogil=True)
def _spmv(row_offsets, col_indices, values, x, out):
    for i in range(out.size):
        acc = 0.0
        for k in range(row_offsets[i], row_offsets[i + 1]):
            acc += values[k] * x[col_indices[k]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _spmv_phase1(row_offsets, split_offsets, col_indices, values, x, out):
    for i in range(out.size):
        acc = 0.0
        start = row_offsets[i]
        for k in range(start, start + split_offsets[i]):
            acc += values[k] * x[col_indices[k]]
        out[i] = acc


@njit(cache=True, nogil=True)
def _spmv_phase2(row_offsets, split_offsets, col_indices, values, x, out):
    for i in range(out.size):
        acc = 0.0
        for k in range(row_offsets[i] + split_offsets[i], row_offsets[i + 1]):
            acc += values[k] * x[col_indices[k]]
        out[i] += acc


@njit(cache=True, nogil=True)
def _dot(a, b):
    acc = 0.0
    for i in range(a.size):
        acc += a[i] * b[i]
    return acc


@njit(cache=True, nogil=True)
def _fused_update(z, q, s, p, x, r, u, w, m, n_vec, alpha, beta):
    # single pass; per element the reads happen before the writes they feed
    for i in range(x.size):
        z[i] = n_vec[i] + beta * z[i]
        q[i] = m[i] + beta * q[i]
        s[i] = w[i] + beta * s[i]
        p[i] = u[i] + beta * p[i]
        x[i] = x[i] + alpha * p[i]
        r[i] = r[i] - alpha * s[i]
        u[i] = u[i] - alpha * q[i]
        w[i] = w[i] - alpha * z[i]


@njit(cache=True, nogil=True)
def _update_qsru(q, s, r, u, m, w, alpha, beta):
    # the q,s,r,u lanes of the fused update (w is read pre-update)
    for i in range(q.size):
        q[i] = m[i] + beta * q[i]
        s[i] = w[i] + beta * s[i]
        r[i] = r[i] - alpha * s[i]
        u[i] = u[i] - alpha * q[i]


@njit(cache=True, nogil=True)
def _update_qspxru(q, s, p, x, r, u, m, w, alpha, beta):
    # every lane of the fused update except z and w
    for i in range(q.size):
        q[i] = m[i] + beta * q[i]
        s[i] = w[i] + beta * s[i]
        p[i] = u[i] + beta * p[i]
        x[i] = x[i] + alpha * p[i]
        r[i] = r[i] - alpha * s[i]
        u[i] = u[i] - alpha * q[i]


@njit(cache=True, nogil=True)
def _update_zwm(z, w, m, n_vec, inv_diag, alpha, beta):
    # the z,w lanes plus the diagonal preconditioner application
    for i in range(z.size):
        z[i] = n_vec[i] + beta * z[i]
        w[i] = w[i] - alpha * z[i]
        m[i] = inv_diag[i] * w[i]


def _as_vector(v, length: int, name: str) -> np.ndarray:
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != length:
        raise ValueError(f"{name} must be a vector of length {length}")
    return v


def spmv(matrix: CsrMatrix, x, out=None) -> np.ndarray:
    """Sparse matrix-vector product ``out = matrix @ x``.

    Rows are accumulated left to right in storage order, so the result is
    deterministic down to the last bit.
    """
    x = _as_vector(x, matrix.n_cols, "x")
    if out is None:
        out = np.empty(matrix.n_rows)
    else:
        out = _as_vector(out, matrix.n_rows, "out")
    _spmv(matrix.row_offsets, matrix.col_indices, matrix.values, x, out)
    return out


def spmv_phase(view: RowRangeView, phase: int, x, y) -> np.ndarray:
    """One phase of the split product over a reordered row block.

    Phase 1 overwrites ``y`` with the contribution of columns local to the
    view; phase 2 adds the remote-column contribution.  Running phase 2 on an
    output that never saw phase 1 raises :class:`PhaseOrderError`.
    """
    x = _as_vector(x, view.base.n_cols, "x")
    y = _as_vector(y, view.row_count, "y")
    if phase == 1:
        _spmv_phase1(
            view.row_offsets, view.split_offsets, view.col_indices, view.values, x, y
        )
        view._phase1_done.add(id(y))
    elif phase == 2:
        if id(y) not in view._phase1_done:
            raise PhaseOrderError("phase 2 issued before phase 1 for this output")
        _spmv_phase2(
            view.row_offsets, view.split_offsets, view.col_indices, view.values, x, y
        )
    else:
        raise ValueError("phase must be 1 or 2")
    return y


def dot(a, b) -> float:
    """Inner product with strict left-to-right accumulation."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = _as_vector(b, a.size, "b")
    return float(_dot(a, b))


def norm2(a) -> float:
    """Euclidean norm built on the sequential :func:`dot`."""
    return float(np.sqrt(dot(a, a)))


@dataclass(frozen=True)
class JacobiPreconditioner:
    """Reciprocal diagonal of a matrix, applied elementwise."""

    inv_diag: np.ndarray

    @property
    def n(self) -> int:
        return self.inv_diag.size

    def take(self, start: int, stop: int) -> "JacobiPreconditioner":
        return JacobiPreconditioner(self.inv_diag[start:stop].copy())


def jacobi_setup(matrix: CsrMatrix) -> JacobiPreconditioner:
    """Extract the diagonal and invert it.

    Raises ``ValueError`` naming the first row whose diagonal entry is
    missing or exactly zero.
    """
    if matrix.n_rows != matrix.n_cols:
        raise ValueError("diagonal preconditioner needs a square matrix")
    n = matrix.n_rows
    row_ids = np.repeat(np.arange(n, dtype=np.int64), matrix.row_nnz())
    on_diag = matrix.col_indices == row_ids
    present = np.zeros(n, dtype=bool)
    present[row_ids[on_diag]] = True
    if not present.all():
        raise ValueError(f"row {int(np.flatnonzero(~present)[0])}: missing diagonal entry")
    diag = np.empty(n)
    diag[row_ids[on_diag]] = matrix.values[on_diag]
    if np.any(diag == 0.0):
        raise ValueError(f"row {int(np.flatnonzero(diag == 0.0)[0])}: zero diagonal entry")
    return JacobiPreconditioner(1.0 / diag)


def jacobi_apply(pc: JacobiPreconditioner, v, out=None) -> np.ndarray:
    v = _as_vector(v, pc.n, "v")
    if out is None:
        out = np.empty(pc.n)
    else:
        out = _as_vector(out, pc.n, "out")
    np.multiply(pc.inv_diag, v, out=out)
    return out


def fused_pipecg_update(state, alpha: float, beta: float) -> None:
    """Apply all eight pipelined-CG vector recurrences in one fused pass.

    ``state`` is any object carrying the ten iteration vectors as attributes
    ``z, q, s, p, x, r, u, w, m, n``; the first eight are updated in place:

        z <- n + beta*z        q <- m + beta*q
        s <- w + beta*s        p <- u + beta*p
        x <- x + alpha*p       r <- r - alpha*s
        u <- u - alpha*q       w <- w - alpha*z

    Identical bit for bit to running the eight loops separately in that
    order, since each element's lanes are independent of every other's.
    """
    _fused_update(
        state.z, state.q, state.s, state.p, state.x, state.r, state.u, state.w,
        state.m, state.n, float(alpha), float(beta),
    )
