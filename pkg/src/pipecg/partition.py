"""Workload partitioning driven by the measured device profile.

The split happens in two steps.  First a row cut: the host takes the
longest prefix of rows whose nonzero count stays within its speed share.
Then, inside each device's rows, entries are stably reordered so the ones
whose column belongs to the device's own row range (phase 1, computable
immediately) precede the ones needing the other device's vector slice
(phase 2, computable only after the transfer lands).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .devices import DeviceProfile
from .sparse import CsrMatrix, RowRangeView

__all__ = ["Partition", "derive_split", "decompose_1d", "decompose_2d"]


@dataclass(frozen=True)
class Partition:
    """Complete description of one host/accelerator split."""

    n_host_rows: int
    n_accel_rows: int
    host_view: RowRangeView
    accel_view: RowRangeView
    nnz1_host: int
    nnz2_host: int
    nnz1_accel: int
    nnz2_accel: int

    def summary(self) -> dict:
        return {
            "n_host_rows": self.n_host_rows,
            "n_accel_rows": self.n_accel_rows,
            "nnz1_host": self.nnz1_host,
            "nnz2_host": self.nnz2_host,
            "nnz1_accel": self.nnz1_accel,
            "nnz2_accel": self.nnz2_accel,
        }


def derive_split(profile: DeviceProfile, nnz: int) -> int:
    """Host nonzero budget: floor(nnz * r_host)."""
    if nnz <= 0:
        raise ValueError("nnz must be positive")
    return int(math.floor(nnz * profile.r_host))


def decompose_1d(A: CsrMatrix, nnz_host_target: int) -> int:
    """Largest row count k whose prefix nonzeros fit the host budget.

    Returns k with sum(nnz of rows 0..k-1) <= target; 0 and n_rows are
    legal outcomes.
    """
    if not 0 <= nnz_host_target <= A.nnz:
        raise ValueError("target must lie in [0, nnz]")
    # row_offsets is exactly the prefix-sum of row lengths
    return int(np.searchsorted(A.row_offsets, nnz_host_target, side="right") - 1)


def _build_view(A: CsrMatrix, row_start: int, row_stop: int) -> RowRangeView:
    lo = int(A.row_offsets[row_start])
    hi = int(A.row_offsets[row_stop])
    cols = A.col_indices[lo:hi]
    vals = A.values[lo:hi]
    offsets = (A.row_offsets[row_start : row_stop + 1] - lo).astype(np.int64)
    rows = row_stop - row_start
    row_ids = np.repeat(np.arange(rows, dtype=np.int64), np.diff(offsets))
    local = (cols >= row_start) & (cols < row_stop)
    # stable sort on (row, remote-flag) keeps in-group order while moving
    # local columns to the front of each row
    order = np.argsort(row_ids * 2 + (~local).astype(np.int64), kind="stable")
    split = np.bincount(row_ids[local], minlength=rows).astype(np.int64)
    return RowRangeView(
        base=A,
        first_row=row_start,
        row_count=rows,
        local_col_start=row_start,
        local_col_stop=row_stop,
        row_offsets=offsets,
        col_indices=cols[order],
        values=vals[order],
        split_offsets=split,
    )


def decompose_2d(A: CsrMatrix, n_host_rows: int) -> Partition:
    """Split ``A`` at row ``n_host_rows`` and reorder each side in-row.

    The host view covers rows [0, n_host_rows) with phase-1 columns in the
    same interval; the accelerator view covers the remaining rows with
    phase-1 columns there.  Entry order within each phase group is
    preserved.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("decomposition needs a square matrix")
    if not 0 <= n_host_rows <= A.n_rows:
        raise ValueError("n_host_rows out of range")
    host_view = _build_view(A, 0, n_host_rows)
    accel_view = _build_view(A, n_host_rows, A.n_rows)
    return Partition(
        n_host_rows=n_host_rows,
        n_accel_rows=A.n_rows - n_host_rows,
        host_view=host_view,
        accel_view=accel_view,
        nnz1_host=host_view.nnz_local,
        nnz2_host=host_view.nnz_remote,
        nnz1_accel=accel_view.nnz_local,
        nnz2_accel=accel_view.nnz_remote,
    )
