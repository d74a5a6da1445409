"""Sparse matrix storage and construction.

CSR is the only storage format.  Matrices arrive either from Matrix Market
coordinate files or from the built-in 125-point stencil generator; both paths
produce the same validated, immutable :class:`CsrMatrix`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

__all__ = [
    "CsrMatrix",
    "RowRangeView",
    "MatrixMarketError",
    "CapacityError",
    "csr_from_dense",
    "parse_matrix_market",
    "load_matrix_market",
    "generate_poisson125",
    "poisson125_shape",
]


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input.  Carries the 1-based offending line."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class CapacityError(RuntimeError):
    """Requested matrix would exceed the allowed memory budget."""


@dataclass(frozen=True)
class CsrMatrix:
    """Compressed sparse row matrix with float64 values.

    Immutable after construction.  ``row_offsets`` has length ``n_rows + 1``
    with ``row_offsets[0] == 0`` and ``row_offsets[-1] == nnz``; column
    indices are 0-based and strictly increasing within each row (no
    duplicates, no explicit unsorted storage).
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_rows", int(self.n_rows))
        object.__setattr__(self, "n_cols", int(self.n_cols))
        object.__setattr__(
            self, "row_offsets", np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        )
        object.__setattr__(
            self, "col_indices", np.ascontiguousarray(self.col_indices, dtype=np.int64)
        )
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64)
        )
        self._validate()

    def _validate(self):
        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        ro = self.row_offsets
        if ro.ndim != 1 or ro.shape[0] != self.n_rows + 1:
            raise ValueError("row_offsets must have length n_rows + 1")
        if ro[0] != 0:
            raise ValueError("row_offsets must start at 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        nnz = int(ro[-1])
        if self.col_indices.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_indices/values length must equal row_offsets[-1]")
        if nnz:
            ci = self.col_indices
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing inside each row; pairs that straddle a row
            # boundary are exempt
            d = np.diff(ci)
            if d.size:
                mask = np.ones(d.size, dtype=bool)
                bound = ro[1:-1]
                bound = bound[(bound > 0) & (bound < nnz)]
                mask[bound - 1] = False
                if np.any(d[mask] <= 0):
                    raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def row_length(self, i: int) -> int:
        return int(self.row_offsets[i + 1] - self.row_offsets[i])

    def row_nnz(self) -> np.ndarray:
        """Per-row entry counts, length n_rows."""
        return np.diff(self.row_offsets)

    def take_rows(self, count: int) -> "CsrMatrix":
        """First ``count`` rows as a standalone matrix (same column space)."""
        count = max(0, min(int(count), self.n_rows))
        end = int(self.row_offsets[count])
        return CsrMatrix(
            count,
            self.n_cols,
            self.row_offsets[: count + 1].copy(),
            self.col_indices[:end].copy(),
            self.values[:end].copy(),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        row_ids = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        out[row_ids, self.col_indices] = self.values
        return out


@dataclass(frozen=True)
class RowRangeView:
    """A contiguous row block of a matrix, reordered for two-phase products.

    Within each row the entries whose column falls in the local interval
    ``[local_col_start, local_col_stop)`` come first, then the remote ones;
    relative order inside each group is preserved.  ``split_offsets[i]`` is
    the in-row position separating the two groups for local row ``i``.
    Row and offset indexing is local to the block; column indices stay
    global.
    """

    base: CsrMatrix
    first_row: int
    row_count: int
    local_col_start: int
    local_col_stop: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    split_offsets: np.ndarray
    # ids of output vectors with a completed phase-1 pass (phase-order guard)
    _phase1_done: set = field(default_factory=set, repr=False, compare=False)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def nnz_local(self) -> int:
        return int(self.split_offsets.sum())

    @property
    def nnz_remote(self) -> int:
        return self.nnz - self.nnz_local


def csr_from_dense(dense) -> CsrMatrix:
    """Build a CsrMatrix from a 2-D array, dropping exact zeros."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2:
        raise ValueError("expected a 2-D array")
    n_rows, n_cols = dense.shape
    rows, cols = np.nonzero(dense)
    row_offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=row_offsets[1:])
    return CsrMatrix(n_rows, n_cols, row_offsets, cols.astype(np.int64), dense[rows, cols])


def _parse_float(token: str, line_number: int) -> float:
    try:
        return float(token)
    except ValueError:
        # Fortran-style exponents (1.5D+03) show up in old files
        try:
            return float(token.replace("d", "e").replace("D", "E"))
        except ValueError:
            raise MatrixMarketError(f"bad value {token!r}", line_number) from None


def parse_matrix_market(source: Union[str, IO[str]]) -> CsrMatrix:
    """Parse a Matrix Market coordinate document into a CsrMatrix.

    Parameters
    ----------
    source : str or text stream
        The document text itself, or an open text stream positioned at the
        header.  (To read from a path use :func:`load_matrix_market`.)

    Returns
    -------
    CsrMatrix
        Indices converted to 0-based.  Duplicate coordinates are summed.
        ``symmetric`` headers are expanded to full storage by mirroring each
        off-diagonal entry.

    Raises
    ------
    MatrixMarketError
        On any malformed content, naming the offending 1-based line.
        Only ``matrix coordinate real general|symmetric`` is accepted, and
        an empty matrix (zero rows, columns, or entries) is rejected.
    """
    if isinstance(source, str):
        source = io.StringIO(source)

    lines = enumerate(source, start=1)

    try:
        header_no, header = next(lines)
    except StopIteration:
        raise MatrixMarketError("empty document", 1) from None
    tokens = header.strip().lower().split()
    if len(tokens) < 5 or tokens[0] != "%%matrixmarket":
        raise MatrixMarketError("missing %%MatrixMarket header", header_no)
    _, obj, fmt, kind, symmetry = tokens[:5]
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object {obj!r}", header_no)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format {fmt!r}", header_no)
    if kind != "real":
        raise MatrixMarketError(f"unsupported field {kind!r}", header_no)
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", header_no)

    # size line: first non-comment, non-blank line after the header
    size_no = None
    for line_number, line in lines:
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        size_no, size_text = line_number, text
        break
    if size_no is None:
        raise MatrixMarketError("missing size line", header_no + 1)
    parts = size_text.split()
    if len(parts) != 3:
        raise MatrixMarketError("size line must hold rows cols entries", size_no)
    try:
        n_rows, n_cols, n_entries = (int(p) for p in parts)
    except ValueError:
        raise MatrixMarketError("size line must hold three integers", size_no) from None
    if n_rows <= 0 or n_cols <= 0 or n_entries <= 0:
        raise MatrixMarketError("empty matrix", size_no)
    if symmetry == "symmetric" and n_rows != n_cols:
        raise MatrixMarketError("symmetric matrix must be square", size_no)

    rows = np.empty(n_entries, dtype=np.int64)
    cols = np.empty(n_entries, dtype=np.int64)
    vals = np.empty(n_entries, dtype=np.float64)
    count = 0
    last_no = size_no
    for line_number, line in lines:
        text = line.strip()
        if not text or text.startswith("%"):
            continue
        if count >= n_entries:
            raise MatrixMarketError(
                f"more than the declared {n_entries} entries", line_number
            )
        parts = text.split()
        if len(parts) != 3:
            raise MatrixMarketError("entry must hold row col value", line_number)
        try:
            i = int(parts[0])
            j = int(parts[1])
        except ValueError:
            raise MatrixMarketError("bad coordinate", line_number) from None
        if not (1 <= i <= n_rows):
            raise MatrixMarketError(f"row index {i} out of range", line_number)
        if not (1 <= j <= n_cols):
            raise MatrixMarketError(f"column index {j} out of range", line_number)
        rows[count] = i - 1
        cols[count] = j - 1
        vals[count] = _parse_float(parts[2], line_number)
        count += 1
        last_no = line_number
    if count != n_entries:
        raise MatrixMarketError(
            f"expected {n_entries} entries, found {count}", last_no + 1
        )

    if symmetry == "symmetric":
        off = rows != cols
        mirrored_rows = cols[off]
        mirrored_cols = rows[off]
        mirrored_vals = vals[off]
        rows = np.concatenate([rows, mirrored_rows])
        cols = np.concatenate([cols, mirrored_cols])
        vals = np.concatenate([vals, mirrored_vals])

    # sort by (row, col); sum duplicates
    key = rows * np.int64(n_cols) + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    fresh = np.ones(key.size, dtype=bool)
    fresh[1:] = key[1:] != key[:-1]
    starts = np.flatnonzero(fresh)
    summed = np.add.reduceat(vals, starts)
    uniq_rows = (key[starts] // n_cols).astype(np.int64)
    uniq_cols = (key[starts] % n_cols).astype(np.int64)

    row_offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(uniq_rows, minlength=n_rows), out=row_offsets[1:])
    return CsrMatrix(n_rows, n_cols, row_offsets, uniq_cols, summed)


def load_matrix_market(path) -> CsrMatrix:
    """Read and parse a Matrix Market file from ``path``."""
    with open(path, "r", encoding="ascii", errors="replace") as handle:
        return parse_matrix_market(handle)


def poisson125_shape(n: int) -> tuple[int, int]:
    """Closed-form (N, nnz) of the order-n 125-point stencil matrix.

    Each of the n^3 grid points couples to every point within Chebyshev
    distance 2, clipped at the box faces; per axis an interior coordinate
    contributes 5 offsets and each boundary clip removes one, giving
    nnz = (5n - 6)^3 for n >= 5.
    """
    n = int(n)
    if n < 5:
        raise ValueError("stencil requires n >= 5")
    return n**3, (5 * n - 6) ** 3


def _axis_span(c: int, n: int) -> int:
    return min(c, 2) + min(n - 1 - c, 2) + 1


def generate_poisson125(n: int, max_bytes: int = 2**31) -> CsrMatrix:
    """Build the 125-point stencil test matrix on an n x n x n grid.

    Grid points are numbered x-fastest (index = ix + n*iy + n^2*iz).  Row
    ``i`` holds -1.0 for every neighbor within Chebyshev distance 2 along
    each axis (clipped at the boundary) and a diagonal equal to the number
    of off-diagonal entries plus one, so every row sums to 1.

    Raises
    ------
    CapacityError
        If the estimated footprint exceeds ``max_bytes``.
    ValueError
        If ``n < 5`` (smaller grids would merge stencil legs).
    """
    N, nnz = poisson125_shape(n)
    need = 16 * nnz + 8 * (N + 1)
    if need > max_bytes:
        raise CapacityError(
            f"n={n} needs about {need / 2**30:.2f} GiB "
            f"(budget {max_bytes / 2**30:.2f} GiB)"
        )
    row_offsets = np.empty(N + 1, dtype=np.int64)
    col_indices = np.empty(nnz, dtype=np.int64)
    values = np.empty(nnz, dtype=np.float64)
    from .kernels import _poisson125_fill

    _poisson125_fill(np.int64(n), row_offsets, col_indices, values)
    return CsrMatrix(N, N, row_offsets, col_indices, values)
