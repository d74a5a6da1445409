"""CSR container validation, Matrix Market parsing, and the 125-point stencil
generator checked against a brute-force neighbor enumeration."""

import io

import numpy as np
import pytest

from pipecg import (
    CapacityError,
    CsrMatrix,
    MatrixMarketError,
    csr_from_dense,
    generate_poisson125,
    load_matrix_market,
    parse_matrix_market,
    poisson125_shape,
)

from conftest import DATA_DIR, SAMPLE5_ROWS


def small_csr():
    # [[1, 0, 2], [0, 3, 0]]
    return CsrMatrix(2, 3, [0, 2, 3], [0, 2, 1], [1.0, 2.0, 3.0])


class TestCsrMatrix:
    def test_basic_properties(self):
        a = small_csr()
        assert a.shape == (2, 3)
        assert a.nnz == 3
        assert a.row_length(0) == 2
        assert a.row_length(1) == 1
        assert a.row_nnz().tolist() == [2, 1]

    def test_arrays_coerced_to_canonical_dtypes(self):
        a = CsrMatrix(
            2,
            3,
            np.array([0, 2, 3], dtype=np.int32),
            np.array([0, 2, 1], dtype=np.int16),
            np.array([1, 2, 3], dtype=np.float32),
        )
        assert a.row_offsets.dtype == np.int64
        assert a.col_indices.dtype == np.int64
        assert a.values.dtype == np.float64
        assert a.values.flags.c_contiguous

    def test_to_dense(self):
        dense = small_csr().to_dense()
        np.testing.assert_array_equal(dense, [[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]])

    def test_from_dense_round_trip(self):
        rng = np.random.default_rng(3)
        dense = np.where(rng.random((7, 9)) < 0.3, rng.standard_normal((7, 9)), 0.0)
        a = csr_from_dense(dense)
        np.testing.assert_array_equal(a.to_dense(), dense)
        assert a.nnz == np.count_nonzero(dense)

    def test_take_rows(self):
        rng = np.random.default_rng(4)
        dense = np.where(rng.random((6, 6)) < 0.4, rng.standard_normal((6, 6)), 0.0)
        a = csr_from_dense(dense)
        head = a.take_rows(4)
        assert head.shape == (4, 6)
        np.testing.assert_array_equal(head.to_dense(), dense[:4])
        assert a.take_rows(99).n_rows == 6
        assert a.take_rows(0).nnz == 0

    def test_offsets_length_checked(self):
        with pytest.raises(ValueError, match="length n_rows"):
            CsrMatrix(2, 2, [0, 1], [0], [1.0])

    def test_offsets_must_start_at_zero(self):
        with pytest.raises(ValueError, match="start at 0"):
            CsrMatrix(1, 2, [1, 2], [0], [1.0])

    def test_offsets_must_be_nondecreasing(self):
        with pytest.raises(ValueError, match="nondecreasing"):
            CsrMatrix(2, 2, [0, 2, 1], [0, 1], [1.0, 2.0])

    def test_column_bounds_checked(self):
        with pytest.raises(ValueError, match="column index out of range"):
            CsrMatrix(1, 2, [0, 1], [2], [1.0])

    def test_duplicate_column_in_row_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            CsrMatrix(1, 3, [0, 2], [1, 1], [1.0, 2.0])

    def test_unsorted_row_rejected(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            CsrMatrix(1, 3, [0, 2], [2, 0], [1.0, 2.0])

    def test_row_boundary_column_drop_is_legal(self):
        # row 0 ends at column 2, row 1 restarts at column 0
        a = CsrMatrix(2, 3, [0, 2, 4], [1, 2, 0, 1], np.ones(4))
        assert a.nnz == 4


class TestMatrixMarketParser:
    def test_general_sample_parses_bit_exact(self):
        a = load_matrix_market(DATA_DIR / "general5.mtx")
        expected = np.zeros((4, 5))
        expected[0, 0] = 1.0
        expected[0, 2] = 4.0e-2
        expected[0, 4] = -6.0
        expected[1, 3] = -3.25 + -0.75  # repeated coordinate, summed
        expected[2, 0] = 2.5
        expected[3, 1] = 7.5
        expected[3, 4] = 100.0  # 1d2, Fortran exponent
        assert a.shape == (4, 5)
        assert a.nnz == 7
        np.testing.assert_array_equal(a.to_dense(), expected)

    def test_symmetric_sample_expands_lower_triangle(self):
        a = load_matrix_market(DATA_DIR / "symmetric3.mtx")
        assert a.nnz == 7
        assert a.row_nnz().tolist() == [2, 3, 2]
        expected = np.array(
            [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]]
        )
        np.testing.assert_array_equal(a.to_dense(), expected)

    def test_coupling_sample_pattern(self):
        a = load_matrix_market(DATA_DIR / "sample5.mtx")
        assert a.nnz == 15
        for i, cols in enumerate(SAMPLE5_ROWS):
            lo, hi = a.row_offsets[i], a.row_offsets[i + 1]
            assert a.col_indices[lo:hi].tolist() == list(cols)
        dense = a.to_dense()
        np.testing.assert_array_equal(dense, dense.T)
        np.testing.assert_array_equal(np.diag(dense), np.full(5, 4.0))

    def test_string_and_file_sources_agree(self):
        path = DATA_DIR / "general5.mtx"
        from_str = parse_matrix_market(path.read_text())
        from_file = load_matrix_market(path)
        np.testing.assert_array_equal(from_str.row_offsets, from_file.row_offsets)
        np.testing.assert_array_equal(from_str.col_indices, from_file.col_indices)
        np.testing.assert_array_equal(from_str.values, from_file.values)

    def test_stream_source(self):
        stream = io.StringIO((DATA_DIR / "symmetric3.mtx").read_text())
        assert parse_matrix_market(stream).nnz == 7

    def test_entries_in_any_order(self):
        text = "%%MatrixMarket matrix coordinate real general\n2 2 3\n2 2 4.0\n1 1 1.0\n1 2 2.0\n"
        a = parse_matrix_market(text)
        np.testing.assert_array_equal(a.to_dense(), [[1.0, 2.0], [0.0, 4.0]])

    @pytest.mark.parametrize(
        "text,line,fragment",
        [
            ("", 1, "empty document"),
            ("%%NotMatrixMarket matrix coordinate real general\n1 1 1\n1 1 1.0\n", 1, "header"),
            ("%%MatrixMarket tensor coordinate real general\n1 1 1\n1 1 1.0\n", 1, "object"),
            ("%%MatrixMarket matrix array real general\n1 1 1\n1 1 1.0\n", 1, "format"),
            ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1.0\n", 1, "field"),
            ("%%MatrixMarket matrix coordinate real hermitian\n1 1 1\n1 1 1.0\n", 1, "symmetry"),
            ("%%MatrixMarket matrix coordinate real general\n% only comments\n", 2, "size line"),
            ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2, "rows cols entries"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 x\n", 2, "three integers"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 0\n", 2, "empty matrix"),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1.0\n", 2, "square"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3, "row index 3"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 0 1.0\n", 3, "column index 0"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\na 1 1.0\n", 3, "coordinate"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 abc\n", 3, "bad value"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1\n", 3, "row col value"),
            ("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1.0\n1 1 2.0\n", 4, "more than the declared"),
            ("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n2 2 2.0\n", 5, "found 2"),
        ],
    )
    def test_malformed_documents_report_line_numbers(self, text, line, fragment):
        with pytest.raises(MatrixMarketError) as exc:
            parse_matrix_market(text)
        assert exc.value.line_number == line
        assert fragment in str(exc.value)
        assert f"line {line}:" in str(exc.value)

    def test_comments_and_blank_lines_skipped(self):
        text = (
            "%%MatrixMarket matrix coordinate real general\n"
            "% a comment\n"
            "\n"
            "2 2 2\n"
            "\n"
            "% another\n"
            "1 1 1.5\n"
            "2 2 2.5\n"
        )
        a = parse_matrix_market(text)
        assert a.nnz == 2


def brute_force_neighbors(n, ix, iy, iz):
    cols = []
    for dz in range(-2, 3):
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                jx, jy, jz = ix + dx, iy + dy, iz + dz
                if 0 <= jx < n and 0 <= jy < n and 0 <= jz < n:
                    cols.append((jz * n + jy) * n + jx)
    return sorted(cols)


class TestPoissonGenerator:
    def test_shape_closed_forms(self):
        assert poisson125_shape(5) == (125, 19**3)
        assert poisson125_shape(6) == (216, 24**3)
        assert poisson125_shape(10) == (1000, 44**3)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            poisson125_shape(4)
        with pytest.raises(ValueError):
            generate_poisson125(4)

    @pytest.mark.parametrize("n", [5, 6, 7])
    def test_rows_match_brute_force_enumeration(self, n):
        a = generate_poisson125(n)
        assert (a.n_rows, a.nnz) == poisson125_shape(n)
        row = 0
        for iz in range(n):
            for iy in range(n):
                for ix in range(n):
                    lo, hi = int(a.row_offsets[row]), int(a.row_offsets[row + 1])
                    cols = a.col_indices[lo:hi].tolist()
                    assert cols == brute_force_neighbors(n, ix, iy, iz)
                    vals = a.values[lo:hi]
                    k = cols.index(row)
                    assert vals[k] == float(len(cols))
                    assert np.all(np.delete(vals, k) == -1.0)
                    row += 1

    def test_row_sums_are_one(self, poisson):
        a = poisson(8)
        sums = np.add.reduceat(a.values, a.row_offsets[:-1])
        np.testing.assert_array_equal(sums, np.ones(a.n_rows))

    def test_symmetric(self):
        a = generate_poisson125(5)
        dense = a.to_dense()
        np.testing.assert_array_equal(dense, dense.T)

    def test_deterministic(self):
        a = generate_poisson125(6)
        b = generate_poisson125(6)
        np.testing.assert_array_equal(a.col_indices, b.col_indices)
        np.testing.assert_array_equal(a.values, b.values)

    def test_memory_budget_enforced(self):
        with pytest.raises(CapacityError):
            generate_poisson125(40, max_bytes=10_000)

    def test_budget_formula_boundary(self):
        n_rows, nnz = poisson125_shape(5)
        need = 16 * nnz + 8 * (n_rows + 1)
        generate_poisson125(5, max_bytes=need)
        with pytest.raises(CapacityError):
            generate_poisson125(5, max_bytes=need - 1)
