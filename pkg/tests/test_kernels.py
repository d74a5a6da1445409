"""Compute kernels: SPMV against an independent dense oracle, reduction-order
contracts for dot products, bitwise equivalence of the fused vector update and
its split variants, Jacobi preconditioner setup, and two-phase SPMV."""

import types

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import pipecg
from pipecg import (
    JacobiPreconditioner,
    PhaseOrderError,
    csr_from_dense,
    decompose_2d,
    dot,
    fused_pipecg_update,
    jacobi_apply,
    jacobi_setup,
    norm2,
    spmv,
    spmv_phase,
)

from conftest import python_dot

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, width=64)
shared_n = st.shared(st.integers(min_value=1, max_value=40), key="n")


def vec(key):
    return arrays(np.float64, shared_n, elements=finite)


@st.composite
def update_inputs(draw):
    n = draw(st.integers(min_value=1, max_value=32))
    state = {
        name: draw(arrays(np.float64, n, elements=finite))
        for name in ("z", "q", "s", "p", "x", "r", "u", "w", "m", "n")
    }
    alpha = draw(st.floats(min_value=-8.0, max_value=8.0, allow_nan=False))
    beta = draw(st.floats(min_value=-8.0, max_value=8.0, allow_nan=False))
    return state, alpha, beta


def reference_update(v, alpha, beta):
    """The same recurrences as eight separate whole-vector operations."""
    out = {}
    out["z"] = v["n"] + beta * v["z"]
    out["q"] = v["m"] + beta * v["q"]
    out["s"] = v["w"] + beta * v["s"]
    out["p"] = v["u"] + beta * v["p"]
    out["x"] = v["x"] + alpha * out["p"]
    out["r"] = v["r"] - alpha * out["s"]
    out["u"] = v["u"] - alpha * out["q"]
    out["w"] = v["w"] - alpha * out["z"]
    out["m"] = v["m"]
    out["n"] = v["n"]
    return out


class TestSpmv:
    def test_matches_dense_product(self):
        rng = np.random.default_rng(11)
        for trial in range(20):
            rows = int(rng.integers(1, 30))
            cols = int(rng.integers(1, 30))
            dense = np.where(
                rng.random((rows, cols)) < 0.3, rng.standard_normal((rows, cols)), 0.0
            )
            a = csr_from_dense(dense)
            x = rng.standard_normal(cols)
            np.testing.assert_allclose(spmv(a, x), dense @ x, rtol=1e-13, atol=1e-13)

    def test_matches_scipy(self, poisson):
        scipy_sparse = pytest.importorskip("scipy.sparse")
        a = poisson(6)
        s = scipy_sparse.csr_matrix(
            (a.values, a.col_indices, a.row_offsets), shape=a.shape
        )
        x = np.random.default_rng(12).standard_normal(a.n_cols)
        np.testing.assert_allclose(spmv(a, x), s @ x, rtol=1e-13, atol=1e-14)

    def test_out_parameter_reused(self, identity4):
        x = np.arange(4.0)
        out = np.empty(4)
        got = spmv(identity4, x, out=out)
        assert got is out
        np.testing.assert_array_equal(out, x)

    def test_wrong_length_rejected(self, identity4):
        with pytest.raises(ValueError):
            spmv(identity4, np.ones(5))
        with pytest.raises(ValueError):
            spmv(identity4, np.ones(4), out=np.empty(3))

    def test_deterministic_bitwise(self, poisson):
        a = poisson(5)
        x = np.random.default_rng(13).standard_normal(a.n_cols)
        first = spmv(a, x)
        for _ in range(3):
            np.testing.assert_array_equal(spmv(a, x), first)


class TestDot:
    @given(a=vec("a"), b=vec("b"))
    def test_matches_left_to_right_accumulation(self, a, b):
        assert dot(a, b) == python_dot(a, b)

    def test_differs_from_shuffled_order_in_general(self):
        # not an API contract, just evidence the order matters at all
        rng = np.random.default_rng(14)
        a = rng.standard_normal(2000) * 10.0 ** rng.integers(-8, 8, 2000)
        b = rng.standard_normal(2000) * 10.0 ** rng.integers(-8, 8, 2000)
        forward = dot(a, b)
        backward = python_dot(a[::-1].copy(), b[::-1].copy())
        assert forward != backward

    @given(a=vec("a"))
    def test_norm_is_root_of_self_dot(self, a):
        assert norm2(a) == np.sqrt(dot(a, a))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dot(np.ones(3), np.ones(4))


class TestFusedUpdate:
    @given(update_inputs())
    def test_bitwise_equal_to_separate_operations(self, case):
        v, alpha, beta = case
        expected = reference_update(v, alpha, beta)
        state = types.SimpleNamespace(**{k: arr.copy() for k, arr in v.items()})
        fused_pipecg_update(state, alpha, beta)
        for name in ("z", "q", "s", "p", "x", "r", "u", "w"):
            np.testing.assert_array_equal(
                getattr(state, name), expected[name], err_msg=name
            )

    @given(update_inputs())
    def test_host_lane_split_matches_fused(self, case):
        from pipecg.kernels import _update_qsru, _update_zwm

        v, alpha, beta = case
        expected = reference_update(v, alpha, beta)

        q, s = v["q"].copy(), v["s"].copy()
        r, u = v["r"].copy(), v["u"].copy()
        _update_qsru(q, s, r, u, v["m"], v["w"], alpha, beta)
        np.testing.assert_array_equal(q, expected["q"])
        np.testing.assert_array_equal(s, expected["s"])
        np.testing.assert_array_equal(r, expected["r"])
        np.testing.assert_array_equal(u, expected["u"])

        inv_diag = np.where(v["p"] == 0.0, 1.0, v["p"])  # any nonzero array
        z, w, m = v["z"].copy(), v["w"].copy(), v["m"].copy()
        _update_zwm(z, w, m, v["n"], inv_diag, alpha, beta)
        np.testing.assert_array_equal(z, expected["z"])
        np.testing.assert_array_equal(w, expected["w"])
        np.testing.assert_array_equal(m, inv_diag * expected["w"])

    @given(update_inputs())
    def test_split_lane_group_matches_fused(self, case):
        from pipecg.kernels import _update_qspxru

        v, alpha, beta = case
        expected = reference_update(v, alpha, beta)
        q, s, p = v["q"].copy(), v["s"].copy(), v["p"].copy()
        x, r, u = v["x"].copy(), v["r"].copy(), v["u"].copy()
        _update_qspxru(q, s, p, x, r, u, v["m"], v["w"], alpha, beta)
        for name, arr in (("q", q), ("s", s), ("p", p), ("x", x), ("r", r), ("u", u)):
            np.testing.assert_array_equal(arr, expected[name], err_msg=name)


class TestJacobi:
    def test_setup_inverts_diagonal(self, sample5):
        pc = jacobi_setup(sample5)
        np.testing.assert_array_equal(pc.inv_diag, 1.0 / np.full(5, 4.0))
        assert pc.n == 5

    def test_apply_is_multiply_by_inverse(self, sample5):
        pc = jacobi_setup(sample5)
        v = np.random.default_rng(15).standard_normal(5)
        np.testing.assert_array_equal(jacobi_apply(pc, v), v * pc.inv_diag)

    def test_apply_out_parameter(self, sample5):
        pc = jacobi_setup(sample5)
        v = np.ones(5)
        out = np.empty(5)
        got = jacobi_apply(pc, v, out=out)
        assert got is out

    def test_round_trip_within_one_ulp(self):
        rng = np.random.default_rng(16)
        diag = rng.uniform(0.5, 4.0, 50)
        a = csr_from_dense(np.diag(diag))
        pc = jacobi_setup(a)
        v = rng.standard_normal(50)
        back = jacobi_apply(pc, v) * diag
        err = np.abs(back - v)
        assert np.all(err <= 2.0 * np.spacing(np.abs(v)))

    def test_non_square_rejected(self):
        a = csr_from_dense(np.ones((2, 3)))
        with pytest.raises(ValueError):
            jacobi_setup(a)

    def test_missing_diagonal_reported_with_row(self):
        dense = np.array([[1.0, 1.0], [1.0, 0.0]])
        a = csr_from_dense(dense)
        with pytest.raises(ValueError, match="row 1: missing diagonal"):
            jacobi_setup(a)

    def test_zero_diagonal_rejected(self):
        a = pipecg.CsrMatrix(2, 2, [0, 1, 2], [0, 1], [1.0, 0.0])
        with pytest.raises(ValueError, match="zero diagonal"):
            jacobi_setup(a)

    def test_take_slices_inverse(self, sample5):
        pc = jacobi_setup(sample5)
        part = pc.take(1, 4)
        assert isinstance(part, JacobiPreconditioner)
        np.testing.assert_array_equal(part.inv_diag, pc.inv_diag[1:4])


class TestTwoPhaseSpmv:
    def make_case(self, seed, n=12, k=5):
        rng = np.random.default_rng(seed)
        dense = np.where(rng.random((n, n)) < 0.35, rng.standard_normal((n, n)), 0.0)
        dense[np.arange(n), np.arange(n)] = 1.0
        a = csr_from_dense(dense)
        part = decompose_2d(a, k)
        x = rng.standard_normal(n)
        return a, part, x

    def test_phases_sum_to_full_product(self):
        for seed in range(10):
            a, part, x = self.make_case(seed)
            full = spmv(a, x)
            for view, lo, hi in (
                (part.host_view, 0, part.n_host_rows),
                (part.accel_view, part.n_host_rows, a.n_rows),
            ):
                y = np.empty(hi - lo)
                spmv_phase(view, 1, x, y)
                spmv_phase(view, 2, x, y)
                np.testing.assert_allclose(y, full[lo:hi], rtol=1e-13, atol=1e-13)

    def test_phase1_ignores_off_block_columns(self):
        a, part, x = self.make_case(21)
        lo, hi = 0, part.n_host_rows
        y1 = np.empty(hi - lo)
        spmv_phase(part.host_view, 1, x, y1)
        poisoned = x.copy()
        poisoned[hi:] = 1e300  # off-block entries must not be read in phase 1
        y2 = np.empty(hi - lo)
        spmv_phase(part.host_view, 1, poisoned, y2)
        np.testing.assert_array_equal(y1, y2)

    def test_phase2_requires_phase1_on_same_output(self):
        a, part, x = self.make_case(22)
        y = np.empty(part.n_host_rows)
        with pytest.raises(PhaseOrderError):
            spmv_phase(part.host_view, 2, x, y)
        spmv_phase(part.host_view, 1, x, y)
        spmv_phase(part.host_view, 2, x, y)

    def test_unknown_phase_rejected(self):
        a, part, x = self.make_case(23)
        y = np.empty(part.n_host_rows)
        with pytest.raises(ValueError):
            spmv_phase(part.host_view, 3, x, y)
