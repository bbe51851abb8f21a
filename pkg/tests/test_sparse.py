import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradprune import (
    CsrMatrix,
    ParameterError,
    ShapeError,
    SparseModel,
    build_model,
    from_csr,
    make_rng,
    masked_parameters,
    sparse_forward,
    spmv,
    to_csr,
    update_masks,
)
from gradprune.pruning import apply_mask
from helpers import naive_gemv


def f32(x):
    return np.asarray(x, dtype=np.float32)


class TestToCsr:
    def test_zero_matrix(self):
        c = to_csr(np.zeros((3, 4), dtype=np.float32))
        assert c.nnz == 0
        np.testing.assert_array_equal(c.row_ptr, np.zeros(4, dtype=np.uint32))

    def test_identity(self):
        c = to_csr(np.eye(3, dtype=np.float32))
        assert c.nnz == 3
        np.testing.assert_array_equal(c.col_idx, [0, 1, 2])
        np.testing.assert_array_equal(c.values, [1.0, 1.0, 1.0])

    def test_hand_conversion(self):
        c = to_csr(f32([[0.0, 5.0], [7.0, 0.0]]))
        np.testing.assert_array_equal(c.row_ptr, [0, 1, 2])
        np.testing.assert_array_equal(c.col_idx, [1, 0])
        np.testing.assert_array_equal(c.values, [5.0, 7.0])

    def test_round_trip(self):
        rng = make_rng(0)
        for _ in range(25):
            m = rng.uniform(-1, 1, (int(rng.integers(1, 20)), int(rng.integers(1, 20))))
            m = np.where(rng.uniform(0, 1, m.shape) < 0.7, 0.0, m).astype(np.float32)
            np.testing.assert_array_equal(from_csr(to_csr(m)), m)

    @given(arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                  elements=st.floats(-5, 5, width=32)))
    @settings(max_examples=150, deadline=None)
    def test_structural_invariants(self, m):
        c = to_csr(m)
        assert c.row_ptr[0] == 0 and c.row_ptr[-1] == c.nnz
        assert np.all(np.diff(c.row_ptr.astype(np.int64)) >= 0)
        assert np.all(c.values != 0.0)
        if c.nnz:
            assert c.col_idx.max() < c.cols
        for i in range(c.rows):
            row = c.col_idx[c.row_ptr[i]:c.row_ptr[i + 1]].astype(np.int64)
            assert np.all(np.diff(row) > 0)


class TestCsrValidation:
    def test_rejects_explicit_zero(self):
        with pytest.raises(ParameterError):
            CsrMatrix(1, 2, np.array([0, 1], dtype=np.uint32),
                      np.array([0], dtype=np.uint32), np.array([0.0], dtype=np.float32))

    def test_rejects_bad_row_ptr(self):
        with pytest.raises(ParameterError):
            CsrMatrix(2, 2, np.array([0, 2, 1], dtype=np.uint32),
                      np.array([0], dtype=np.uint32), np.array([1.0], dtype=np.float32))

    def test_rejects_column_out_of_range(self):
        with pytest.raises(ParameterError):
            CsrMatrix(1, 2, np.array([0, 1], dtype=np.uint32),
                      np.array([5], dtype=np.uint32), np.array([1.0], dtype=np.float32))

    def test_rejects_unsorted_columns(self):
        with pytest.raises(ParameterError):
            CsrMatrix(1, 3, np.array([0, 2], dtype=np.uint32),
                      np.array([2, 0], dtype=np.uint32),
                      np.array([1.0, 2.0], dtype=np.float32))


class TestSpmv:
    def test_identity(self):
        c = to_csr(np.eye(2, dtype=np.float32))
        np.testing.assert_array_equal(spmv(c, f32([3.0, 4.0])), f32([3.0, 4.0]))

    def test_empty_matrix_annihilates(self):
        c = to_csr(np.zeros((3, 3), dtype=np.float32))
        np.testing.assert_array_equal(spmv(c, f32([1.0, 2.0, 3.0])), np.zeros(3, dtype=np.float32))

    def test_matches_dense_oracle_at_90_percent(self):
        rng = make_rng(7)
        m = rng.uniform(-1, 1, (50, 50)).astype(np.float32)
        m[rng.uniform(0, 1, m.shape) < 0.9] = 0.0
        x = rng.uniform(-1, 1, 50).astype(np.float32)
        np.testing.assert_allclose(spmv(to_csr(m), x), naive_gemv(m, x), atol=1e-6)

    def test_matches_gemv_on_many_random_cases(self):
        rng = make_rng(8)
        for _ in range(100):
            rows = int(rng.integers(1, 80))
            cols = int(rng.integers(1, 80))
            density = float(rng.uniform(0.02, 0.5))
            m = rng.uniform(-1, 1, (rows, cols)).astype(np.float32)
            m[rng.uniform(0, 1, m.shape) >= density] = 0.0
            x = rng.uniform(-1, 1, cols).astype(np.float32)
            np.testing.assert_allclose(spmv(to_csr(m), x), m @ x, atol=1e-6)

    def test_dimension_mismatch(self):
        c = to_csr(np.eye(3, dtype=np.float32))
        with pytest.raises(ShapeError):
            spmv(c, f32([1.0, 2.0]))

    def test_parallel_matches_serial(self):
        rng = make_rng(9)
        m = rng.uniform(-1, 1, (64, 64)).astype(np.float32)
        m[rng.uniform(0, 1, m.shape) < 0.8] = 0.0
        x = rng.uniform(-1, 1, 64).astype(np.float32)
        c = to_csr(m)
        np.testing.assert_allclose(spmv(c, x), spmv(c, x, parallel=True), atol=1e-6)


def pruned_model(cell="rnn", sparsity=0.9, hidden=12, seed=0):
    model = build_model(make_rng(seed), cell, 3, hidden, 1, 2)
    params = masked_parameters(model)
    eps = np.quantile(
        np.abs(np.concatenate([p.weights.ravel() for p in params if p.prunable])),
        sparsity,
    )
    update_masks(params, {"recurrent": float(eps), "linear": float(eps)})
    for p in params:
        apply_mask(p)
    return model


class TestSparseForward:
    def test_fully_dense_model_matches(self):
        model = build_model(make_rng(3), "rnn", 3, 10, 1, 2)
        sm = SparseModel.from_dense(model)
        assert all(not hasattr(v, "nnz") for v in sm.params.values())
        xs = make_rng(4).uniform(-1, 1, (7, 3)).astype(np.float32)
        dense_out, _ = model.forward(xs[:, None, :])
        np.testing.assert_allclose(sparse_forward(sm, xs), dense_out[0], atol=1e-6)

    @pytest.mark.parametrize("cell", ["rnn", "gru"])
    def test_pruned_model_matches_masked_dense(self, cell):
        model = pruned_model(cell)
        sm = SparseModel.from_dense(model)
        assert any(hasattr(v, "nnz") for v in sm.params.values())
        xs = make_rng(5).uniform(-1, 1, (9, 3)).astype(np.float32)
        dense_out, _ = model.forward(xs[:, None, :])
        np.testing.assert_allclose(sparse_forward(sm, xs), dense_out[0], atol=1e-5)

    def test_all_pruned_recurrent_depends_only_on_input(self):
        model = build_model(make_rng(6), "rnn", 2, 6, 1, 1)
        model.layers[0].recurrent_weights[:] = 0.0
        sm = SparseModel.from_dense(model)
        rng = make_rng(7)
        xs1 = rng.uniform(-1, 1, (5, 2)).astype(np.float32)
        xs2 = xs1.copy()
        xs2[:-1] = rng.uniform(-1, 1, (4, 2)).astype(np.float32)  # same final step
        out1 = sparse_forward(sm, xs1)
        out2 = sparse_forward(sm, xs2)
        np.testing.assert_allclose(out1, out2, atol=1e-6)

    def test_output_mode_all(self):
        model = build_model(make_rng(8), "rnn", 2, 5, 1, 3, output_mode="all")
        sm = SparseModel.from_dense(model)
        xs = make_rng(9).uniform(-1, 1, (6, 2)).astype(np.float32)
        dense_out, _ = model.forward(xs[:, None, :])
        np.testing.assert_allclose(sparse_forward(sm, xs), dense_out[:, 0, :], atol=1e-6)

    def test_to_dense_round_trip(self):
        model = pruned_model("gru")
        rebuilt = SparseModel.from_dense(model).to_dense()
        xs = make_rng(10).uniform(-1, 1, (4, 1, 3)).astype(np.float32)
        a, _ = model.forward(xs)
        b, _ = rebuilt.forward(xs)
        np.testing.assert_array_equal(a, b)

    def test_shape_errors(self):
        sm = SparseModel.from_dense(build_model(make_rng(0), "rnn", 3, 4, 1, 1))
        with pytest.raises(ShapeError):
            sparse_forward(sm, np.zeros((5, 9), dtype=np.float32))
        with pytest.raises(ShapeError):
            sparse_forward(sm, np.zeros(5, dtype=np.float32))
