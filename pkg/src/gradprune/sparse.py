"""CSR storage and sparse minibatch-1 inference.

Pruned weight matrices are stored in compressed sparse row form with
32-bit row offsets and column indices and float32 values.  The
matrix-vector kernel is JIT-compiled (numba), walks rows sequentially
and accumulates each row in float64 before rounding to float32, so its
result is deterministic and at least as accurate as the dense product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import ParameterError, ShapeError
from .models import FcLayer, GruLayer, RecurrentModel, RnnLayer
from .tensor import RELU_CLIP, sigmoid


@dataclass(frozen=True)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray  # uint32, length rows + 1
    col_idx: np.ndarray  # uint32, length nnz
    values: np.ndarray   # float32, length nnz

    def __post_init__(self):
        rp, ci, vals = self.row_ptr, self.col_idx, self.values
        if rp.dtype != np.uint32 or ci.dtype != np.uint32 or vals.dtype != np.float32:
            raise ParameterError("CSR arrays must be (uint32, uint32, float32)")
        if rp.shape != (self.rows + 1,):
            raise ParameterError(f"row_ptr must have length rows+1, got {rp.shape}")
        if rp[0] != 0 or np.any(np.diff(rp.astype(np.int64)) < 0) or rp[-1] != ci.size:
            raise ParameterError("row_ptr must start at 0, be non-decreasing and end at nnz")
        if ci.shape != vals.shape:
            raise ParameterError("col_idx and values must have equal length")
        if ci.size:
            if ci.max() >= self.cols:
                raise ParameterError("column index out of range")
            lengths = np.diff(rp.astype(np.int64))
            row_of = np.repeat(np.arange(self.rows), lengths)
            same_row = row_of[1:] == row_of[:-1]
            if np.any(same_row & (np.diff(ci.astype(np.int64)) <= 0)):
                raise ParameterError("col_idx must be strictly increasing within each row")
        if np.any(vals == 0.0):
            raise ParameterError("CSR must not store explicit zeros")

    @property
    def nnz(self):
        return int(self.values.size)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def density(self):
        return self.nnz / (self.rows * self.cols) if self.rows * self.cols else 0.0


def to_csr(m):
    """Exact conversion of a dense matrix, dropping zeros."""
    m = np.ascontiguousarray(m, dtype=np.float32)
    if m.ndim != 2:
        raise ShapeError(f"to_csr expects a matrix, got shape {m.shape}")
    nonzero = m != 0.0
    lengths = np.count_nonzero(nonzero, axis=1)
    row_ptr = np.zeros(m.shape[0] + 1, dtype=np.uint32)
    np.cumsum(lengths, out=row_ptr[1:])
    col_idx = np.nonzero(nonzero)[1].astype(np.uint32)
    values = m[nonzero]
    return CsrMatrix(m.shape[0], m.shape[1], row_ptr, col_idx, values)


def from_csr(c):
    """Densify; exact inverse of to_csr."""
    out = np.zeros((c.rows, c.cols), dtype=np.float32)
    rows = np.repeat(np.arange(c.rows), np.diff(c.row_ptr.astype(np.int64)))
    out[rows, c.col_idx.astype(np.int64)] = c.values
    return out


@njit(cache=True)
def _spmv_serial(row_ptr, col_idx, values, x, out):
    for i in range(out.shape[0]):
        acc = 0.0
        for k in range(np.int64(row_ptr[i]), np.int64(row_ptr[i + 1])):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


@njit(cache=True, parallel=True)
def _spmv_parallel(row_ptr, col_idx, values, x, out):
    for i in prange(out.shape[0]):
        acc = 0.0
        for k in range(np.int64(row_ptr[i]), np.int64(row_ptr[i + 1])):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


def spmv(m, x, parallel=False):
    """Sparse matrix-vector product; matches the dense product on the
    densified matrix to within rounding."""
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 1:
        raise ShapeError(f"spmv expects a vector, got shape {x.shape}")
    if m.cols != x.shape[0]:
        raise ShapeError(f"spmv dimension mismatch: {m.shape} x ({x.shape[0]},)")
    out = np.empty(m.rows, dtype=np.float32)
    kernel = _spmv_parallel if parallel else _spmv_serial
    kernel(m.row_ptr, m.col_idx, m.values, x, out)
    return out


def warm_up_kernels():
    """Trigger JIT compilation ahead of any timed region."""
    c = to_csr(np.eye(2, dtype=np.float32))
    spmv(c, np.ones(2, dtype=np.float32))
    spmv(c, np.ones(2, dtype=np.float32), parallel=True)


def _matvec(w, x):
    return spmv(w, x) if isinstance(w, CsrMatrix) else w @ x


def _weight_shape(w):
    return w.shape


@dataclass
class SparseModel:
    """Inference-side model; each weight is dense or CSR.

    `params` maps the dense model's parameter names to either a float32
    ndarray or a CsrMatrix.  `layer_types` carries the pruning
    classification per name (needed by the serialized format).
    """

    cell: str
    activation: str
    output_mode: str
    input_dim: int
    hidden_size: int
    depth: int
    output_dim: int
    params: dict
    layer_types: dict

    @classmethod
    def from_dense(cls, model, min_sparsity=0.5):
        """Convert a trained model; 2-D prunable weights whose zero
        fraction exceeds `min_sparsity` become CSR, the rest stay dense."""
        cell = "gru" if isinstance(model.layers[0], GruLayer) else "rnn"
        params = {}
        layer_types = {}
        for spec in model.param_specs():
            a = spec.array
            layer_types[spec.name] = spec.layer_type
            if spec.prunable and a.ndim == 2 and np.mean(a == 0.0) > min_sparsity:
                params[spec.name] = to_csr(a)
            else:
                params[spec.name] = np.array(a, dtype=np.float32)
        return cls(
            cell=cell,
            activation=model.layers[0].activation,
            output_mode=model.output_mode,
            input_dim=model.input_dim,
            hidden_size=model.hidden_size,
            depth=len(model.layers),
            output_dim=model.output_dim,
            params=params,
            layer_types=layer_types,
        )

    def to_dense(self):
        """Rebuild an equivalent dense RecurrentModel."""
        arrays = {
            name: (from_csr(v) if isinstance(v, CsrMatrix) else np.array(v))
            for name, v in self.params.items()
        }
        layers = []
        for i in range(self.depth):
            if self.cell == "gru":
                p = f"gru{i}"
                layers.append(
                    GruLayer(
                        {g: arrays[f"{p}.{g}_in"] for g in GruLayer.GATES},
                        {g: arrays[f"{p}.{g}_rec"] for g in GruLayer.GATES},
                        {g: arrays[f"{p}.{g}_bias"] for g in GruLayer.GATES},
                    )
                )
            else:
                p = f"rnn{i}"
                layers.append(
                    RnnLayer(
                        arrays[f"{p}.w_in"], arrays[f"{p}.w_rec"], arrays[f"{p}.bias"],
                        self.activation,
                    )
                )
        head = FcLayer(arrays["out.weight"], arrays["out.bias"])
        return RecurrentModel(layers, head, self.output_mode)

    def forward(self, inputs):
        return sparse_forward(self, inputs)


def _act(name, z):
    if name == "clipped_relu":
        return np.minimum(np.maximum(z, 0.0), RELU_CLIP)
    return np.tanh(z)


def sparse_forward(model, inputs):
    """Minibatch-1 forward pass over a (T, input_dim) sequence."""
    xs = np.ascontiguousarray(inputs, dtype=np.float32)
    if xs.ndim != 2:
        raise ShapeError(f"sparse_forward expects (T, input_dim), got shape {xs.shape}")
    if xs.shape[1] != model.input_dim:
        raise ShapeError(
            f"input dim {xs.shape[1]} does not match model input dim {model.input_dim}"
        )
    t_len = xs.shape[0]
    p = model.params
    states = xs
    for i in range(model.depth):
        prefix = f"{model.cell}{i}"
        h = np.zeros(model.hidden_size, dtype=np.float32)
        hs = np.empty((t_len, model.hidden_size), dtype=np.float32)
        for t in range(t_len):
            x = states[t]
            if model.cell == "gru":
                z = sigmoid(_matvec(p[f"{prefix}.update_in"], x)
                            + _matvec(p[f"{prefix}.update_rec"], h)
                            + p[f"{prefix}.update_bias"])
                r = sigmoid(_matvec(p[f"{prefix}.reset_in"], x)
                            + _matvec(p[f"{prefix}.reset_rec"], h)
                            + p[f"{prefix}.reset_bias"])
                c = np.tanh(_matvec(p[f"{prefix}.cand_in"], x)
                            + _matvec(p[f"{prefix}.cand_rec"], r * h)
                            + p[f"{prefix}.cand_bias"])
                h = (1.0 - z) * h + z * c
            else:
                h = _act(
                    model.activation,
                    _matvec(p[f"{prefix}.w_in"], x)
                    + _matvec(p[f"{prefix}.w_rec"], h)
                    + p[f"{prefix}.bias"],
                )
            hs[t] = h
        states = hs
    w_out, b_out = p["out.weight"], p["out.bias"]
    if model.output_mode == "last":
        return _matvec(w_out, states[-1]) + b_out
    out = np.empty((t_len, b_out.shape[0]), dtype=np.float32)
    for t in range(t_len):
        out[t] = _matvec(w_out, states[t]) + b_out
    return out
