"""Recurrent layers with exact backpropagation through time.

Layers operate on step-major batches: an input sequence is an array of
shape (T, B, D) and hidden states are (T, B, H).  A forward pass returns
the hidden states together with an opaque cache holding everything the
matching backward pass needs; gradients are computed densely for every
parameter, including weights that a pruning mask currently zeroes.

The GRU uses the convention

    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

with update gate z, reset gate r and candidate c; a saturated-low update
gate therefore carries the previous state through unchanged.  Tests and
the serialized model format both depend on this convention.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ShapeError, StaleCacheError
from .tensor import clipped_relu, clipped_relu_grad, sigmoid, tanh

ACTIVATIONS = {
    "tanh": (tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "clipped_relu": (clipped_relu, clipped_relu_grad),
}


class ParamSpec(NamedTuple):
    """One named parameter array plus its pruning classification."""

    name: str
    array: np.ndarray
    layer_type: str  # "recurrent" or "linear"
    prunable: bool


class Cache(NamedTuple):
    owner: object
    data: dict


def _check_cache(layer, cache):
    if not isinstance(cache, Cache) or cache.owner is not layer:
        raise StaleCacheError("backward called with a cache from a different forward pass")
    return cache.data


def _init_weight(rng, out_dim, in_dim, dtype):
    bound = 1.0 / np.sqrt(in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim)).astype(dtype)


def _as_steps(xs):
    """Coerce (T, D) or (T, B, D) input to (T, B, D); report if it was batched."""
    xs = np.asarray(xs)
    if xs.ndim == 2:
        return xs[:, None, :], False
    if xs.ndim == 3:
        return xs, True
    raise ShapeError(f"expected input of shape (T, D) or (T, B, D), got {xs.shape}")


class RnnLayer:
    """Vanilla recurrent layer: h_t = act(W_in x_t + W_rec h_{t-1} + b)."""

    def __init__(self, input_weights, recurrent_weights, bias, activation="tanh"):
        h, d = input_weights.shape
        if recurrent_weights.shape != (h, h):
            raise ShapeError(
                f"recurrent weights must be ({h}, {h}), got {recurrent_weights.shape}"
            )
        if bias.shape != (h,):
            raise ShapeError(f"bias must be ({h},), got {bias.shape}")
        if activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {activation!r}")
        self.input_weights = input_weights
        self.recurrent_weights = recurrent_weights
        self.bias = bias
        self.activation = activation
        self.input_dim = d
        self.hidden_size = h

    @classmethod
    def init(cls, rng, input_dim, hidden_size, activation="tanh", dtype=np.float32):
        return cls(
            _init_weight(rng, hidden_size, input_dim, dtype),
            _init_weight(rng, hidden_size, hidden_size, dtype),
            np.zeros(hidden_size, dtype=dtype),
            activation,
        )

    def param_specs(self, prefix):
        return [
            ParamSpec(f"{prefix}.w_in", self.input_weights, "recurrent", True),
            ParamSpec(f"{prefix}.w_rec", self.recurrent_weights, "recurrent", True),
            ParamSpec(f"{prefix}.bias", self.bias, "recurrent", False),
        ]

    def forward(self, xs, h0=None):
        """Run the recurrence over (T, B, D) inputs; returns ((T, B, H), cache)."""
        if xs.ndim != 3:
            raise ShapeError(f"expected (T, B, D) input, got shape {xs.shape}")
        t_len, batch, d = xs.shape
        if t_len == 0:
            raise ShapeError("input sequence is empty")
        if d != self.input_dim:
            raise ShapeError(f"input dim {d} does not match layer input dim {self.input_dim}")
        if h0 is None:
            h0 = np.zeros((batch, self.hidden_size), dtype=xs.dtype)
        act, _ = ACTIVATIONS[self.activation]
        hs = np.empty((t_len, batch, self.hidden_size), dtype=xs.dtype)
        zs = np.empty_like(hs)
        h = h0
        for t in range(t_len):
            z = xs[t] @ self.input_weights.T + h @ self.recurrent_weights.T + self.bias
            h = act(z)
            zs[t] = z
            hs[t] = h
        return hs, Cache(self, {"xs": xs, "h0": h0, "zs": zs, "hs": hs})

    def backward(self, cache, d_hs):
        """BPTT.  `d_hs` is dLoss/d(hs); returns (grads, dLoss/d(xs))."""
        data = _check_cache(self, cache)
        xs, h0, zs, hs = data["xs"], data["h0"], data["zs"], data["hs"]
        if d_hs.shape != hs.shape:
            raise ShapeError(f"output gradient shape {d_hs.shape} != {hs.shape}")
        _, act_grad = ACTIVATIONS[self.activation]
        g_in = np.zeros_like(self.input_weights)
        g_rec = np.zeros_like(self.recurrent_weights)
        g_bias = np.zeros_like(self.bias)
        d_xs = np.empty_like(xs)
        dh_next = np.zeros_like(hs[0])
        for t in range(xs.shape[0] - 1, -1, -1):
            dz = (d_hs[t] + dh_next) * act_grad(zs[t])
            h_prev = hs[t - 1] if t > 0 else h0
            g_in += dz.T @ xs[t]
            g_rec += dz.T @ h_prev
            g_bias += dz.sum(axis=0)
            d_xs[t] = dz @ self.input_weights
            dh_next = dz @ self.recurrent_weights
        return {"w_in": g_in, "w_rec": g_rec, "bias": g_bias}, d_xs


class GruLayer:
    """Gated recurrent layer (update gate z, reset gate r, candidate c)."""

    GATES = ("update", "reset", "cand")

    def __init__(self, input_weights, recurrent_weights, biases):
        # input_weights/recurrent_weights/biases: dicts keyed by gate name.
        h, d = input_weights["update"].shape
        for g in self.GATES:
            if input_weights[g].shape != (h, d):
                raise ShapeError(f"{g} input weights must be ({h}, {d})")
            if recurrent_weights[g].shape != (h, h):
                raise ShapeError(f"{g} recurrent weights must be ({h}, {h})")
            if biases[g].shape != (h,):
                raise ShapeError(f"{g} bias must be ({h},)")
        self.input_weights = input_weights
        self.recurrent_weights = recurrent_weights
        self.biases = biases
        self.input_dim = d
        self.hidden_size = h
        self.activation = "tanh"

    @classmethod
    def init(cls, rng, input_dim, hidden_size, dtype=np.float32):
        w = {g: _init_weight(rng, hidden_size, input_dim, dtype) for g in cls.GATES}
        u = {g: _init_weight(rng, hidden_size, hidden_size, dtype) for g in cls.GATES}
        b = {g: np.zeros(hidden_size, dtype=dtype) for g in cls.GATES}
        return cls(w, u, b)

    def param_specs(self, prefix):
        specs = []
        for g in self.GATES:
            specs.append(ParamSpec(f"{prefix}.{g}_in", self.input_weights[g], "recurrent", True))
            specs.append(
                ParamSpec(f"{prefix}.{g}_rec", self.recurrent_weights[g], "recurrent", True)
            )
            specs.append(ParamSpec(f"{prefix}.{g}_bias", self.biases[g], "recurrent", False))
        return specs

    def forward(self, xs, h0=None):
        if xs.ndim != 3:
            raise ShapeError(f"expected (T, B, D) input, got shape {xs.shape}")
        t_len, batch, d = xs.shape
        if t_len == 0:
            raise ShapeError("input sequence is empty")
        if d != self.input_dim:
            raise ShapeError(f"input dim {d} does not match layer input dim {self.input_dim}")
        if h0 is None:
            h0 = np.zeros((batch, self.hidden_size), dtype=xs.dtype)
        w, u, b = self.input_weights, self.recurrent_weights, self.biases
        hs = np.empty((t_len, batch, self.hidden_size), dtype=xs.dtype)
        gates = []
        h = h0
        for t in range(t_len):
            x = xs[t]
            zt = sigmoid(x @ w["update"].T + h @ u["update"].T + b["update"])
            rt = sigmoid(x @ w["reset"].T + h @ u["reset"].T + b["reset"])
            rh = rt * h
            ct = tanh(x @ w["cand"].T + rh @ u["cand"].T + b["cand"])
            h = (1.0 - zt) * h + zt * ct
            gates.append((zt, rt, ct, rh))
            hs[t] = h
        return hs, Cache(self, {"xs": xs, "h0": h0, "hs": hs, "gates": gates})

    def backward(self, cache, d_hs):
        data = _check_cache(self, cache)
        xs, h0, hs, gates = data["xs"], data["h0"], data["hs"], data["gates"]
        if d_hs.shape != hs.shape:
            raise ShapeError(f"output gradient shape {d_hs.shape} != {hs.shape}")
        w, u = self.input_weights, self.recurrent_weights
        g_w = {g: np.zeros_like(w[g]) for g in self.GATES}
        g_u = {g: np.zeros_like(u[g]) for g in self.GATES}
        g_b = {g: np.zeros_like(self.biases[g]) for g in self.GATES}
        d_xs = np.empty_like(xs)
        dh_next = np.zeros_like(hs[0])
        for t in range(xs.shape[0] - 1, -1, -1):
            zt, rt, ct, rh = gates[t]
            h_prev = hs[t - 1] if t > 0 else h0
            dh = d_hs[t] + dh_next
            dz = dh * (ct - h_prev)
            dc = dh * zt
            dh_prev = dh * (1.0 - zt)

            dc_pre = dc * (1.0 - ct * ct)
            g_w["cand"] += dc_pre.T @ xs[t]
            g_u["cand"] += dc_pre.T @ rh
            g_b["cand"] += dc_pre.sum(axis=0)
            drh = dc_pre @ u["cand"]
            dr = drh * h_prev
            dh_prev += drh * rt

            dz_pre = dz * zt * (1.0 - zt)
            dr_pre = dr * rt * (1.0 - rt)
            for g, d_pre in (("update", dz_pre), ("reset", dr_pre)):
                g_w[g] += d_pre.T @ xs[t]
                g_u[g] += d_pre.T @ h_prev
                g_b[g] += d_pre.sum(axis=0)
            dh_prev += dz_pre @ u["update"] + dr_pre @ u["reset"]

            d_xs[t] = dc_pre @ w["cand"] + dz_pre @ w["update"] + dr_pre @ w["reset"]
            dh_next = dh_prev
        grads = {}
        for g in self.GATES:
            grads[f"{g}_in"] = g_w[g]
            grads[f"{g}_rec"] = g_u[g]
            grads[f"{g}_bias"] = g_b[g]
        return grads, d_xs


class FcLayer:
    """Fully connected output head: y = W x + b."""

    def __init__(self, weights, bias):
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeError(f"inconsistent head shapes {weights.shape} / {bias.shape}")
        self.weights = weights
        self.bias = bias

    @classmethod
    def init(cls, rng, input_dim, output_dim, dtype=np.float32):
        return cls(_init_weight(rng, output_dim, input_dim, dtype), np.zeros(output_dim, dtype=dtype))

    def param_specs(self, prefix):
        return [
            ParamSpec(f"{prefix}.weight", self.weights, "linear", True),
            ParamSpec(f"{prefix}.bias", self.bias, "linear", False),
        ]

    def forward(self, x):
        return x @ self.weights.T + self.bias, Cache(self, {"x": x})

    def backward(self, cache, d_y):
        data = _check_cache(self, cache)
        x = data["x"]
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = d_y.reshape(-1, d_y.shape[-1])
        grads = {"weight": dy2.T @ x2, "bias": dy2.sum(axis=0)}
        return grads, (d_y @ self.weights).reshape(x.shape)


class RecurrentModel:
    """A stack of recurrent layers plus a fully connected head.

    output_mode "last" applies the head to the final hidden state of the
    top layer (sequence-to-one); "all" applies it at every timestep.
    """

    def __init__(self, layers, head, output_mode="last"):
        if output_mode not in ("last", "all"):
            raise ShapeError(f"unknown output_mode {output_mode!r}")
        self.layers = list(layers)
        self.head = head
        self.output_mode = output_mode

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def hidden_size(self):
        return self.layers[0].hidden_size

    @property
    def output_dim(self):
        return self.head.weights.shape[0]

    def param_specs(self):
        specs = []
        for i, layer in enumerate(self.layers):
            kind = "gru" if isinstance(layer, GruLayer) else "rnn"
            specs.extend(layer.param_specs(f"{kind}{i}"))
        specs.extend(self.head.param_specs("out"))
        return specs

    def params(self):
        return {s.name: s.array for s in self.param_specs()}

    def set_params(self, arrays):
        """Replace parameter arrays in place (same names and shapes)."""
        for i, layer in enumerate(self.layers):
            prefix = ("gru" if isinstance(layer, GruLayer) else "rnn") + str(i)
            if isinstance(layer, GruLayer):
                for g in GruLayer.GATES:
                    layer.input_weights[g] = arrays[f"{prefix}.{g}_in"]
                    layer.recurrent_weights[g] = arrays[f"{prefix}.{g}_rec"]
                    layer.biases[g] = arrays[f"{prefix}.{g}_bias"]
            else:
                layer.input_weights = arrays[f"{prefix}.w_in"]
                layer.recurrent_weights = arrays[f"{prefix}.w_rec"]
                layer.bias = arrays[f"{prefix}.bias"]
        self.head.weights = arrays["out.weight"]
        self.head.bias = arrays["out.bias"]

    def num_params(self):
        return sum(s.array.size for s in self.param_specs())

    def forward(self, xs):
        xs = np.asarray(xs)
        if xs.ndim != 3:
            raise ShapeError(f"expected (T, B, D) input, got shape {xs.shape}")
        caches = []
        h = xs
        for layer in self.layers:
            h, cache = layer.forward(h)
            caches.append(cache)
        if self.output_mode == "last":
            out, head_cache = self.head.forward(h[-1])
        else:
            out, head_cache = self.head.forward(h)
        return out, Cache(self, {"layer_caches": caches, "head_cache": head_cache, "hs_shape": h.shape})

    def backward(self, cache, d_out):
        data = _check_cache(self, cache)
        head_grads, d_h = self.head.backward(data["head_cache"], d_out)
        if self.output_mode == "last":
            d_hs = np.zeros(data["hs_shape"], dtype=d_h.dtype)
            d_hs[-1] = d_h
        else:
            d_hs = d_h
        grads = {f"out.{k}": v for k, v in head_grads.items()}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            kind = "gru" if isinstance(layer, GruLayer) else "rnn"
            layer_grads, d_hs = layer.backward(data["layer_caches"][i], d_hs)
            for k, v in layer_grads.items():
                grads[f"{kind}{i}.{k}"] = v
        return grads


def build_model(rng, cell, input_dim, hidden_size, depth, output_dim,
                activation="tanh", output_mode="last", dtype=np.float32):
    """Construct a freshly initialized model; weights are uniform +-1/sqrt(fan_in)."""
    if cell not in ("rnn", "gru"):
        raise ShapeError(f"unknown cell type {cell!r}")
    layers = []
    d = input_dim
    for _ in range(depth):
        if cell == "rnn":
            layers.append(RnnLayer.init(rng, d, hidden_size, activation, dtype))
        else:
            layers.append(GruLayer.init(rng, d, hidden_size, dtype))
        d = hidden_size
    head = FcLayer.init(rng, hidden_size, output_dim, dtype)
    return RecurrentModel(layers, head, output_mode)


def rnn_forward(layer, inputs, h0=None):
    """Single-sequence convenience wrapper; accepts (T, D) or (T, B, D)."""
    xs, batched = _as_steps(inputs)
    if h0 is not None and h0.ndim == 1:
        h0 = h0[None, :]
    hs, cache = layer.forward(xs, h0)
    return (hs if batched else hs[:, 0, :]), cache


gru_forward = rnn_forward  # same calling convention; dispatches on the layer


def backprop(model, cache, loss_gradient):
    """Exact BPTT gradients for every parameter of `model`."""
    return model.backward(cache, loss_gradient)


def mse_loss(pred, target):
    """Mean squared error; returns (loss, dLoss/dpred)."""
    diff = pred - np.asarray(target, dtype=pred.dtype)
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff


def softmax_cross_entropy(logits, targets):
    """Mean per-position cross entropy for integer class targets.

    logits: (..., V); targets: integer array of shape logits.shape[:-1].
    Returns (loss, dLoss/dlogits).
    """
    v = logits.shape[-1]
    flat = logits.reshape(-1, v)
    t = np.asarray(targets).reshape(-1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = flat.shape[0]
    picked = probs[np.arange(n), t]
    loss = float(-np.mean(np.log(np.maximum(picked.astype(np.float64), 1e-30))))
    d = probs.copy()
    d[np.arange(n), t] -= 1.0
    d /= n
    return loss, d.reshape(logits.shape).astype(logits.dtype)
