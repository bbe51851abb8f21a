"""Independent oracles shared by the test modules.

These deliberately re-derive results by brute force (naive summation,
central finite differences, explicit sorting) so they stay independent
of the library code paths they check.
"""

import numpy as np

from gradprune.models import build_model


def naive_gemv(m, x):
    """Triple-checked summation oracle in float64."""
    rows, cols = m.shape
    out = np.zeros(rows, dtype=np.float64)
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc += float(m[i, j]) * float(x[j])
        out[i] = acc
    return out


def finite_difference_grads(model, xs, targets, loss_fn, step=1e-3):
    """Central finite differences over every parameter (float64 model)."""

    def loss_at():
        out, _ = model.forward(xs)
        return loss_fn(out, targets)[0]

    grads = {}
    for name, arr in model.params().items():
        flat = arr.ravel()
        g = np.zeros(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_at()
            flat[i] = orig - step
            down = loss_at()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * step)
        grads[name] = g.reshape(arr.shape)
    return grads


def max_relative_grad_error(analytic, numeric):
    """Worst elementwise relative error between two gradient dicts.

    Entries far below the gradient's own scale are compared against
    1% of the largest magnitude instead, because the finite-difference
    oracle's truncation error (~step^2) cannot resolve finer relative
    differences there.
    """
    worst = 0.0
    for name, n in numeric.items():
        a = analytic[name].astype(np.float64)
        floor = max(0.01 * float(np.max(np.abs(n))), 1e-8)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_f64_model(rng, cell, input_dim, hidden, depth, output_dim,
                     activation="tanh", output_mode="last"):
    return build_model(
        rng, cell, input_dim, hidden, depth, output_dim,
        activation=activation, output_mode=output_mode, dtype=np.float64,
    )
