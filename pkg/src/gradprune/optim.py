"""Nesterov-momentum SGD and gradient clipping.

The update follows the common momentum-buffer formulation

    v <- mu * v + g
    p <- p - lr * (g + mu * v)

which reduces to plain SGD at mu = 0.  Velocity buffers are created
lazily, one per parameter name, and are never touched by pruning masks:
a masked weight keeps accumulating velocity from its dense gradients,
which is what lets it grow back over the pruning threshold.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError


class NesterovSgd:
    def __init__(self, learning_rate, momentum=0.9):
        if learning_rate < 0:
            raise ParameterError(f"learning_rate must be >= 0, got {learning_rate}")
        if not 0.0 <= momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {momentum}")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocities = {}

    def step(self, params, grads):
        """Update every parameter in place; params/grads are name -> array."""
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
            v = self.velocities.get(name)
            if v is None:
                v = np.zeros_like(p)
                self.velocities[name] = v
            v *= self.momentum
            v += g
            p -= (self.learning_rate * (g + self.momentum * v)).astype(p.dtype)
        return params


def nesterov_step(opt, params, grads):
    return opt.step(params, grads)


def clip_grad_norm(grads, max_norm):
    """Scale all gradients in place so their global L2 norm is <= max_norm."""
    if max_norm is None or max_norm <= 0:
        return 1.0
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
        return scale
    return 1.0
