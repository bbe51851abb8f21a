"""Gradual magnitude pruning: masks, threshold schedule, calibration.

The schedule prunes during training with a monotonically non-decreasing
magnitude threshold.  Every weight carries a binary keep-mask (1 = keep,
0 = pruned).  After each optimizer step the masks are multiplied into
the weights; at regular intervals (every `freq` iterations strictly
inside the (start_itr, end_itr) window) the threshold is recomputed and
the masks are rebuilt from the current, post-optimizer-step weight
values.  Because the rebuild looks at the raw updated values *before*
re-masking, a pruned weight whose accumulated updates exceed the current
threshold re-enters the kept set (regrowth).

The threshold grows along a two-slope piecewise-linear ramp:

    start_itr < itr < ramp_itr:  eps = start_slope * (itr - start_itr + 1) / freq
    ramp_itr <= itr < end_itr:   eps = (start_slope * (ramp_itr - start_itr + 1)
                                        + ramp_slope * (itr - ramp_itr + 1)) / freq

evaluated only on multiples of freq; between updates (and after end_itr)
the threshold holds its last value.  Choosing

    start_slope = 2 * q * freq
                  / (2 * (ramp_itr - start_itr) + 3 * (end_itr - ramp_itr))

with ramp_slope = 1.5 * start_slope makes the terminal threshold land at
q, the calibration magnitude (by default the 90th-percentile absolute
weight of a briefly pre-trained dense model), so the final sparsity
tracks the calibration percentile.

One hyper-parameter set (and hence one threshold trajectory) exists per
layer *type*: "recurrent" covers input and recurrent matrices of
RNN/GRU layers, "linear" covers fully connected weights.  Biases are
never pruned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MonotonicityError, ParameterError

LAYER_TYPES = ("recurrent", "linear")


@dataclass(frozen=True)
class PruneHyperParams:
    """Schedule knobs for one layer type."""

    start_itr: int
    ramp_itr: int
    end_itr: int
    start_slope: float
    ramp_slope: float
    freq: int

    def __post_init__(self):
        if not self.start_itr < self.ramp_itr < self.end_itr:
            raise ParameterError(
                "iteration breakpoints must satisfy start_itr < ramp_itr < end_itr, "
                f"got {self.start_itr} / {self.ramp_itr} / {self.end_itr}"
            )
        if self.start_itr < 0:
            raise ParameterError(f"start_itr must be >= 0, got {self.start_itr}")
        if self.start_slope < 0:
            raise ParameterError(f"start_slope must be >= 0, got {self.start_slope}")
        if self.ramp_slope < self.start_slope:
            raise ParameterError(
                f"ramp_slope ({self.ramp_slope}) must be >= start_slope ({self.start_slope})"
            )
        if self.freq < 1:
            raise ParameterError(f"freq must be >= 1, got {self.freq}")


@dataclass
class ThresholdState:
    """Current threshold per layer type; updates may only increase it."""

    epsilons: dict = field(default_factory=lambda: {t: 0.0 for t in LAYER_TYPES})
    last_update_itr: int = -1

    def advance(self, new_epsilons, current_itr):
        for layer_type, eps in new_epsilons.items():
            if eps < self.epsilons.get(layer_type, 0.0):
                raise MonotonicityError(
                    f"threshold for {layer_type!r} would decrease: "
                    f"{self.epsilons[layer_type]} -> {eps} at iteration {current_itr}"
                )
        self.epsilons.update(new_epsilons)
        self.last_update_itr = current_itr


@dataclass
class MaskedParameter:
    """A parameter array plus its keep-mask.

    `weights` aliases the model's own array, so applying the mask is
    visible to the model immediately.  Non-prunable parameters (biases)
    keep an all-ones mask forever.
    """

    name: str
    weights: np.ndarray
    layer_type: str
    prunable: bool = True
    mask: np.ndarray = None

    def __post_init__(self):
        if self.layer_type not in LAYER_TYPES:
            raise ParameterError(f"unknown layer type {self.layer_type!r}")
        if self.mask is None:
            self.mask = np.ones_like(self.weights)
        elif self.mask.shape != self.weights.shape:
            raise ParameterError(
                f"mask shape {self.mask.shape} != weight shape {self.weights.shape}"
            )


def masked_parameters(model):
    """Wrap every parameter of a model, flagging biases as non-prunable."""
    return [
        MaskedParameter(s.name, s.array, s.layer_type, s.prunable)
        for s in model.param_specs()
    ]


@dataclass(frozen=True)
class CalibrationResult:
    """Computed schedule slopes for a measured weight magnitude q."""

    q: float
    start_slope: float
    ramp_slope: float

    def __post_init__(self):
        if self.q < 0:
            raise ParameterError(f"q must be >= 0, got {self.q}")
        if self.start_slope > 0:
            factor = self.ramp_slope / self.start_slope
            if not 1.5 - 1e-9 <= factor <= 2.0 + 1e-9:
                raise ParameterError(
                    f"ramp_slope/start_slope must be in [1.5, 2.0], got {factor}"
                )
        elif self.ramp_slope != 0.0:
            raise ParameterError("ramp_slope must be 0 when start_slope is 0")


def percentile_q(weights, pct):
    """Nearest-rank percentile of |w| over the concatenated matrices.

    Sorts all magnitudes ascending and returns the element at index
    ceil(pct * n) - 1.
    """
    if not 0.0 < pct <= 1.0:
        raise ParameterError(f"pct must be in (0, 1], got {pct}")
    arrays = [np.asarray(w).ravel() for w in weights]
    if not arrays or sum(a.size for a in arrays) == 0:
        raise ParameterError("percentile_q requires a non-empty weight collection")
    mags = np.sort(np.abs(np.concatenate(arrays)))
    n = mags.size
    # 1e-9 guards against float noise in pct * n when it is an exact integer.
    rank = int(math.ceil(pct * n - 1e-9))
    return float(mags[max(rank, 1) - 1])


def compute_start_slope(q, start_itr, ramp_itr, end_itr, freq):
    """Initial threshold slope that makes the terminal threshold land at q
    (assuming ramp_slope = 1.5 * start_slope)."""
    if not start_itr < ramp_itr < end_itr:
        raise ParameterError(
            f"need start_itr < ramp_itr < end_itr, got {start_itr} / {ramp_itr} / {end_itr}"
        )
    if freq < 1:
        raise ParameterError(f"freq must be >= 1, got {freq}")
    if q < 0:
        raise ParameterError(f"q must be >= 0, got {q}")
    denom = 2 * (ramp_itr - start_itr) + 3 * (end_itr - ramp_itr)
    return 2.0 * q * freq / denom


def default_hyperparams(total_iters, iters_per_epoch, q, ramp_factor=1.5, freq=100):
    """Heuristic schedule: start pruning at the second epoch, steepen at
    25% of the run, stop adding sparsity at 50%."""
    if iters_per_epoch < 1 or total_iters < 4 * iters_per_epoch:
        raise ParameterError(
            f"need at least 4 epochs of training, got {total_iters} total / {iters_per_epoch} per epoch"
        )
    if iters_per_epoch < freq:
        raise ParameterError(
            f"iters_per_epoch ({iters_per_epoch}) must be >= freq ({freq})"
        )
    if not 1.5 <= ramp_factor <= 2.0:
        raise ParameterError(f"ramp_factor must be in [1.5, 2.0], got {ramp_factor}")
    start_itr = iters_per_epoch
    ramp_itr = int(0.25 * total_iters)
    end_itr = int(0.50 * total_iters)
    if not start_itr < ramp_itr < end_itr:
        raise ParameterError(
            f"degenerate schedule: start={start_itr}, ramp={ramp_itr}, end={end_itr}"
        )
    start_slope = compute_start_slope(q, start_itr, ramp_itr, end_itr, freq)
    return PruneHyperParams(
        start_itr=start_itr,
        ramp_itr=ramp_itr,
        end_itr=end_itr,
        start_slope=start_slope,
        ramp_slope=ramp_factor * start_slope,
        freq=freq,
    )


def threshold_at(hp, current_itr):
    """Threshold in effect at `current_itr` (scalar or array of iterations).

    Updates fire on multiples of freq strictly inside (start_itr,
    end_itr); elsewhere the last value holds, 0.0 before the first
    update, frozen after the final one.
    """
    itr = np.asarray(current_itr, dtype=np.int64)
    f = hp.freq
    last_boundary = ((hp.end_itr - 1) // f) * f
    u = np.minimum((itr // f) * f, last_boundary)
    ramp1 = hp.start_slope * (u - hp.start_itr + 1) / f
    ramp2 = (
        hp.start_slope * (hp.ramp_itr - hp.start_itr + 1)
        + hp.ramp_slope * (u - hp.ramp_itr + 1)
    ) / f
    eps = np.where(u < hp.ramp_itr, ramp1, ramp2)
    eps = np.where(u > hp.start_itr, eps, 0.0)
    if np.isscalar(current_itr) or np.ndim(current_itr) == 0:
        return float(eps)
    return eps


@dataclass(frozen=True)
class MaskUpdate:
    newly_pruned: int
    regrown: int
    pruned_total: int


def update_masks(params, epsilons, state=None):
    """Rebuild keep-masks from current weight magnitudes.

    `epsilons` maps layer type to its threshold.  When `state` is given
    it is advanced first, which rejects any decrease.  Masks are set to
    1 where |w| >= eps; weights themselves are not modified here.
    """
    if state is not None:
        state.advance(epsilons, state.last_update_itr)
    newly_pruned = regrown = pruned_total = 0
    for p in params:
        if not p.prunable:
            continue
        eps = epsilons.get(p.layer_type)
        if eps is None:
            continue
        new_mask = (np.abs(p.weights) >= eps).astype(p.weights.dtype)
        newly_pruned += int(np.count_nonzero((p.mask != 0) & (new_mask == 0)))
        regrown += int(np.count_nonzero((p.mask == 0) & (new_mask != 0)))
        p.mask = new_mask
        pruned_total += p.mask.size - int(np.count_nonzero(p.mask))
    return MaskUpdate(newly_pruned, regrown, pruned_total)


def apply_mask(param):
    """Zero pruned weights in place: weights <- weights * mask."""
    param.weights *= param.mask
    return param.weights


@dataclass(frozen=True)
class ScheduleRow:
    iteration: int
    epsilon_recurrent: float
    epsilon_linear: float
    pruned_count: int
    regrown_count: int
    sparsity_overall: float


class GradualPruner:
    """Drives the mask lifecycle; call step() once per training iteration,
    after the optimizer update."""

    def __init__(self, hyperparams):
        if isinstance(hyperparams, PruneHyperParams):
            hyperparams = {t: hyperparams for t in LAYER_TYPES}
        self.hyperparams = dict(hyperparams)
        for layer_type in self.hyperparams:
            if layer_type not in LAYER_TYPES:
                raise ParameterError(f"unknown layer type {layer_type!r}")
        self.state = ThresholdState()
        self.schedule_log = []

    def step(self, params, current_itr):
        updated = False
        new_eps = {}
        for layer_type, hp in self.hyperparams.items():
            if (
                hp.start_itr < current_itr < hp.end_itr
                and current_itr % hp.freq == 0
            ):
                new_eps[layer_type] = threshold_at(hp, current_itr)
                updated = True
        if updated:
            self.state.advance(new_eps, current_itr)
            change = update_masks(params, self.state.epsilons)
            report = sparsity_report(params)
            self.schedule_log.append(
                ScheduleRow(
                    iteration=current_itr,
                    epsilon_recurrent=self.state.epsilons.get("recurrent", 0.0),
                    epsilon_linear=self.state.epsilons.get("linear", 0.0),
                    pruned_count=change.pruned_total,
                    regrown_count=change.regrown,
                    sparsity_overall=report.overall,
                )
            )
        for p in params:
            apply_mask(p)
        return self.state


def pruning_step(pruner, params, current_itr):
    return pruner.step(params, current_itr)


def hard_prune(params, target_remaining=None, threshold=None):
    """One-shot magnitude prune.

    Either keep exactly the `target_remaining` largest-magnitude
    prunable weights (global ranking, ties broken toward the earlier
    index) or keep everything with |w| >= threshold.  Sets the masks in
    place and returns them; the caller is responsible for applying the
    masks from then on.
    """
    if (target_remaining is None) == (threshold is None):
        raise ParameterError("pass exactly one of target_remaining or threshold")
    prunable = [p for p in params if p.prunable]
    if threshold is not None:
        if threshold < 0:
            raise ParameterError(f"threshold must be >= 0, got {threshold}")
        for p in prunable:
            p.mask = (np.abs(p.weights) >= threshold).astype(p.weights.dtype)
    else:
        total = sum(p.weights.size for p in prunable)
        if not 0 < target_remaining <= total:
            raise ParameterError(
                f"target_remaining must be in (0, {total}], got {target_remaining}"
            )
        mags = np.concatenate([np.abs(p.weights).ravel() for p in prunable])
        order = np.argsort(-mags, kind="stable")
        keep_flat = np.zeros(total, dtype=bool)
        keep_flat[order[:target_remaining]] = True
        offset = 0
        for p in prunable:
            n = p.weights.size
            p.mask = keep_flat[offset:offset + n].reshape(p.weights.shape).astype(p.weights.dtype)
            offset += n
    return [p.mask for p in params]


def count_pruned(params):
    """Number of currently pruned entries across prunable parameters."""
    return sum(
        p.mask.size - int(np.count_nonzero(p.mask)) for p in params if p.prunable
    )


def count_prunable(params):
    return sum(p.weights.size for p in params if p.prunable)


@dataclass(frozen=True)
class SparsityReport:
    per_layer: dict        # layer name -> zero fraction over that layer's masks
    overall: float         # zeros over every parameter, biases included
    total_params: int
    params_remaining: int


def sparsity_report(params):
    layer_zeros = {}
    layer_sizes = {}
    zeros = 0
    total = 0
    for p in params:
        layer = p.name.split(".")[0]
        z = p.mask.size - int(np.count_nonzero(p.mask))
        layer_zeros[layer] = layer_zeros.get(layer, 0) + z
        layer_sizes[layer] = layer_sizes.get(layer, 0) + p.mask.size
        zeros += z
        total += p.mask.size
    per_layer = {k: layer_zeros[k] / layer_sizes[k] for k in layer_zeros}
    overall = zeros / total if total else 0.0
    return SparsityReport(per_layer, overall, total, total - zeros)


SCHEDULE_COLUMNS = (
    "iteration",
    "epsilon_recurrent",
    "epsilon_linear",
    "pruned_count",
    "regrown_count",
    "sparsity_overall",
)


def write_schedule_csv(rows, path):
    """Schedule dump, one row per threshold update."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCHEDULE_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.iteration,
                    f"{r.epsilon_recurrent:.8g}",
                    f"{r.epsilon_linear:.8g}",
                    r.pruned_count,
                    r.regrown_count,
                    f"{r.sparsity_overall:.8g}",
                ]
            )
