"""Experiment driver: training loops, calibration, metrics and run outputs.

A run is deterministic given (config, seed): the master seed is split
into independent streams for weight init, training batches and
validation batches, and nothing else consumes randomness.  Paired
dense / gradual / hard runs are built from one config by replacing only
the pruning section, so every other hyper-parameter is shared by
construction.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, DivergenceError
from .models import build_model, mse_loss, softmax_cross_entropy
from .optim import NesterovSgd, clip_grad_norm
from .pruning import (
    CalibrationResult,
    GradualPruner,
    PruneHyperParams,
    ScheduleRow,
    apply_mask,
    count_pruned,
    count_prunable,
    default_hyperparams,
    hard_prune,
    masked_parameters,
    percentile_q,
    sparsity_report,
    write_schedule_csv,
)
from .sparse import SparseModel
from .serialize import save_model
from .tasks import generate_batch, make_task


@dataclass
class MetricsRecord:
    iteration: int
    epoch: int
    train_loss: float
    val_loss: float | None
    eps_recurrent: float
    eps_linear: float
    sparsity_overall: float
    params_remaining: int
    wall_seconds: float
    layer_sparsity: dict


@dataclass
class TrainResult:
    model: object
    masked_params: list
    metrics: list
    schedule_rows: list
    final_train_loss: float
    final_val_loss: float | None
    report: object               # SparsityReport
    wall_seconds: float


METRICS_BASE_COLUMNS = (
    "iteration",
    "epoch",
    "train_loss",
    "val_loss",
    "eps_recurrent",
    "eps_linear",
    "sparsity_overall",
    "params_remaining",
    "wall_seconds",
)


def _streams(seed):
    init_ss, data_ss, val_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.Generator(np.random.Philox(init_ss)),
        np.random.Generator(np.random.Philox(data_ss)),
        np.random.Generator(np.random.Philox(val_ss)),
    )


def _loss_fn(name):
    return mse_loss if name == "mse" else softmax_cross_entropy


def build_experiment(config):
    """Construct (task, model, loss_fn, data_rng, val_batches) for a config."""
    task = make_task(config.task.variant, config.task.seq_len, config.batch_size)
    init_rng, data_rng, val_rng = _streams(config.seed)
    model = build_model(
        init_rng,
        config.model.cell,
        task.input_dim,
        config.model.hidden_size,
        config.model.depth,
        task.output_dim,
        activation=config.model.activation,
        output_mode=task.output_mode,
    )
    val_batches = [generate_batch(task, val_rng) for _ in range(config.val_batches)]
    return task, model, _loss_fn(task.loss), data_rng, val_batches


def evaluate(model, batches, loss_fn):
    """Mean loss over a list of (inputs, targets) batches."""
    total = 0.0
    for xs, targets in batches:
        out, _ = model.forward(xs)
        loss, _ = loss_fn(out, targets)
        total += loss
    return total / len(batches)


def fit_loop(model, batch_fn, loss_fn, *, total_iters, iters_per_epoch, optimizer,
             clip_norm, freq, pruner=None, hard_at=None, hard_target_remaining=None,
             val_fn=None, masked_params=None):
    """Run the training loop; pruning hooks fire after each optimizer step.

    `batch_fn(itr)` yields the training batch for an iteration; `val_fn`
    (if given) is called at each epoch boundary.  Raises DivergenceError
    as soon as the batch loss stops being finite.
    """
    params = masked_params if masked_params is not None else masked_parameters(model)
    param_arrays = model.params()
    metrics = []
    schedule_rows = []
    loss_sum = 0.0
    loss_count = 0
    last_finite = -1
    last_loss = float("nan")
    val_loss = None
    hard_done = False
    t0 = time.perf_counter()

    for itr in range(total_iters):
        xs, targets = batch_fn(itr)
        out, cache = model.forward(xs)
        loss, d_out = loss_fn(out, targets)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss at iteration {itr} "
                f"(last finite iteration: {last_finite})",
                last_finite,
            )
        last_finite = itr
        last_loss = loss
        loss_sum += loss
        loss_count += 1

        grads = model.backward(cache, d_out)
        clip_grad_norm(grads, clip_norm)
        optimizer.step(param_arrays, grads)

        if pruner is not None:
            pruner.step(params, itr)
        elif hard_at is not None:
            if itr == hard_at and not hard_done:
                hard_prune(params, target_remaining=hard_target_remaining)
                hard_done = True
            if hard_done:
                for p in params:
                    apply_mask(p)

        on_freq = itr > 0 and itr % freq == 0
        epoch_end = (itr + 1) % iters_per_epoch == 0
        if on_freq:
            schedule_rows.append(_schedule_row(pruner, params, itr))
        if on_freq or epoch_end:
            if epoch_end and val_fn is not None:
                val_loss = val_fn()
            report = sparsity_report(params)
            eps = pruner.state.epsilons if pruner is not None else {}
            metrics.append(
                MetricsRecord(
                    iteration=itr,
                    epoch=itr // iters_per_epoch,
                    train_loss=loss_sum / loss_count,
                    val_loss=val_loss if epoch_end else None,
                    eps_recurrent=eps.get("recurrent", 0.0),
                    eps_linear=eps.get("linear", 0.0),
                    sparsity_overall=report.overall,
                    params_remaining=report.params_remaining,
                    wall_seconds=time.perf_counter() - t0,
                    layer_sparsity=dict(report.per_layer),
                )
            )
            loss_sum = 0.0
            loss_count = 0

    report = sparsity_report(params)
    return TrainResult(
        model=model,
        masked_params=params,
        metrics=metrics,
        schedule_rows=schedule_rows,
        final_train_loss=last_loss,
        final_val_loss=val_loss,
        report=report,
        wall_seconds=time.perf_counter() - t0,
    )


def _schedule_row(pruner, params, itr):
    if pruner is not None and pruner.schedule_log and pruner.schedule_log[-1].iteration == itr:
        return pruner.schedule_log[-1]
    eps = pruner.state.epsilons if pruner is not None else {}
    return ScheduleRow(
        iteration=itr,
        epsilon_recurrent=eps.get("recurrent", 0.0),
        epsilon_linear=eps.get("linear", 0.0),
        pruned_count=count_pruned(params),
        regrown_count=0,
        sparsity_overall=sparsity_report(params).overall,
    )


# ----------------------------------------------------------------- runs


def run_calibrate(config, out_dir=None):
    """Short dense pre-run, then compute the schedule from its weights.

    Returns (CalibrationResult, PruneHyperParams, path) and writes the
    calibration file consumed by gradual training runs.
    """
    warmup_cfg = dataclasses.replace(
        config.with_pruning(mode="none"), epochs=config.pruning.calibration_epochs
    )
    result = _run_loop(warmup_cfg)
    q = percentile_q(
        [p.weights for p in result.masked_params if p.prunable],
        config.pruning.percentile,
    )
    hp = default_hyperparams(
        config.total_iters,
        config.iters_per_epoch,
        q,
        ramp_factor=config.pruning.ramp_factor,
        freq=config.pruning.freq,
    )
    calib = CalibrationResult(q=q, start_slope=hp.start_slope, ramp_slope=hp.ramp_slope)
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "calibration.json")
    payload = {
        "q": q,
        "percentile": config.pruning.percentile,
        "ramp_factor": config.pruning.ramp_factor,
        "start_slope": hp.start_slope,
        "ramp_slope": hp.ramp_slope,
        "start_itr": hp.start_itr,
        "ramp_itr": hp.ramp_itr,
        "end_itr": hp.end_itr,
        "freq": hp.freq,
        "seed": config.seed,
        "calibration_epochs": config.pruning.calibration_epochs,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return calib, hp, path


def load_calibration(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read calibration file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid calibration file {path}: {exc}") from exc
    try:
        hp = PruneHyperParams(
            start_itr=data["start_itr"],
            ramp_itr=data["ramp_itr"],
            end_itr=data["end_itr"],
            start_slope=data["start_slope"],
            ramp_slope=data["ramp_slope"],
            freq=data["freq"],
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid calibration file {path}: {exc}") from exc
    return data, hp


def resolve_hyperparams(config, out_dir=None):
    """Per-layer-type schedules: explicit config overrides win, anything
    left unspecified comes from the calibration file."""
    explicit = {"recurrent": config.pruning.recurrent, "linear": config.pruning.linear}
    if all(v is not None for v in explicit.values()):
        return explicit
    path = config.pruning.calibration or os.path.join(out_dir or config.out_dir, "calibration.json")
    if not os.path.exists(path):
        raise ConfigError(
            f"gradual pruning needs a calibration file ({path}); "
            "run the calibrate subcommand first or set [pruning.recurrent]/[pruning.linear]"
        )
    _, hp = load_calibration(path)
    return {t: (explicit[t] or hp) for t in explicit}


def _run_loop(config, hyperparams=None, hard_target_remaining=None):
    task, model, loss_fn, data_rng, val_batches = build_experiment(config)
    params = masked_parameters(model)
    optimizer = NesterovSgd(config.optimizer.learning_rate, config.optimizer.momentum)
    mode = config.pruning.mode
    pruner = None
    hard_at = None
    target = None
    if mode == "gradual":
        pruner = GradualPruner(hyperparams)
    elif mode == "hard":
        hard_at = config.pruning.hard.prune_epoch * config.iters_per_epoch
        if hard_target_remaining is not None:
            target = hard_target_remaining
        elif config.pruning.hard.target_remaining > 0:
            target = config.pruning.hard.target_remaining
        else:
            prunable = count_prunable(params)
            target = max(1, round((1.0 - config.pruning.hard.target_sparsity) * prunable))
    return fit_loop(
        model,
        lambda itr: generate_batch(task, data_rng),
        loss_fn,
        total_iters=config.total_iters,
        iters_per_epoch=config.iters_per_epoch,
        optimizer=optimizer,
        clip_norm=config.optimizer.clip_norm,
        freq=config.pruning.freq,
        pruner=pruner,
        hard_at=hard_at,
        hard_target_remaining=target,
        val_fn=lambda: evaluate(model, val_batches, loss_fn),
        masked_params=params,
    )


def run_experiment(config, out_dir=None, hard_target_remaining=None):
    """Full run with artifacts: metrics.csv, schedule.csv, model.sprn.

    For gradual mode the schedule comes from explicit overrides or the
    calibration file (see resolve_hyperparams).
    """
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    hyperparams = None
    if config.pruning.mode == "gradual":
        hyperparams = resolve_hyperparams(config, out_dir)
    result = _run_loop(config, hyperparams, hard_target_remaining)
    layer_names = list(result.report.per_layer)
    write_metrics_csv(result.metrics, layer_names, os.path.join(out_dir, "metrics.csv"))
    write_schedule_csv(result.schedule_rows, os.path.join(out_dir, "schedule.csv"))
    sparse = SparseModel.from_dense(result.model)
    save_model(sparse, os.path.join(out_dir, "model.sprn"))
    return result


def run_compare(config, out_dir=None):
    """Dense vs gradual vs hard, sharing every non-pruning setting.

    The hard run prunes at the configured epoch to the exact parameter
    count the gradual run ended with, so the comparison is at equal
    final sparsity.  Returns {mode: TrainResult} and writes
    comparison.csv.
    """
    out_dir = out_dir or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    results = {}

    gradual_cfg = config.with_pruning(mode="gradual")
    gradual_dir = os.path.join(out_dir, "gradual")
    if gradual_cfg.pruning.recurrent is None or gradual_cfg.pruning.linear is None:
        calib_path = os.path.join(gradual_dir, "calibration.json")
        if not os.path.exists(calib_path):
            run_calibrate(gradual_cfg, gradual_dir)
        gradual_cfg = gradual_cfg.with_pruning(calibration=calib_path)
    results["gradual"] = run_experiment(gradual_cfg, gradual_dir)

    dense_cfg = config.with_pruning(mode="none")
    results["dense"] = run_experiment(dense_cfg, os.path.join(out_dir, "dense"))

    remaining = count_prunable(results["gradual"].masked_params) - count_pruned(
        results["gradual"].masked_params
    )
    hard_cfg = config.with_pruning(mode="hard")
    results["hard"] = run_experiment(
        hard_cfg, os.path.join(out_dir, "hard"), hard_target_remaining=remaining
    )

    with open(os.path.join(out_dir, "comparison.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "final_val_loss", "final_train_loss", "sparsity_overall", "params_remaining"]
        )
        for mode in ("dense", "gradual", "hard"):
            r = results[mode]
            writer.writerow(
                [
                    mode,
                    f"{r.final_val_loss:.8g}",
                    f"{r.final_train_loss:.8g}",
                    f"{r.report.overall:.8g}",
                    r.report.params_remaining,
                ]
            )
    return results


# ----------------------------------------------------------------- metrics csv


def metrics_columns(layer_names):
    return list(METRICS_BASE_COLUMNS) + [f"sparsity_{name}" for name in layer_names]


def write_metrics_csv(records, layer_names, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(metrics_columns(layer_names))
        for r in records:
            row = [
                r.iteration,
                r.epoch,
                f"{r.train_loss:.8g}",
                "" if r.val_loss is None else f"{r.val_loss:.8g}",
                f"{r.eps_recurrent:.8g}",
                f"{r.eps_linear:.8g}",
                f"{r.sparsity_overall:.8g}",
                r.params_remaining,
                f"{r.wall_seconds:.6f}",
            ]
            row.extend(f"{r.layer_sparsity.get(name, 0.0):.8g}" for name in layer_names)
            writer.writerow(row)


def read_metrics_csv(path):
    """Returns (list of row dicts with floats parsed, layer column names)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                if value == "" or value is None:
                    row[key] = None
                elif key in ("iteration", "epoch", "params_remaining"):
                    row[key] = int(value)
                else:
                    row[key] = float(value)
            rows.append(row)
    layers = [c[len("sparsity_"):] for c in (reader.fieldnames or []) if c.startswith("sparsity_") and c != "sparsity_overall"]
    return rows, layers
