"""Scikit-learn style estimators around the pruning training loop.

The estimators follow the sklearn contract (get_params/set_params via
BaseEstimator, fit returns self, fitted attributes carry a trailing
underscore) so pruned recurrent models compose with the usual tooling.
X is a 3-D array of sequences, shape (n_samples, seq_len, n_features).
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import ConfigError
from .models import build_model, mse_loss, softmax_cross_entropy
from .optim import NesterovSgd
from .pruning import (
    GradualPruner,
    PruneHyperParams,
    compute_start_slope,
    count_prunable,
    masked_parameters,
    percentile_q,
)
from .sparse import SparseModel
from .training import fit_loop
from .validation import check_class_targets, check_regression_targets, check_sequences


class _BaseRecurrent(BaseEstimator):
    """Shared fit machinery; subclasses fix the loss and output layout."""

    def __init__(self, hidden_size=64, depth=1, cell="rnn", activation="tanh",
                 learning_rate=0.05, momentum=0.9, clip_norm=5.0, epochs=10,
                 batch_size=16, pruning="none", target_sparsity=0.9,
                 ramp_factor=1.5, prune_freq=None, calibration_epochs=1,
                 hard_prune_epoch=None, random_state=0):
        self.hidden_size = hidden_size
        self.depth = depth
        self.cell = cell
        self.activation = activation
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.epochs = epochs
        self.batch_size = batch_size
        self.pruning = pruning
        self.target_sparsity = target_sparsity
        self.ramp_factor = ramp_factor
        self.prune_freq = prune_freq
        self.calibration_epochs = calibration_epochs
        self.hard_prune_epoch = hard_prune_epoch
        self.random_state = random_state

    # -- helpers ---------------------------------------------------------

    def _check_params(self):
        if self.pruning not in ("none", "gradual", "hard"):
            raise ConfigError(f"pruning must be 'none', 'gradual' or 'hard', got {self.pruning!r}")
        if self.cell not in ("rnn", "gru"):
            raise ConfigError(f"cell must be 'rnn' or 'gru', got {self.cell!r}")
        if not 0.0 < self.target_sparsity < 1.0:
            raise ConfigError(f"target_sparsity must be in (0, 1), got {self.target_sparsity}")
        if not 1.5 <= self.ramp_factor <= 2.0:
            raise ConfigError(f"ramp_factor must be in [1.5, 2.0], got {self.ramp_factor}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    def _batch_fn(self, X_steps, targets, iters_per_epoch, shuffle_rng):
        n = X_steps.shape[1]
        order = {"perm": None, "epoch": -1}

        def batch_fn(itr):
            epoch = itr // iters_per_epoch
            if epoch != order["epoch"]:
                order["perm"] = shuffle_rng.permutation(n)
                order["epoch"] = epoch
            lo = (itr % iters_per_epoch) * self.batch_size
            idx = order["perm"][lo:lo + self.batch_size]
            return X_steps[:, idx, :], targets[idx]

        return batch_fn

    def _schedule(self, X_steps, targets, iters_per_epoch, total_iters, freq):
        """Calibrate the threshold schedule with a short dense pre-run."""
        start_itr = iters_per_epoch
        ramp_itr = int(0.25 * total_iters)
        end_itr = int(0.50 * total_iters)
        if not start_itr < ramp_itr < end_itr:
            raise ConfigError(
                "gradual pruning needs at least 5 epochs so the schedule "
                f"breakpoints are ordered (got start={start_itr}, ramp={ramp_itr}, end={end_itr})"
            )
        init_rng, shuffle_rng = self._streams()
        model = self._build(init_rng, X_steps.shape[2])
        fit_loop(
            model,
            self._batch_fn(X_steps, targets, iters_per_epoch, shuffle_rng),
            self._loss_fn(),
            total_iters=self.calibration_epochs * iters_per_epoch,
            iters_per_epoch=iters_per_epoch,
            optimizer=NesterovSgd(self.learning_rate, self.momentum),
            clip_norm=self.clip_norm,
            freq=freq,
        )
        q = percentile_q(
            [s.array for s in model.param_specs() if s.prunable], self.target_sparsity
        )
        start_slope = compute_start_slope(q, start_itr, ramp_itr, end_itr, freq)
        return PruneHyperParams(
            start_itr=start_itr,
            ramp_itr=ramp_itr,
            end_itr=end_itr,
            start_slope=start_slope,
            ramp_slope=self.ramp_factor * start_slope,
            freq=freq,
        )

    def _streams(self):
        init_ss, shuffle_ss = np.random.SeedSequence(self.random_state).spawn(2)
        return (
            np.random.Generator(np.random.Philox(init_ss)),
            np.random.Generator(np.random.Philox(shuffle_ss)),
        )

    def _build(self, rng, n_features):
        return build_model(
            rng, self.cell, n_features, self.hidden_size, self.depth,
            self._output_dim, activation=self.activation, output_mode="last",
        )

    def _fit_common(self, X, targets):
        self._check_params()
        n = X.shape[0]
        X_steps = np.ascontiguousarray(np.transpose(X, (1, 0, 2)))
        iters_per_epoch = max(1, math.ceil(n / self.batch_size))
        total_iters = self.epochs * iters_per_epoch
        freq = self.prune_freq or max(1, min(100, iters_per_epoch // 2))

        pruner = None
        hard_at = None
        hard_target = None
        if self.pruning == "gradual":
            pruner = GradualPruner(
                self._schedule(X_steps, targets, iters_per_epoch, total_iters, freq)
            )
        init_rng, shuffle_rng = self._streams()
        model = self._build(init_rng, X.shape[2])
        if self.pruning == "hard":
            epoch = self.hard_prune_epoch if self.hard_prune_epoch is not None else self.epochs // 4
            if not 0 <= epoch < self.epochs:
                raise ConfigError(f"hard_prune_epoch must be in [0, {self.epochs}), got {epoch}")
            hard_at = epoch * iters_per_epoch
            prunable = count_prunable(masked_parameters(model))
            hard_target = max(1, round((1.0 - self.target_sparsity) * prunable))

        result = fit_loop(
            model,
            self._batch_fn(X_steps, targets, iters_per_epoch, shuffle_rng),
            self._loss_fn(),
            total_iters=total_iters,
            iters_per_epoch=iters_per_epoch,
            optimizer=NesterovSgd(self.learning_rate, self.momentum),
            clip_norm=self.clip_norm,
            freq=freq,
            pruner=pruner,
            hard_at=hard_at,
            hard_target_remaining=hard_target,
        )
        self.model_ = result.model
        self.history_ = result.metrics
        self.schedule_ = result.schedule_rows
        self.sparsity_ = result.report.overall
        self.sparsity_per_layer_ = dict(result.report.per_layer)
        self.n_iter_ = total_iters
        self.n_features_in_ = X.shape[2]
        self.seq_len_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"This {type(self).__name__} instance is not fitted yet; call fit first."
            )

    def _raw_predict(self, X):
        self._check_fitted()
        X = check_sequences(X, n_features=self.n_features_in_)
        outputs = []
        for lo in range(0, X.shape[0], 256):
            chunk = np.ascontiguousarray(np.transpose(X[lo:lo + 256], (1, 0, 2)))
            out, _ = self.model_.forward(chunk)
            outputs.append(out)
        return np.concatenate(outputs, axis=0)

    def to_sparse(self, min_sparsity=0.5):
        """Export the fitted model for CSR inference and serialization."""
        self._check_fitted()
        return SparseModel.from_dense(self.model_, min_sparsity=min_sparsity)


class RecurrentRegressor(RegressorMixin, _BaseRecurrent):
    """Sequence-to-one regressor trained with MSE, optionally pruned."""

    def _loss_fn(self):
        return mse_loss

    def fit(self, X, y):
        X = check_sequences(X)
        targets, self._y_was_1d = check_regression_targets(y, X.shape[0])
        self._output_dim = targets.shape[1]
        return self._fit_common(X, targets)

    def predict(self, X):
        out = self._raw_predict(X)
        return out[:, 0] if self._y_was_1d else out


class RecurrentClassifier(ClassifierMixin, _BaseRecurrent):
    """Sequence classifier (softmax over the final hidden state)."""

    def _loss_fn(self):
        return softmax_cross_entropy

    def fit(self, X, y):
        X = check_sequences(X)
        self.classes_, indices = check_class_targets(y, X.shape[0])
        self._output_dim = len(self.classes_)
        return self._fit_common(X, indices)

    def predict_proba(self, X):
        logits = self._raw_predict(X).astype(np.float64)
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        return exp / exp.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self._raw_predict(X), axis=1)]
