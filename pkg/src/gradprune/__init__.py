"""Gradual magnitude pruning for recurrent networks.

Train RNN/GRU models while a monotonically increasing magnitude
threshold zeroes ever more weights, then run the pruned result through
CSR sparse matrix-vector kernels, benchmark the dense-vs-sparse gap and
ship the model in a compact binary format.
"""

from .bench import BenchRecord, bench_matvec, write_bench_csv
from .errors import (
    ConfigError,
    DivergenceError,
    ModelFormatError,
    MonotonicityError,
    ParameterError,
    ShapeError,
    StaleCacheError,
)
from .estimators import RecurrentClassifier, RecurrentRegressor
from .models import (
    FcLayer,
    GruLayer,
    RecurrentModel,
    RnnLayer,
    backprop,
    build_model,
    gru_forward,
    mse_loss,
    rnn_forward,
    softmax_cross_entropy,
)
from .optim import NesterovSgd, clip_grad_norm, nesterov_step
from .pruning import (
    CalibrationResult,
    GradualPruner,
    MaskedParameter,
    PruneHyperParams,
    ThresholdState,
    apply_mask,
    compute_start_slope,
    default_hyperparams,
    hard_prune,
    masked_parameters,
    percentile_q,
    pruning_step,
    sparsity_report,
    threshold_at,
    update_masks,
)
from .serialize import deserialize, load_model, save_model, serialize
from .sparse import CsrMatrix, SparseModel, from_csr, sparse_forward, spmv, to_csr
from .tasks import Task, generate_batch, make_task
from .tensor import (
    RELU_CLIP,
    clipped_relu,
    gemv,
    make_rng,
    rand_uniform,
    sigmoid,
    tanh,
)

__version__ = "0.1.0"

__all__ = [
    "BenchRecord",
    "CalibrationResult",
    "ConfigError",
    "CsrMatrix",
    "DivergenceError",
    "FcLayer",
    "GradualPruner",
    "GruLayer",
    "MaskedParameter",
    "ModelFormatError",
    "MonotonicityError",
    "NesterovSgd",
    "ParameterError",
    "PruneHyperParams",
    "RELU_CLIP",
    "RecurrentClassifier",
    "RecurrentModel",
    "RecurrentRegressor",
    "RnnLayer",
    "ShapeError",
    "SparseModel",
    "StaleCacheError",
    "Task",
    "ThresholdState",
    "apply_mask",
    "backprop",
    "bench_matvec",
    "build_model",
    "clip_grad_norm",
    "clipped_relu",
    "compute_start_slope",
    "default_hyperparams",
    "deserialize",
    "from_csr",
    "gemv",
    "generate_batch",
    "gru_forward",
    "hard_prune",
    "load_model",
    "make_rng",
    "make_task",
    "masked_parameters",
    "mse_loss",
    "nesterov_step",
    "percentile_q",
    "pruning_step",
    "rand_uniform",
    "rnn_forward",
    "save_model",
    "serialize",
    "sigmoid",
    "softmax_cross_entropy",
    "sparse_forward",
    "sparsity_report",
    "spmv",
    "tanh",
    "threshold_at",
    "to_csr",
    "update_masks",
]
