"""Desk-scale class-incremental learning workbench.

Core pieces: task-stream generation (disjoint / fuzzy), PCA and exact
t-SNE reducers, an outlier-robust farthest-point exemplar sampler with
an independent verification oracle, a numpy MLP trained with a
temperature-distilled rehearsal loss, and an experiment harness.
"""

from .data import (
    Dataset,
    LabeledExample,
    StreamSpec,
    TaskBatch,
    load_cifar100,
    make_blobs,
    make_disjoint_stream,
    make_fuzzy_stream,
    make_stream,
)
from .errors import (
    CilbenchError,
    ConfigurationError,
    DataError,
    DivergenceError,
    ShapeError,
)
from .harness import (
    MetricsRecord,
    RunConfig,
    RunResult,
    average_accuracy,
    emit_results,
    evaluate,
    run_experiment,
)
from .learner import (
    LossConfig,
    MlpModel,
    TrainConfig,
    ce_loss,
    cross_distilled_loss,
    distilled_softmax,
    forward,
    grow_head,
    init_mlp,
    kd_loss,
    nme_classify,
    predict,
    train_task,
)
from .reduce import Embedding, TsneConfig, pca_reduce, tsne_reduce
from .sampler import (
    ExemplarStore,
    SamplerParams,
    allocate_quota,
    diverse_sample,
    gonzalez_sample,
    neighbor_count,
    random_sample,
    verify_selection,
)

__all__ = [
    "CilbenchError",
    "ConfigurationError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "Embedding",
    "ExemplarStore",
    "LabeledExample",
    "LossConfig",
    "MetricsRecord",
    "MlpModel",
    "RunConfig",
    "RunResult",
    "SamplerParams",
    "ShapeError",
    "StreamSpec",
    "TaskBatch",
    "TrainConfig",
    "TsneConfig",
    "allocate_quota",
    "average_accuracy",
    "ce_loss",
    "cross_distilled_loss",
    "distilled_softmax",
    "diverse_sample",
    "emit_results",
    "evaluate",
    "forward",
    "gonzalez_sample",
    "grow_head",
    "init_mlp",
    "kd_loss",
    "load_cifar100",
    "make_blobs",
    "make_disjoint_stream",
    "make_fuzzy_stream",
    "make_stream",
    "neighbor_count",
    "nme_classify",
    "pca_reduce",
    "predict",
    "random_sample",
    "run_experiment",
    "train_task",
    "tsne_reduce",
    "verify_selection",
]

__version__ = "0.1.0"
