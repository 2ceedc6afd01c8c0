"""Active multimodal few-shot inference over two-modality embedding spaces."""

__version__ = "0.1.0"

from .amd import (
    GradientSet,
    LossBreakdown,
    cross_entropy_loss,
    distillation_loss,
    grad_total_loss,
    kl_divergence,
    sgd_step,
    total_loss,
    train_meta,
)
from .ami import (
    EpisodeResult,
    RunMetrics,
    aggregate_metrics,
    evaluate_episode,
    fused_posterior,
    fusion_weights,
    write_metrics,
)
from .asi import (
    GroupAssignment,
    ReliabilityScores,
    assign_groups,
    free_energy,
    score_reliability,
)
from .data import (
    DataFormatError,
    EmbeddingRecord,
    Episode,
    MultimodalDataset,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    sample_episode,
    save_dataset,
    split_by_class,
)
from .metric import certainty, compute_prototypes, distances, posterior
from .model import (
    HeadParams,
    Hyper,
    ModelBundle,
    embed,
    init_heads,
    load_model,
    save_model,
)

__all__ = [
    "DataFormatError",
    "EmbeddingRecord",
    "Episode",
    "EpisodeResult",
    "GradientSet",
    "GroupAssignment",
    "HeadParams",
    "Hyper",
    "LossBreakdown",
    "ModelBundle",
    "MultimodalDataset",
    "ReliabilityScores",
    "RunMetrics",
    "SyntheticSpec",
    "aggregate_metrics",
    "assign_groups",
    "certainty",
    "compute_prototypes",
    "cross_entropy_loss",
    "distances",
    "distillation_loss",
    "embed",
    "evaluate_episode",
    "free_energy",
    "fused_posterior",
    "fusion_weights",
    "generate_synthetic",
    "grad_total_loss",
    "init_heads",
    "kl_divergence",
    "load_dataset",
    "load_model",
    "posterior",
    "sample_episode",
    "save_dataset",
    "save_model",
    "score_reliability",
    "sgd_step",
    "total_loss",
    "train_meta",
    "write_metrics",
    "write_trace",
]
