"""Weighted-metric embeddings for user-item rating data.

Users and items are embedded into one latent space together with three
learned symmetric PSD weight matrices (user-user, item-item, user-item)
that define the distances used for both training and recommendation.
"""

from .data import (
    DatasetSplit,
    RatingDataset,
    export_dataset,
    load_ratings,
    split_dataset,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DataValidationError,
    EmptyDatasetError,
    MetricRecError,
    NumericalError,
    TrainingDiverged,
)
from .evaluation import (
    ClusterAssignment,
    RankingResult,
    evaluate_rankings,
    expected_random_hit_ratio,
    hit_ratio_at_k,
    nmi,
    nmi_score,
    recall_at_k,
    recommend_topk,
    spherical_kmeans,
)
from .losses import (
    GradientBundle,
    Hyperparams,
    LossBreakdown,
    MarginSet,
    VARIANTS,
    covariance_penalty,
    loss_explicit,
    loss_explicit_item,
    loss_explicit_user,
    loss_latent,
    loss_mml,
    margin_penalty,
    rank_weight,
    total_objective,
    variant_effects,
)
from .metric import (
    EmbeddingTable,
    MetricSet,
    euclidean_distance,
    project_psd,
    squared_w_distance,
    w_distance,
)
from .sampling import (
    DualTriplet,
    LatentTriplet,
    SimilarPairSets,
    TripletBatch,
    build_similar_pair_sets,
    sample_dual_triplet,
    sample_latent_triplet,
    sample_positive_batch,
)
from .trainer import (
    ModelState,
    TrainConfig,
    adagrad_step,
    init_model,
    load_checkpoint,
    project_constraints,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
