"""Soft-voting plus contradictory-sample stacking ensemble engine."""

from .core import (
    SINGLE_FOLD,
    Dataset,
    LabeledSample,
    ProbabilityTable,
    argmax_label,
    validate_probability_vector,
)
from .evalharness import (
    FoldPlan,
    MetricsReport,
    PipelineConfig,
    average_test_probabilities,
    collect_fold_probabilities,
    compute_confusion,
    compute_metrics,
    make_folds,
    plan_evaluation,
    run_pipeline,
    stratified_split,
)
from .learners import (
    GaussianNbModel,
    KnnModel,
    LearnerSpec,
    OptimizerState,
    PlateauScheduler,
    SchedulerConfig,
    SoftmaxModel,
    TrainConfig,
    adamw_step,
    cross_entropy_loss,
    default_learners,
    fit_gnb,
    fit_knn,
    fit_softmax,
    gnb_predict,
    knn_predict,
    loss_gradient,
    plateau_update,
    softmax_predict,
)
from .stacking import (
    MetaDataset,
    MetaSample,
    RoutingMode,
    StackConfig,
    StackLevel,
    build_meta_features,
    build_meta_training_set,
    general_stacking,
    multilevel_stack,
    train_meta,
    train_stack,
    voting_stacking_predict,
)
from .voting import VoteResult, soft_vote, vote_table

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
