"""Built-in learners that map feature vectors to probability vectors.

The gradient-trained multinomial softmax regression is the workhorse: it is
optimized with decoupled-weight-decay Adam, reduce-on-plateau learning-rate
scheduling, and best-validation-loss snapshotting. k-NN and Gaussian naive
Bayes round out the roster as alternate meta-learners and multi-level
participants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, validate_probability_vector
from .errors import (
    ConfigError,
    DegenerateSplitError,
    EmptyInputError,
    NumericError,
    ShapeError,
)

# Canonical Adam moment constants; the decoupled-decay variant keeps them.
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class SchedulerConfig:
    """Reduce-on-plateau settings; improvement is relative to the best loss."""

    plateau_patience: int = 5
    plateau_factor: float = 0.1
    min_lr: float = 1e-7
    rel_threshold: float = 1e-4

    def __post_init__(self):
        if not (0.0 < self.plateau_factor < 1.0):
            raise ConfigError(f"plateau_factor must lie in (0,1), got {self.plateau_factor}")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 60
    weight_decay: float = 0.01
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.scheduler.min_lr > self.learning_rate:
            raise ConfigError("scheduler.min_lr must not exceed learning_rate")


@dataclass(frozen=True)
class SoftmaxModel:
    """Linear softmax classifier; weight column feature_dim holds the bias."""

    weights: np.ndarray  # (class_count, feature_dim + 1)
    class_count: int
    feature_dim: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.class_count, self.feature_dim + 1):
            raise ShapeError(
                f"weights shape {w.shape} != ({self.class_count}, {self.feature_dim + 1})"
            )
        if not np.isfinite(w).all():
            raise NumericError("non-finite weight")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, class_count: int, feature_dim: int) -> "SoftmaxModel":
        return cls(np.zeros((class_count, feature_dim + 1)), class_count, feature_dim)

    def predict_proba(self, features) -> np.ndarray:
        return softmax_predict(self, features)


def _with_bias(features: np.ndarray) -> np.ndarray:
    """Append the constant-1 bias column."""
    if features.ndim == 1:
        return np.concatenate([features, [1.0]])
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_predict(model: SoftmaxModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.feature_dim:
        raise ShapeError(f"expected {model.feature_dim} features, got shape {x.shape}")
    logits = model.weights @ _with_bias(x)
    return validate_probability_vector(_softmax_rows(logits))


def _batch_probs(model: SoftmaxModel, features: np.ndarray) -> np.ndarray:
    if features.shape[1] != model.feature_dim:
        raise ShapeError(
            f"expected {model.feature_dim} features, got {features.shape[1]}"
        )
    return _softmax_rows(_with_bias(features) @ model.weights.T)


def cross_entropy_loss(model: SoftmaxModel, data: Dataset) -> float:
    """Negative log-likelihood summed over the samples."""
    if len(data) == 0:
        raise EmptyInputError("cross_entropy_loss needs at least one sample")
    probs = _batch_probs(model, data.features)
    picked = probs[np.arange(len(data)), data.labels]
    # Guard log(0) from saturated wrong predictions.
    return float(-np.log(np.maximum(picked, 1e-300)).sum())


def loss_gradient(model: SoftmaxModel, batch: Dataset) -> np.ndarray:
    """Gradient of the summed cross entropy: sum_i (p_i - onehot(y_i)) x_i^T."""
    if len(batch) == 0:
        raise EmptyInputError("loss_gradient needs at least one sample")
    xb = _with_bias(batch.features)
    residual = _batch_probs(model, batch.features)
    residual[np.arange(len(batch)), batch.labels] -= 1.0
    return residual.T @ xb


@dataclass
class OptimizerState:
    """Adam moment accumulators plus the current (scheduler-owned) step size."""

    m: np.ndarray
    v: np.ndarray
    step: int
    learning_rate: float

    @classmethod
    def initial(cls, shape: tuple[int, ...], learning_rate: float) -> "OptimizerState":
        return cls(np.zeros(shape), np.zeros(shape), 0, float(learning_rate))


def adamw_step(
    state: OptimizerState,
    params: np.ndarray,
    grads: np.ndarray,
    config: TrainConfig,
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam update; functional, inputs untouched.

    Decay multiplies the incoming parameters by (1 - lr * weight_decay) before
    the bias-corrected moment step, so a zero-gradient step shrinks them by
    exactly that factor and weight_decay=0 reduces to plain Adam.
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ShapeError(f"gradient shape {grads.shape} != parameter shape {params.shape}")
    if not np.isfinite(grads).all():
        bad = np.argwhere(~np.isfinite(grads))[0]
        raise NumericError(f"non-finite gradient at coordinate {tuple(int(i) for i in bad)}")

    t = state.step + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads * grads
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)

    lr = state.learning_rate
    new_params = params * (1.0 - lr * config.weight_decay)
    new_params = new_params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new_params, OptimizerState(m, v, t, lr)


class PlateauScheduler:
    """Cuts the learning rate when the tracked loss stops improving.

    An update counts as improvement when loss < best * (1 - rel_threshold).
    After ``patience`` consecutive non-improving updates the rate is multiplied
    by ``factor`` (floored at min_lr) and the counter resets.
    """

    def __init__(self, config: SchedulerConfig, initial_lr: float):
        self.config = config
        self.lr = float(initial_lr)
        self.best: float | None = None
        self.stale = 0

    def update(self, validation_loss: float) -> float:
        loss = float(validation_loss)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite validation loss {loss!r}")
        if self.best is None or loss < self.best * (1.0 - self.config.rel_threshold):
            self.best = loss if self.best is None else min(self.best, loss)
            self.stale = 0
            return self.lr
        self.stale += 1
        if self.stale >= self.config.plateau_patience:
            self.lr = max(self.lr * self.config.plateau_factor, self.config.min_lr)
            self.stale = 0
        return self.lr


def plateau_update(scheduler: PlateauScheduler, validation_loss: float) -> float:
    return scheduler.update(validation_loss)


def _check_fit_inputs(train: Dataset, val: Dataset) -> None:
    if len(train) == 0 or len(val) == 0:
        raise EmptyInputError("train and val must both be nonempty")
    if train.class_count != val.class_count or train.feature_dim != val.feature_dim:
        raise ShapeError("train and val disagree on class count or feature dimension")
    train_classes = set(np.unique(train.labels).tolist())
    if len(train_classes) < 2:
        raise DegenerateSplitError("training set contains fewer than two classes")
    if not train_classes & set(np.unique(val.labels).tolist()):
        raise DegenerateSplitError("validation set shares no classes with the training set")


def fit_softmax(
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    epoch_callback: Callable[[int, SoftmaxModel, float], None] | None = None,
) -> SoftmaxModel:
    """Mini-batch softmax regression returning the best-validation snapshot.

    Weights start at zero (the problem is convex, so the symmetric start is
    safe and reproducible). Each epoch shuffles with the seeded generator,
    walks the batches with the optimizer, scores the validation loss, feeds it
    to the plateau scheduler, and snapshots the weights whenever that loss
    improves. The final weights are not returned unless they are the best.
    """
    _check_fit_inputs(train, val)
    c, d = train.class_count, train.feature_dim
    params = np.zeros((c, d + 1))
    if config.max_epochs == 0:
        return SoftmaxModel(params, c, d)

    rng = np.random.Generator(np.random.PCG64(config.seed))
    state = OptimizerState.initial(params.shape, config.learning_rate)
    scheduler = PlateauScheduler(config.scheduler, config.learning_rate)
    best_loss = np.inf
    best_params = params.copy()
    n = len(train)

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            batch = Dataset(
                [train.ids[r] for r in rows],
                train.features[rows],
                train.labels[rows],
                c,
            )
            grads = loss_gradient(SoftmaxModel(params, c, d), batch)
            params, state = adamw_step(state, params, grads, config)
        val_loss = cross_entropy_loss(SoftmaxModel(params, c, d), val)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = params.copy()
        state.learning_rate = scheduler.update(val_loss)
        if epoch_callback is not None:
            epoch_callback(epoch, SoftmaxModel(params.copy(), c, d), val_loss)

    return SoftmaxModel(best_params, c, d)


@dataclass(frozen=True)
class KnnModel:
    """Memorized training set queried by Euclidean distance."""

    features: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]
    k_neighbors: int
    class_count: int

    def predict_proba(self, features) -> np.ndarray:
        return knn_predict(self, features)


def fit_knn(train: Dataset, k_neighbors: int = 5) -> KnnModel:
    if len(train) == 0:
        raise EmptyInputError("k-NN needs at least one training sample")
    if not (1 <= k_neighbors <= len(train)):
        raise ConfigError(
            f"k_neighbors must lie in [1, {len(train)}], got {k_neighbors}"
        )
    return KnnModel(
        train.features.copy(),
        train.labels.copy(),
        tuple(train.ids),
        int(k_neighbors),
        train.class_count,
    )


def knn_predict(model: KnnModel, features) -> np.ndarray:
    """Neighbor-label frequencies among the K nearest points.

    Distance ties break toward the lower sample id, keeping the result
    independent of storage order.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.features.shape[1],):
        raise ShapeError(f"expected {model.features.shape[1]} features, got shape {x.shape}")
    dists = np.sqrt(((model.features - x) ** 2).sum(axis=1))
    order = np.lexsort((np.asarray(model.ids), dists))
    nearest = model.labels[order[: model.k_neighbors]]
    counts = np.bincount(nearest, minlength=model.class_count).astype(np.float64)
    return validate_probability_vector(counts / model.k_neighbors)


@dataclass(frozen=True)
class GaussianNbModel:
    """Per-class diagonal Gaussians with floored variances and prior weights."""

    means: np.ndarray  # (class_count, feature_dim)
    variances: np.ndarray
    priors: np.ndarray
    class_count: int

    def predict_proba(self, features) -> np.ndarray:
        return gnb_predict(self, features)


def fit_gnb(train: Dataset, var_floor: float = 1e-9) -> GaussianNbModel:
    if len(train) == 0:
        raise EmptyInputError("Gaussian NB needs at least one training sample")
    if var_floor <= 0:
        raise ConfigError("var_floor must be positive")
    c, d = train.class_count, train.feature_dim
    means = np.zeros((c, d))
    variances = np.full((c, d), var_floor)
    priors = np.zeros(c)
    for cls in range(c):
        rows = train.features[train.labels == cls]
        if rows.shape[0] == 0:
            continue
        priors[cls] = rows.shape[0] / len(train)
        means[cls] = rows.mean(axis=0)
        variances[cls] = np.maximum(rows.var(axis=0), var_floor)
    return GaussianNbModel(means, variances, priors, c)


def gnb_predict(model: GaussianNbModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.means.shape[1],):
        raise ShapeError(f"expected {model.means.shape[1]} features, got shape {x.shape}")
    present = model.priors > 0
    log_post = np.full(model.class_count, -np.inf)
    diff = x - model.means[present]
    log_like = (
        -0.5 * (np.log(2.0 * np.pi * model.variances[present]) + diff**2 / model.variances[present])
    ).sum(axis=1)
    log_post[present] = np.log(model.priors[present]) + log_like
    shifted = np.exp(log_post - log_post.max())
    return validate_probability_vector(shifted / shifted.sum())


@dataclass(frozen=True)
class LearnerSpec:
    """Recipe for one learner: kind plus the hyperparameters that kind needs.

    The softmax kind carries its own TrainConfig (and therefore its own seed),
    so fitting is a pure function of (spec, data).
    """

    kind: str = "softmax"
    name: str | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    k_neighbors: int = 5
    var_floor: float = 1e-9

    def __post_init__(self):
        if self.kind not in ("softmax", "knn", "gnb"):
            raise ConfigError(f"unknown learner kind {self.kind!r}")

    @property
    def display_name(self) -> str:
        return self.name if self.name is not None else self.kind

    def with_seed(self, seed: int) -> "LearnerSpec":
        if self.kind != "softmax":
            return self
        return replace(self, train_config=replace(self.train_config, seed=int(seed)))

    def fit(self, train: Dataset, val: Dataset | None = None):
        if self.kind == "softmax":
            return fit_softmax(train, val if val is not None and len(val) else train, self.train_config)
        if self.kind == "knn":
            return fit_knn(train, self.k_neighbors)
        return fit_gnb(train, self.var_floor)


def default_learners(train_config: TrainConfig | None = None) -> list[LearnerSpec]:
    """Built-in roster: softmax regression, 5-NN, Gaussian NB."""
    cfg = train_config if train_config is not None else TrainConfig()
    return [
        LearnerSpec(kind="softmax", name="softmax_lr", train_config=cfg),
        LearnerSpec(kind="knn", name="knn5", k_neighbors=5),
        LearnerSpec(kind="gnb", name="gaussian_nb"),
    ]


def child_seed(seed: int, *key: int) -> int:
    """Stable derived seed for per-(learner, fold) training runs."""
    return int(np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1)[0])
