"""End-to-end training: batch loop, AdaGrad updates, constraint projection,
convergence control and checkpointing.

Each epoch draws ceil(P / batch_size) batches of positive pairs (with
replacement), assembles dual and latent triplets for every pair, applies
one AdaGrad step per parameter group (embeddings, then metrics, then
margins) per batch, and finishes with a projection pass that restores the
constraints: embedding rows inside the open unit ball, margins in
[1e-3, 1], metric matrices symmetric PSD.

Runs are bit-reproducible for a fixed seed and a single worker: the RNG
stream is re-derived per epoch from (seed, epoch), so a run that resumes
from a checkpoint consumes exactly the same stream as an uninterrupted
one.
"""

from __future__ import annotations

import copy
import logging
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, NumericalError, TrainingDiverged
from .losses import (
    DEFAULT_MARGIN,
    Hyperparams,
    MarginSet,
    total_objective,
    variant_effects,
)
from .metric import EmbeddingTable, MetricSet, project_psd
from .sampling import (
    assemble_training_batch,
    build_similar_pair_sets,
    sample_positive_batch,
)

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8
MARGIN_FLOOR = 1e-3
UNIT_BALL_SLACK = 1e-6

# Uniform init with mean 0.2 and variance 0.04 has half-width sqrt(3 * var).
INIT_MEAN = 0.2
INIT_HALF_WIDTH = math.sqrt(0.12)

_CHECKPOINT_MAGIC = b"MRCK"
_CHECKPOINT_VERSION = 1
_HEADER_FMT = "<4sIQQIIq"

LOG_COLUMNS = ("epoch", "l_explicit_user", "l_explicit_item", "l_explicit",
               "l_latent", "l_mml", "l_p", "l_r", "objective", "seconds")


@dataclass
class AdagradState:
    """Squared-gradient accumulators, one per parameter group."""

    embeddings: np.ndarray
    w_user: np.ndarray
    w_item: np.ndarray
    w_user_item: np.ndarray
    mr_user: np.ndarray
    mr_item: np.ndarray
    mr_latent: np.ndarray

    @classmethod
    def zeros(cls, num_users, num_items, dim):
        total = num_users + num_items
        return cls(
            embeddings=np.zeros((total, dim)),
            w_user=np.zeros((dim, dim)),
            w_item=np.zeros((dim, dim)),
            w_user_item=np.zeros((dim, dim)),
            mr_user=np.zeros(num_users),
            mr_item=np.zeros(num_items),
            mr_latent=np.zeros(total),
        )


@dataclass
class ModelState:
    embeddings: EmbeddingTable
    metrics: MetricSet
    margins: MarginSet
    accumulators: AdagradState
    epoch: int = 0
    seed: int = 0

    def validate(self):
        self.embeddings.validate()
        self.metrics.validate()
        self.margins.validate()
        for name in ("embeddings", "w_user", "w_item", "w_user_item",
                     "mr_user", "mr_item", "mr_latent"):
            acc = getattr(self.accumulators, name)
            if np.any(acc < 0.0) or not np.all(np.isfinite(acc)):
                raise NumericalError(f"accumulator {name} invalid")

    def clone(self):
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    hyper: Hyperparams = field(default_factory=Hyperparams)
    max_epochs: int = 30
    tolerance: float = 1e-4
    patience: int = 3
    num_candidates: int = 10
    eval_every: int = 1
    checkpoint_path: str | None = None
    seed: int = 0

    def validate(self):
        self.hyper.validate()
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.patience < 1 or self.num_candidates < 1 or self.eval_every < 1:
            raise ValueError("patience, num_candidates and eval_every must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


def uniform_embedding_init(num_users, num_items, dim, rng):
    """Raw uniform draw: mean 0.2, variance 0.04, before any projection."""
    total = num_users + num_items
    return rng.uniform(INIT_MEAN - INIT_HALF_WIDTH, INIT_MEAN + INIT_HALF_WIDTH,
                       size=(total, dim))


def _rescale_into_unit_ball(vectors):
    norms = np.linalg.norm(vectors, axis=1)
    mask = norms >= 1.0
    if np.any(mask):
        vectors[mask] *= ((1.0 - UNIT_BALL_SLACK) / norms[mask])[:, None]
    return vectors


def init_model(num_users, num_items, dim, seed):
    """Fresh model: uniform embeddings rescaled into the unit ball,
    identity metrics, constant margins, zero accumulators."""
    if dim <= 0:
        raise ValueError(f"embedding dimension must be positive, got {dim}")
    if num_users < 1 or num_items < 1:
        raise ValueError("need at least one user and one item")
    rng = np.random.default_rng(seed)
    vectors = _rescale_into_unit_ball(uniform_embedding_init(num_users, num_items, dim, rng))
    return ModelState(
        embeddings=EmbeddingTable(num_users, num_items, dim, vectors),
        metrics=MetricSet.identity(dim),
        margins=MarginSet.constant(num_users, num_items),
        accumulators=AdagradState.zeros(num_users, num_items, dim),
        epoch=0,
        seed=int(seed),
    )


def adagrad_step(param, grad, lr, accumulator, eps=ADAGRAD_EPS):
    """In-place AdaGrad update: acc += g^2; param -= lr * g / (sqrt(acc) + eps)."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient in AdaGrad step")
    accumulator += grad * grad
    param -= lr * grad / (np.sqrt(accumulator) + eps)
    return param


def project_constraints(state, freeze_metrics=False, tie_metrics=False):
    """Restore unit-ball, margin-range and PSD constraints in place."""
    _rescale_into_unit_ball(state.embeddings.vectors)
    np.clip(state.margins.mr_user, MARGIN_FLOOR, 1.0, out=state.margins.mr_user)
    np.clip(state.margins.mr_item, MARGIN_FLOOR, 1.0, out=state.margins.mr_item)
    np.clip(state.margins.mr_latent, MARGIN_FLOOR, 1.0, out=state.margins.mr_latent)
    if not freeze_metrics:
        if tie_metrics:
            state.metrics.w_user[:] = project_psd(state.metrics.w_user)
        else:
            state.metrics.w_user[:] = project_psd(state.metrics.w_user)
            state.metrics.w_item[:] = project_psd(state.metrics.w_item)
            state.metrics.w_user_item[:] = project_psd(state.metrics.w_user_item)
    return state


def _tie_metric_arrays(state):
    """Alias the three metric matrices (and accumulators) to shared arrays."""
    if not state.metrics.tied:
        if not (np.array_equal(state.metrics.w_user, state.metrics.w_item)
                and np.array_equal(state.metrics.w_user, state.metrics.w_user_item)):
            raise DataValidationError(
                "cannot tie metric matrices: stored matrices differ")
        state.metrics.w_item = state.metrics.w_user
        state.metrics.w_user_item = state.metrics.w_user
    acc = state.accumulators
    if acc.w_item is not acc.w_user:
        acc.w_user += acc.w_item + acc.w_user_item
        acc.w_item = acc.w_user
        acc.w_user_item = acc.w_user


def _apply_gradients(state, grads, lr, eff):
    """One AdaGrad step per parameter group: embeddings, metrics, margins."""
    if grads.embeddings:
        rows = np.fromiter(grads.embeddings.keys(), dtype=np.int64,
                           count=len(grads.embeddings))
        g = np.stack([grads.embeddings[int(r)] for r in rows])
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite embedding gradient")
        acc = state.accumulators.embeddings
        acc[rows] += g * g
        state.embeddings.vectors[rows] -= lr * g / (np.sqrt(acc[rows]) + ADAGRAD_EPS)

    if not eff.freeze_metrics:
        if eff.tie_metrics:
            shared = grads.w_user + grads.w_item + grads.w_user_item
            adagrad_step(state.metrics.w_user, shared, lr,
                         state.accumulators.w_user)
        else:
            adagrad_step(state.metrics.w_user, grads.w_user, lr,
                         state.accumulators.w_user)
            adagrad_step(state.metrics.w_item, grads.w_item, lr,
                         state.accumulators.w_item)
            adagrad_step(state.metrics.w_user_item, grads.w_user_item, lr,
                         state.accumulators.w_user_item)

    if not eff.freeze_margins:
        adagrad_step(state.margins.mr_user, grads.mr_user, lr,
                     state.accumulators.mr_user)
        adagrad_step(state.margins.mr_item, grads.mr_item, lr,
                     state.accumulators.mr_item)
        adagrad_step(state.margins.mr_latent, grads.mr_latent, lr,
                     state.accumulators.mr_latent)


def train(split, config, state=None, log_path=None, epoch_callback=None):
    """Run the training loop and return ``(state, log_rows)``.

    ``log_rows`` holds one dict per epoch with the loss breakdown (batch
    means) and wall time; when ``log_path`` is given the same rows are
    streamed to a tab-separated file.  Pass a checkpointed ``state`` to
    resume.  ``epoch_callback(state, epoch, row)`` fires every
    ``eval_every`` epochs and on the final one.
    """
    config.validate()
    train_ds = split.train
    if train_ds.num_positive == 0:
        raise DataValidationError("training split has no positive pairs")
    hyper = config.hyper
    eff = variant_effects(hyper)

    if state is None:
        state = init_model(train_ds.num_users, train_ds.num_items,
                           hyper.dim, config.seed)
    else:
        if (state.embeddings.num_users != train_ds.num_users
                or state.embeddings.num_items != train_ds.num_items):
            raise DataValidationError("model state does not match the split")
    if eff.tie_metrics:
        _tie_metric_arrays(state)

    pair_sets = build_similar_pair_sets(train_ds, hyper.theta)
    batches_per_epoch = max(1, math.ceil(train_ds.num_positive / hyper.batch_size))

    log_rows = []
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "a", encoding="utf-8")
        if log_file.tell() == 0:
            log_file.write("\t".join(LOG_COLUMNS) + "\n")

    first_objective = None
    previous_objective = None
    stall_streak = 0
    last_good = None

    try:
        for epoch in range(state.epoch + 1, config.max_epochs + 1):
            started = time.perf_counter()
            rng = np.random.default_rng([state.seed, epoch])
            sums = None
            try:
                for _ in range(batches_per_epoch):
                    pairs = sample_positive_batch(train_ds, hyper.batch_size, rng)
                    batch = assemble_training_batch(
                        pairs, train_ds, state, pair_sets,
                        config.num_candidates, rng)
                    breakdown, grads = total_objective(batch, state, hyper)
                    _apply_gradients(state, grads, hyper.learning_rate, eff)
                    project_constraints(state, freeze_metrics=eff.freeze_metrics,
                                        tie_metrics=eff.tie_metrics)
                    values = breakdown.as_dict()
                    if sums is None:
                        sums = values
                    else:
                        for key, val in values.items():
                            sums[key] += val
            except NumericalError as exc:
                _abort_diverged(str(exc), last_good, config)

            means = {key: val / batches_per_epoch for key, val in sums.items()}
            objective = means["total"]
            elapsed = time.perf_counter() - started
            row = {"epoch": epoch,
                   "l_explicit_user": means["l_explicit_user"],
                   "l_explicit_item": means["l_explicit_item"],
                   "l_explicit": means["l_explicit"],
                   "l_latent": means["l_latent"],
                   "l_mml": means["l_mml"],
                   "l_p": means["l_p"],
                   "l_r": means["l_r"],
                   "objective": objective,
                   "seconds": elapsed}
            log_rows.append(row)
            if log_file is not None:
                log_file.write("\t".join(_format_log_value(row[c]) for c in LOG_COLUMNS) + "\n")
                log_file.flush()

            if first_objective is None and math.isfinite(objective):
                first_objective = objective
            if objective_diverged(objective, first_objective):
                _abort_diverged(
                    f"objective reached {objective:.4g} at epoch {epoch} "
                    f"(epoch-1 value {first_objective:.4g})", last_good, config)

            state.epoch = epoch
            last_good = state.clone()

            if epoch_callback is not None and (
                    epoch % config.eval_every == 0 or epoch == config.max_epochs):
                epoch_callback(state, epoch, row)

            if previous_objective is not None:
                rel = abs(objective - previous_objective) / max(abs(previous_objective), 1e-12)
                stall_streak = stall_streak + 1 if rel < config.tolerance else 0
                if stall_streak >= config.patience:
                    logger.info("converged at epoch %d (relative change < %g "
                                "for %d epochs)", epoch, config.tolerance,
                                config.patience)
                    break
            previous_objective = objective
    finally:
        if log_file is not None:
            log_file.close()

    state.validate()
    if config.checkpoint_path is not None:
        save_checkpoint(state, config.checkpoint_path)
    return state, log_rows


def _format_log_value(value):
    if isinstance(value, int):
        return str(value)
    return f"{value:.10g}"


def objective_diverged(objective, first_objective):
    """Divergence rule: non-finite loss, or 10x growth over the first epoch."""
    if not math.isfinite(objective):
        return True
    if first_objective is None:
        return False
    return objective > 10.0 * max(abs(first_objective), 1e-12)


def _abort_diverged(message, last_good, config):
    path = None
    if last_good is not None and config.checkpoint_path is not None:
        save_checkpoint(last_good, config.checkpoint_path)
        path = config.checkpoint_path
    raise TrainingDiverged(message, checkpoint_path=path)


def save_checkpoint(state, path):
    """Binary checkpoint: fixed header + little-endian float64 blocks.

    Header fields: version, num_users, num_items, dim, epoch, seed.
    Blocks in order: embeddings; the three metric matrices; the three
    margin vectors; then the AdaGrad accumulators in the same order.
    """
    emb = state.embeddings
    header = struct.pack(_HEADER_FMT, _CHECKPOINT_MAGIC, _CHECKPOINT_VERSION,
                         emb.num_users, emb.num_items, emb.dim,
                         state.epoch, state.seed)
    blocks = [
        emb.vectors,
        state.metrics.w_user, state.metrics.w_item, state.metrics.w_user_item,
        state.margins.mr_user, state.margins.mr_item, state.margins.mr_latent,
        state.accumulators.embeddings,
        state.accumulators.w_user, state.accumulators.w_item,
        state.accumulators.w_user_item,
        state.accumulators.mr_user, state.accumulators.mr_item,
        state.accumulators.mr_latent,
    ]
    with open(path, "wb") as fh:
        fh.write(header)
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize(_HEADER_FMT))
        if len(header) != struct.calcsize(_HEADER_FMT):
            raise DataValidationError(f"{path}: truncated checkpoint header")
        magic, version, num_users, num_items, dim, epoch, seed = struct.unpack(
            _HEADER_FMT, header)
        if magic != _CHECKPOINT_MAGIC:
            raise DataValidationError(f"{path}: not a checkpoint file")
        if version != _CHECKPOINT_VERSION:
            raise DataValidationError(f"{path}: unsupported version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)

    total = num_users + num_items
    shapes = [
        (total, dim),
        (dim, dim), (dim, dim), (dim, dim),
        (num_users,), (num_items,), (total,),
        (total, dim),
        (dim, dim), (dim, dim), (dim, dim),
        (num_users,), (num_items,), (total,),
    ]
    expected = sum(int(np.prod(s)) for s in shapes)
    if payload.size != expected:
        raise DataValidationError(
            f"{path}: payload holds {payload.size} values, expected {expected}")
    blocks = []
    cursor = 0
    for shape in shapes:
        size = int(np.prod(shape))
        blocks.append(payload[cursor: cursor + size].reshape(shape).copy())
        cursor += size
    return ModelState(
        embeddings=EmbeddingTable(num_users, num_items, dim, blocks[0]),
        metrics=MetricSet(blocks[1], blocks[2], blocks[3]),
        margins=MarginSet(blocks[4], blocks[5], blocks[6]),
        accumulators=AdagradState(
            embeddings=blocks[7],
            w_user=blocks[8], w_item=blocks[9], w_user_item=blocks[10],
            mr_user=blocks[11], mr_item=blocks[12], mr_latent=blocks[13]),
        epoch=int(epoch),
        seed=int(seed),
    )
