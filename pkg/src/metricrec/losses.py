"""Loss terms, the combined training objective, and its analytic gradients.

All distance quantities inside the losses are *squared* weighted
distances; the hinge ``|J|+ = max(J, 0)`` takes subgradient 0 at the kink,
so inactive triplets contribute nothing.  Gradient conventions for the
quadratic form ``F(x, y) = (e_x - e_y)^T W (e_x - e_y)`` with symmetric W:

    dF/dW   = (e_x - e_y)(e_x - e_y)^T
    dF/de_x = 2 W (e_x - e_y)          dF/de_y = -2 W (e_x - e_y)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .metric import squared_w_distance
from .sampling import USER

logger = logging.getLogger(__name__)

VARIANTS = ("mml", "euc-mml", "w-mml", "m-mml", "np-mml", "nr-mml")
RANK_WEIGHT_MODES = ("warp", "constant")

DEFAULT_MARGIN = 0.02


@dataclass
class MarginSet:
    """Per-entity adaptive margins, each constrained to (0, 1].

    ``mr_user`` is indexed by the anchor user of a dual triplet,
    ``mr_item`` by its anchor item, and ``mr_latent`` by the anchor's
    embedding row (users first, then items).
    """

    mr_user: np.ndarray
    mr_item: np.ndarray
    mr_latent: np.ndarray

    @classmethod
    def constant(cls, num_users, num_items, value=DEFAULT_MARGIN):
        return cls(
            np.full(num_users, value, dtype=np.float64),
            np.full(num_items, value, dtype=np.float64),
            np.full(num_users + num_items, value, dtype=np.float64),
        )

    def validate(self):
        for name, v in (("mr_user", self.mr_user), ("mr_item", self.mr_item),
                        ("mr_latent", self.mr_latent)):
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"{name} contains non-finite values")
            if np.any(v <= 0.0) or np.any(v > 1.0):
                raise NumericalError(f"{name} escaped (0, 1]")


@dataclass
class Hyperparams:
    """Model hyperparameters; defaults follow the tuned reference setting."""

    alpha: float = 0.7            # explicit vs latent loss mix
    lam: float = 0.5              # user vs item balance inside the explicit loss
    theta: float = 0.3            # Jaccard threshold for similar-pair sets
    omega_p: float = 0.03         # covariance penalty weight
    omega_r: float = 0.03         # margin penalty weight
    learning_rate: float = 0.02
    dim: int = 32
    batch_size: int = 512
    variant: str = "mml"
    rank_weight_mode: str = "warp"
    covariance_squared: bool = False

    def validate(self):
        for name in ("alpha", "lam", "theta"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if self.omega_p < 0 or self.omega_r < 0:
            raise ValueError("omega_p and omega_r must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.dim < 1 or self.batch_size < 1:
            raise ValueError("dim and batch_size must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.rank_weight_mode not in RANK_WEIGHT_MODES:
            raise ValueError(f"unknown rank weight mode {self.rank_weight_mode!r}")


@dataclass(frozen=True)
class VariantEffects:
    """What an ablation variant freezes, ties, or zeroes."""

    freeze_metrics: bool
    tie_metrics: bool
    freeze_margins: bool
    omega_p: float
    omega_r: float


def variant_effects(hyper):
    v = hyper.variant
    return VariantEffects(
        freeze_metrics=(v == "euc-mml"),
        tie_metrics=(v == "w-mml"),
        freeze_margins=(v == "m-mml"),
        omega_p=0.0 if v == "np-mml" else hyper.omega_p,
        omega_r=0.0 if v == "nr-mml" else hyper.omega_r,
    )


def rank_weight(draws_to_violation, num_candidates, mode="warp"):
    """WARP-style rank weight ``log(floor(M / nu) + 1)``.

    ``nu`` is the number of candidate draws needed to find a violating
    negative, capped at the pool size M; a violator on the first draw
    gives the largest weight and no violator at all gives the log(2)
    floor.  ``constant`` mode returns 1.
    """
    if mode == "constant":
        return 1.0
    if num_candidates < 1:
        raise ValueError("num_candidates must be >= 1")
    nu = min(max(int(draws_to_violation), 1), int(num_candidates))
    return math.log(num_candidates // nu + 1)


def _hinge(value):
    return value if value > 0.0 else 0.0


def _dual_user_arg(triplet, model, margins):
    emb = model.embeddings
    e_a = emb.user_vec(triplet.user_anchor)
    e_b = emb.user_vec(triplet.user_contrast)
    e_c = emb.item_vec(triplet.item_anchor)
    w = model.metrics
    return (margins.mr_user[triplet.user_anchor]
            + squared_w_distance(e_a, e_c, w.w_user_item)
            - squared_w_distance(e_a, e_b, w.w_user)
            - squared_w_distance(e_b, e_c, w.w_user_item))


def _dual_item_arg(triplet, model, margins):
    emb = model.embeddings
    e_a = emb.user_vec(triplet.user_anchor)
    e_c = emb.item_vec(triplet.item_anchor)
    e_d = emb.item_vec(triplet.item_contrast)
    w = model.metrics
    return (margins.mr_item[triplet.item_anchor]
            + squared_w_distance(e_a, e_c, w.w_user_item)
            - squared_w_distance(e_c, e_d, w.w_item)
            - squared_w_distance(e_a, e_d, w.w_user_item))


def _latent_arg(triplet, model, margins):
    emb = model.embeddings
    offset = 0 if triplet.kind == USER else emb.num_users
    w = model.metrics.w_user if triplet.kind == USER else model.metrics.w_item
    e_a = emb.vectors[offset + triplet.anchor]
    return (margins.mr_latent[offset + triplet.anchor]
            + squared_w_distance(e_a, emb.vectors[offset + triplet.similar], w)
            - squared_w_distance(e_a, emb.vectors[offset + triplet.dissimilar], w))


def loss_explicit_user(triplet, model, margins, mode="warp"):
    """User-side dual hinge, weighted by the user-side rank weight."""
    t = rank_weight(triplet.nu_user, triplet.num_candidates, mode)
    return t * _hinge(_dual_user_arg(triplet, model, margins))


def loss_explicit_item(triplet, model, margins, mode="warp"):
    """Item-side dual hinge, weighted by the item-side rank weight."""
    t = rank_weight(triplet.nu_item, triplet.num_candidates, mode)
    return t * _hinge(_dual_item_arg(triplet, model, margins))


def loss_explicit(triplets, model, margins, lam, mode="warp"):
    """Balanced explicit loss: lam * sum(user side) + (1-lam) * sum(item side)."""
    l_user = sum(loss_explicit_user(t, model, margins, mode) for t in triplets)
    l_item = sum(loss_explicit_item(t, model, margins, mode) for t in triplets)
    return lam * l_user + (1.0 - lam) * l_item


def loss_latent(triplets, model, margins, mode="warp"):
    """Sum of rank-weighted latent hinges (user and item kinds together)."""
    total = 0.0
    for t in triplets:
        weight = rank_weight(t.nu, t.num_candidates, mode)
        total += weight * _hinge(_latent_arg(t, model, margins))
    return total


def loss_mml(explicit, latent, alpha):
    return alpha * explicit + (1.0 - alpha) * latent


def _covariance_value_and_grad(x, squared):
    """Penalty value plus its gradient with respect to the stacked rows."""
    count = x.shape[0]
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / count
    fro = float(np.linalg.norm(cov))
    diag = np.diag(cov)
    diag_sq = float(np.sum(diag ** 2))
    if squared:
        value = (fro * fro - diag_sq) / count
        g_cov = (2.0 * cov - 2.0 * np.diag(diag)) / count
    else:
        value = (fro - diag_sq) / count
        g_fro = cov / fro if fro > 0.0 else np.zeros_like(cov)
        g_cov = (g_fro - 2.0 * np.diag(diag)) / count
    row_grads = (2.0 / count) * centered @ g_cov
    return value, row_grads


def covariance_penalty(batch_vectors, squared=False):
    """Batch covariance penalty discouraging correlated embedding axes.

    Builds the k x k sample covariance E of the batch rows and returns
    ``(1/O) * (||E||_f - ||diag(E)||_2^2)``.  The mixed norm (Frobenius
    norm minus a *squared* 2-norm) is intentional; ``squared=True``
    switches to the homogeneous ``||E||_f^2`` reading.
    """
    x = np.asarray(batch_vectors, dtype=np.float64)
    if x.shape[0] < 2:
        logger.warning("covariance penalty skipped: %d row(s) < 2", x.shape[0])
        return 0.0
    value, _ = _covariance_value_and_grad(x, squared)
    return value


def margin_penalty(margins):
    """Negated mean margin; minimizing it pushes margins up."""
    return -(float(margins.mr_user.mean())
             + float(margins.mr_item.mean())
             + float(margins.mr_latent.mean()))


@dataclass
class LossBreakdown:
    l_explicit_user: float
    l_explicit_item: float
    l_explicit: float
    l_latent: float
    l_mml: float
    l_p: float
    l_r: float
    total: float

    def check_finite(self):
        for name, value in self.__dict__.items():
            if not math.isfinite(value):
                raise NumericalError(f"loss term {name} is non-finite ({value})")

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class GradientBundle:
    """Sparse embedding-row gradients plus dense metric and margin gradients."""

    embeddings: dict
    w_user: np.ndarray
    w_item: np.ndarray
    w_user_item: np.ndarray
    mr_user: np.ndarray
    mr_item: np.ndarray
    mr_latent: np.ndarray

    @classmethod
    def zeros(cls, num_users, num_items, dim):
        return cls(
            embeddings={},
            w_user=np.zeros((dim, dim)),
            w_item=np.zeros((dim, dim)),
            w_user_item=np.zeros((dim, dim)),
            mr_user=np.zeros(num_users),
            mr_item=np.zeros(num_items),
            mr_latent=np.zeros(num_users + num_items),
        )

    def add_row(self, row, grad):
        existing = self.embeddings.get(row)
        if existing is None:
            self.embeddings[row] = grad.copy()
        else:
            existing += grad

    def check_finite(self):
        for row, g in self.embeddings.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite embedding gradient at row {row}")
        for name in ("w_user", "w_item", "w_user_item",
                     "mr_user", "mr_item", "mr_latent"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NumericalError(f"non-finite gradient in {name}")


def _outer(diff):
    return np.outer(diff, diff)


def total_objective(batch, model, hyper):
    """Objective value and gradients for one triplet batch.

    Returns ``(LossBreakdown, GradientBundle)``.  The bundle covers every
    embedding row the batch touches, all three metric matrices, and dense
    margin vectors (hinge terms hit anchor margins; the margin penalty
    spreads a constant pull over every component).  Variant effects are
    applied here: frozen parameter groups get exactly-zero gradients and
    zeroed penalty weights drop out of both value and gradient.
    """
    eff = variant_effects(hyper)
    emb = model.embeddings
    metrics = model.metrics
    margins = model.margins
    num_users, num_items, dim = emb.num_users, emb.num_items, emb.dim
    mode = hyper.rank_weight_mode

    grads = GradientBundle.zeros(num_users, num_items, dim)
    sum_user = 0.0
    sum_item = 0.0

    for t in batch.duals:
        row_a = t.user_anchor
        row_b = t.user_contrast
        row_c = num_users + t.item_anchor
        row_d = num_users + t.item_contrast
        e_a, e_b = emb.vectors[row_a], emb.vectors[row_b]
        e_c, e_d = emb.vectors[row_c], emb.vectors[row_d]
        d_ac = e_a - e_c

        weight_u = rank_weight(t.nu_user, t.num_candidates, mode)
        arg_u = _dual_user_arg(t, model, margins)
        sum_user += weight_u * _hinge(arg_u)
        if arg_u > 0.0:
            s = hyper.alpha * hyper.lam * weight_u
            d_ab = e_a - e_b
            d_bc = e_b - e_c
            wui_ac = metrics.w_user_item @ d_ac
            wu_ab = metrics.w_user @ d_ab
            wui_bc = metrics.w_user_item @ d_bc
            grads.add_row(row_a, s * 2.0 * (wui_ac - wu_ab))
            grads.add_row(row_b, s * 2.0 * (wu_ab - wui_bc))
            grads.add_row(row_c, s * 2.0 * (wui_bc - wui_ac))
            grads.w_user_item += s * (_outer(d_ac) - _outer(d_bc))
            grads.w_user -= s * _outer(d_ab)
            grads.mr_user[t.user_anchor] += s

        weight_i = rank_weight(t.nu_item, t.num_candidates, mode)
        arg_i = _dual_item_arg(t, model, margins)
        sum_item += weight_i * _hinge(arg_i)
        if arg_i > 0.0:
            s = hyper.alpha * (1.0 - hyper.lam) * weight_i
            d_cd = e_c - e_d
            d_ad = e_a - e_d
            wui_ac = metrics.w_user_item @ d_ac
            wi_cd = metrics.w_item @ d_cd
            wui_ad = metrics.w_user_item @ d_ad
            grads.add_row(row_a, s * 2.0 * (wui_ac - wui_ad))
            grads.add_row(row_c, s * 2.0 * (-wui_ac - wi_cd))
            grads.add_row(row_d, s * 2.0 * (wi_cd + wui_ad))
            grads.w_user_item += s * (_outer(d_ac) - _outer(d_ad))
            grads.w_item -= s * _outer(d_cd)
            grads.mr_item[t.item_anchor] += s

    sum_latent = 0.0
    for t in batch.latents:
        offset = 0 if t.kind == USER else num_users
        row_a = offset + t.anchor
        row_f = offset + t.similar
        row_g = offset + t.dissimilar
        w = metrics.w_user if t.kind == USER else metrics.w_item
        weight = rank_weight(t.nu, t.num_candidates, mode)
        arg = _latent_arg(t, model, margins)
        sum_latent += weight * _hinge(arg)
        if arg > 0.0:
            s = (1.0 - hyper.alpha) * weight
            d_af = emb.vectors[row_a] - emb.vectors[row_f]
            d_ag = emb.vectors[row_a] - emb.vectors[row_g]
            w_af = w @ d_af
            w_ag = w @ d_ag
            grads.add_row(row_a, s * 2.0 * (w_af - w_ag))
            grads.add_row(row_f, s * -2.0 * w_af)
            grads.add_row(row_g, s * 2.0 * w_ag)
            delta = s * (_outer(d_af) - _outer(d_ag))
            if t.kind == USER:
                grads.w_user += delta
            else:
                grads.w_item += delta
            grads.mr_latent[row_a] += s

    l_explicit = hyper.lam * sum_user + (1.0 - hyper.lam) * sum_item
    l_lat = sum_latent
    l_combined = loss_mml(l_explicit, l_lat, hyper.alpha)

    touched = batch.touched_entity_rows(num_users)
    l_p = 0.0
    if touched.size >= 2:
        l_p, row_grads = _covariance_value_and_grad(
            emb.vectors[touched], hyper.covariance_squared)
        if eff.omega_p != 0.0:
            for row, g in zip(touched.tolist(), row_grads):
                grads.add_row(row, eff.omega_p * g)
    elif eff.omega_p != 0.0:
        logger.warning("covariance penalty skipped: batch touches %d row(s)",
                       touched.size)

    l_r = margin_penalty(margins)
    if eff.omega_r != 0.0:
        grads.mr_user -= eff.omega_r / num_users
        grads.mr_item -= eff.omega_r / num_items
        grads.mr_latent -= eff.omega_r / (num_users + num_items)

    if eff.freeze_metrics:
        grads.w_user[:] = 0.0
        grads.w_item[:] = 0.0
        grads.w_user_item[:] = 0.0
    if eff.freeze_margins:
        grads.mr_user[:] = 0.0
        grads.mr_item[:] = 0.0
        grads.mr_latent[:] = 0.0

    breakdown = LossBreakdown(
        l_explicit_user=sum_user,
        l_explicit_item=sum_item,
        l_explicit=l_explicit,
        l_latent=l_lat,
        l_mml=l_combined,
        l_p=l_p,
        l_r=l_r,
        total=l_combined + eff.omega_p * l_p + eff.omega_r * l_r,
    )
    breakdown.check_finite()
    grads.check_finite()
    return breakdown, grads
