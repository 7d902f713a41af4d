"""Embedding-quality and recommendation-quality metrics.

Clustering quality: spherical k-means over L2-normalized item vectors,
scored by normalized mutual information against ground-truth item labels.
Recommendation quality: hit ratio and recall at K over rankings produced
by nearest-neighbor recommenders that use the learned distances.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError
from .metric import w_cdist

UBCF = "ubcf"
IBCF = "ibcf"
RECOMMEND_MODES = (UBCF, IBCF)

DEFAULT_NEIGHBORS = 20


@dataclass
class ClusterAssignment:
    """Cluster ids per item, optionally paired with ground-truth labels."""

    clusters: np.ndarray
    num_clusters: int
    labels: np.ndarray | None = None
    objective_trace: list = field(default_factory=list)

    def with_labels(self, labels):
        labels = np.asarray(labels)
        if labels.shape != self.clusters.shape:
            raise DataValidationError(
                f"labels shape {labels.shape} != clusters shape {self.clusters.shape}")
        return ClusterAssignment(self.clusters, self.num_clusters, labels,
                                 self.objective_trace)


@dataclass
class RankingResult:
    """One user's ranked recommendation list plus its relevance set."""

    user: int
    items: np.ndarray
    relevant: frozenset
    num_candidates: int


def _normalize_rows(vectors):
    """L2-normalize; zero rows get a deterministic basis-vector stand-in."""
    x = np.array(vectors, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = norms == 0.0
    if np.any(zero):
        dim = x.shape[1]
        for row in np.nonzero(zero)[0]:
            x[row, row % dim] = 1.0
        norms = np.linalg.norm(x, axis=1)
    return x / norms[:, None]


def _seed_centroids(x, k, rng):
    """k-means++-flavored seeding on cosine distance."""
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x[first]
    dist = 1.0 - x @ centroids[0]
    np.maximum(dist, 0.0, out=dist)
    for j in range(1, k):
        weights = dist ** 2
        total = float(weights.sum())
        if total > 0.0:
            probs = weights / total
            pick = int(rng.choice(n, p=probs))
        else:
            # All points coincide with picked centroids; take the first
            # row that is not one of them.
            chosen = {tuple(c) for c in centroids[:j]}
            pick = next(i for i in range(n) if tuple(x[i]) not in chosen)
        centroids[j] = x[pick]
        dist = np.minimum(dist, np.maximum(1.0 - x @ centroids[j], 0.0))
    return centroids


def spherical_kmeans(item_vectors, num_clusters, seed, max_iter=100):
    """Cosine k-means to an assignment fixpoint (or ``max_iter``).

    Empty clusters are reseeded from the point farthest from its current
    centroid.  The per-iteration objective (sum of cosine distances to the
    assigned centroid) is recorded in ``objective_trace``.
    """
    if num_clusters < 2:
        raise ValueError(f"need at least 2 clusters, got {num_clusters}")
    x = _normalize_rows(item_vectors)
    distinct = np.unique(x, axis=0).shape[0]
    if distinct < num_clusters:
        raise DataValidationError(
            f"only {distinct} distinct vectors for {num_clusters} clusters")

    rng = np.random.default_rng(seed)
    centroids = _seed_centroids(x, num_clusters, rng)
    assignment = None
    trace = []
    for _ in range(max_iter):
        sims = x @ centroids.T
        new_assignment = np.argmax(sims, axis=1)

        for cluster in range(num_clusters):
            if not np.any(new_assignment == cluster):
                fit = sims[np.arange(x.shape[0]), new_assignment]
                farthest = int(np.argmin(fit))
                centroids[cluster] = x[farthest]
                sims = x @ centroids.T
                new_assignment = np.argmax(sims, axis=1)

        trace.append(float(np.sum(1.0 - sims[np.arange(x.shape[0]), new_assignment])))
        if assignment is not None and np.array_equal(assignment, new_assignment):
            break
        assignment = new_assignment
        for cluster in range(num_clusters):
            members = x[assignment == cluster]
            if members.shape[0] == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0.0:
                centroids[cluster] = mean / norm

    return ClusterAssignment(clusters=assignment.astype(np.int64),
                             num_clusters=num_clusters,
                             objective_trace=trace)


def contingency_table(labels, clusters):
    """Joint count matrix over (label, cluster), with the value vocabularies."""
    label_values, label_codes = np.unique(labels, return_inverse=True)
    cluster_values, cluster_codes = np.unique(clusters, return_inverse=True)
    table = np.zeros((label_values.size, cluster_values.size), dtype=np.int64)
    np.add.at(table, (label_codes, cluster_codes), 1)
    return label_values, cluster_values, table


def nmi_score(labels, clusters):
    """Normalized mutual information, natural log, in [0, 1].

    Degenerate inputs (a single distinct label or a single distinct
    cluster) are defined as 0.
    """
    labels = np.asarray(labels)
    clusters = np.asarray(clusters)
    if labels.shape != clusters.shape or labels.ndim != 1 or labels.size == 0:
        raise DataValidationError("labels and clusters must be equal-length 1-d")
    _, _, table = contingency_table(labels, clusters)
    if table.shape[0] < 2 or table.shape[1] < 2:
        return 0.0
    n = labels.size
    joint = table / n
    p_label = joint.sum(axis=1)
    p_cluster = joint.sum(axis=0)
    nz = joint > 0
    mutual = float(np.sum(
        joint[nz] * np.log(joint[nz] / np.outer(p_label, p_cluster)[nz])))
    h_label = -float(np.sum(p_label * np.log(p_label)))
    h_cluster = -float(np.sum(p_cluster * np.log(p_cluster)))
    denom = 0.5 * (h_label + h_cluster)
    if denom <= 0.0:
        return 0.0
    return float(np.clip(mutual / denom, 0.0, 1.0))


def nmi(assignment):
    """NMI of a :class:`ClusterAssignment` whose labels are attached."""
    if assignment.labels is None:
        raise DataValidationError("cluster assignment has no ground-truth labels")
    return nmi_score(assignment.labels, assignment.clusters)


def _rank_items(scores, excluded, k_rec):
    """Descending-score ranking with stable item-id tie-breaks."""
    scores = scores.copy()
    scores[excluded] = -np.inf
    order = np.argsort(-scores, kind="stable")
    keep = order[np.isfinite(scores[order])]
    return keep[:k_rec]


def recommend_topk(state, train, user, k_rec, mode=UBCF, k_nn=DEFAULT_NEIGHBORS):
    """Rank unseen items for one user under the learned metrics.

    ubcf: weight the user's k nearest users (user-user metric) by
    1/(1+distance) and score each item by the weighted count of neighbors
    who positively rated it.  ibcf: score each item by the negative mean
    item-item distance to the user's positively rated items.  Training
    positives are excluded from the candidates; the list is truncated to
    ``k_rec`` (no padding).
    """
    if mode not in RECOMMEND_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    positives = train.user_items[user]
    if positives.size == 0:
        raise DataValidationError(f"user {user} has no training positives")
    emb = state.embeddings
    num_items = train.num_items

    if mode == UBCF:
        dists = w_cdist(emb.user_vec(user)[None, :], emb.user_matrix(),
                        state.metrics.w_user)[0]
        dists[user] = np.inf
        k = min(k_nn, train.num_users - 1)
        neighbors = np.argpartition(dists, k - 1)[:k]
        scores = np.zeros(num_items)
        for v in neighbors:
            weight = 1.0 / (1.0 + dists[v])
            rated = train.user_items[int(v)]
            if rated.size:
                scores[rated] += weight
    else:
        pos_vecs = emb.item_matrix()[positives]
        dists = w_cdist(emb.item_matrix(), pos_vecs, state.metrics.w_item)
        scores = -dists.mean(axis=1)

    return _rank_items(scores, positives, k_rec)


def evaluate_rankings(state, train, test, mode=UBCF, k_rec=50,
                      k_nn=DEFAULT_NEIGHBORS, workers=1):
    """Rank items for every evaluable user.

    Returns ``(results, skipped_cold)``: users without training positives
    are skipped and counted; users without test positives have no
    relevance set and are not evaluated at all.
    """
    evaluable = []
    skipped_cold = 0
    for user in range(train.num_users):
        if test.user_items[user].size == 0:
            continue
        if train.user_items[user].size == 0:
            skipped_cold += 1
            continue
        evaluable.append(user)

    def rank_one(user):
        items = recommend_topk(state, train, user, k_rec, mode=mode, k_nn=k_nn)
        return RankingResult(
            user=user,
            items=items,
            relevant=frozenset(test.user_items[user].tolist()),
            num_candidates=train.num_items - int(train.user_items[user].size),
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(rank_one, evaluable))
    else:
        results = [rank_one(u) for u in evaluable]
    return results, skipped_cold


def _check_results(results):
    if not results:
        raise DataValidationError("no evaluable users")


def hit_ratio_at_k(results, k):
    """Fraction of evaluated users with >= 1 relevant item in their top k."""
    _check_results(results)
    hits = sum(
        1 for r in results
        if any(int(item) in r.relevant for item in r.items[:k]))
    return hits / len(results)


def recall_at_k(results, k):
    """Mean per-user fraction of relevant items retrieved in the top k."""
    _check_results(results)
    total = 0.0
    for r in results:
        found = sum(1 for item in r.items[:k] if int(item) in r.relevant)
        total += found / len(r.relevant)
    return total / len(results)


def expected_random_hit_ratio(num_candidates, num_relevant, k):
    """Closed-form E[HR@k] for a uniformly random ranking.

    With t relevant items among n candidates the chance that a random
    top-k contains at least one is ``1 - C(n-t, k) / C(n, k)``; for a
    single relevant item this reduces to k/n.
    """
    n, t = int(num_candidates), int(num_relevant)
    if t <= 0 or n <= 0:
        return 0.0
    if k >= n or t > n - k:
        return 1.0
    return 1.0 - math.comb(n - t, k) / math.comb(n, k)
