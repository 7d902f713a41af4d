"""Similar-pair buffer sets and triplet samplers for training batches.

Two kinds of triplets feed the losses.  A *dual* triplet pairs one
observed positive interaction (a, c) with a contrast user b (who did not
interact with c) and a contrast item d (which a did not interact with).
A *latent* triplet pairs an anchor with one Jaccard-similar entity of the
same kind and one entity that is not similar to it.

Hard-negative selection follows a J-candidate rule: J distinct valid
negatives are drawn and the one farthest from the anchor (under the
current user-item metric) is kept.  The draw order also yields the rank
statistic used by the WARP-style loss weight: the index of the first
candidate that violates the margin, capped at J.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDatasetError
from .metric import squared_w_distance

USER = "user"
ITEM = "item"


@dataclass(frozen=True)
class DualTriplet:
    """<a, b, c> and <c, d, a>: one positive pair plus two hard negatives.

    ``nu_user``/``nu_item`` record how many candidate draws were needed to
    find a margin-violating negative on each side (capped at
    ``num_candidates``); the loss converts them into rank weights.
    """

    user_anchor: int
    user_contrast: int
    item_anchor: int
    item_contrast: int
    nu_user: int
    nu_item: int
    num_candidates: int


@dataclass(frozen=True)
class LatentTriplet:
    """Anchor, one similar entity, one dissimilar entity, all of one kind."""

    kind: str
    anchor: int
    similar: int
    dissimilar: int
    nu: int
    num_candidates: int


@dataclass
class TripletBatch:
    duals: list = field(default_factory=list)
    latents: list = field(default_factory=list)

    def __len__(self):
        return len(self.duals) + len(self.latents)

    def touched_entity_rows(self, num_users):
        """Distinct embedding rows referenced by the batch, sorted."""
        rows = set()
        for t in self.duals:
            rows.add(t.user_anchor)
            rows.add(t.user_contrast)
            rows.add(num_users + t.item_anchor)
            rows.add(num_users + t.item_contrast)
        for t in self.latents:
            offset = 0 if t.kind == USER else num_users
            rows.add(offset + t.anchor)
            rows.add(offset + t.similar)
            rows.add(offset + t.dissimilar)
        return np.asarray(sorted(rows), dtype=np.int64)


@dataclass
class SimilarPairSets:
    """Unordered entity pairs whose interaction lists pass the Jaccard bar."""

    theta: float
    num_users: int
    num_items: int
    user_pairs: dict
    item_pairs: dict
    user_partners: list
    item_partners: list

    def pairs(self, kind):
        return self.user_pairs if kind == USER else self.item_pairs

    def partners(self, kind, entity):
        table = self.user_partners if kind == USER else self.item_partners
        return table[entity]

    def num_entities(self, kind):
        return self.num_users if kind == USER else self.num_items

    def contains(self, kind, a, b):
        key = (a, b) if a < b else (b, a)
        return key in self.pairs(kind)

    def export(self, path):
        """Audit dump: ``kind<tab>id_a<tab>id_b<tab>jaccard`` per pair."""
        with open(path, "w", encoding="utf-8") as fh:
            for kind in (USER, ITEM):
                for (a, b), jac in sorted(self.pairs(kind).items()):
                    fh.write(f"{kind}\t{a}\t{b}\t{jac:.17g}\n")


def _jaccard_pairs(lists, theta):
    """Exact over-threshold Jaccard pairs via co-occurrence counting.

    Only pairs sharing at least one counterpart are tested; pairs sharing
    none have Jaccard 0 and can never pass a positive threshold.
    """
    degrees = [v.size for v in lists]
    counts = Counter()
    inverted = {}
    for entity, members in enumerate(lists):
        for member in members.tolist():
            inverted.setdefault(member, []).append(entity)
    for group in inverted.values():
        for j in range(len(group)):
            for l in range(j + 1, len(group)):
                counts[(group[j], group[l])] += 1
    pairs = {}
    for (a, b), inter in counts.items():
        union = degrees[a] + degrees[b] - inter
        jac = inter / union
        if jac > theta:
            pairs[(a, b)] = jac
    return pairs


def _partner_table(pairs, count):
    table = [[] for _ in range(count)]
    for a, b in pairs:
        table[a].append(b)
        table[b].append(a)
    return [np.asarray(sorted(v), dtype=np.int64) for v in table]


def build_similar_pair_sets(train, theta):
    """Build the user-pair and item-pair buffer sets from one split.

    Membership: Jaccard(list(a), list(b)) > theta over positive
    interaction lists.  Entities with empty lists belong to no pair.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    # list(a) for a user is its positive items; inverting user lists by
    # item is exactly iterating item_users, so reuse the stored lists.
    user_pairs = _jaccard_pairs(train.user_items, theta)
    item_pairs = _jaccard_pairs(train.item_users, theta)
    return SimilarPairSets(
        theta=float(theta),
        num_users=train.num_users,
        num_items=train.num_items,
        user_pairs=user_pairs,
        item_pairs=item_pairs,
        user_partners=_partner_table(user_pairs, train.num_users),
        item_partners=_partner_table(item_pairs, train.num_items),
    )


def sample_positive_batch(train, batch_size, rng):
    """Uniform with replacement over the split's positive pairs."""
    if train.num_positive == 0:
        raise EmptyDatasetError("cannot sample from a split with no positives")
    if batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {batch_size}")
    idx = rng.integers(0, train.num_positive, size=batch_size)
    return train.positive_pairs[idx]


def _draw_distinct(forbidden, total, want, rng):
    """Draw up to `want` distinct ids from [0, total) avoiding `forbidden`.

    Rejection sampling with an enumeration fallback so that small pools
    are still covered exhaustively (needed for the J = pool-size case).
    Returns ids in draw order, or None when no valid id exists.
    """
    pool = total - len(forbidden)
    if pool <= 0:
        return None
    want = min(want, pool)
    picked = []
    seen = set()
    attempts, cap = 0, max(8 * want, 48)
    while len(picked) < want and attempts < cap:
        cand = int(rng.integers(total))
        attempts += 1
        if cand in forbidden or cand in seen:
            continue
        seen.add(cand)
        picked.append(cand)
    if len(picked) < want:
        rest = np.asarray(
            [e for e in range(total) if e not in forbidden and e not in seen],
            dtype=np.int64)
        rng.shuffle(rest)
        picked.extend(rest[: want - len(picked)].tolist())
    return np.asarray(picked, dtype=np.int64)


def _first_violation(args, cap):
    """1-based index of the first positive hinge argument, capped."""
    for idx, val in enumerate(args, start=1):
        if val > 0.0:
            return idx
    return cap


def sample_dual_triplet(pair, train, state, num_candidates, rng):
    """Draw the hard-negative user and item for one positive pair.

    Keeps, on each side, the candidate that maximizes the user-item
    distance to its anchor.  Returns None (skip) when an anchor has
    interacted with every possible counterpart.
    """
    a, c = int(pair[0]), int(pair[1])
    emb = state.embeddings
    w_ui = state.metrics.w_user_item
    e_a = emb.user_vec(a)
    e_c = emb.item_vec(c)
    f_ac = squared_w_distance(e_a, e_c, w_ui)

    user_cands = _draw_distinct(train.item_user_sets[c], train.num_users,
                                num_candidates, rng)
    if user_cands is None:
        return None
    cand_vecs = emb.user_matrix()[user_cands]
    diff = cand_vecs - e_c
    f_bc = np.einsum("ij,jk,ik->i", diff, w_ui, diff)
    b = int(user_cands[int(np.argmax(f_bc))])
    diff_ab = e_a - cand_vecs
    f_ab = np.einsum("ij,jk,ik->i", diff_ab, state.metrics.w_user, diff_ab)
    user_args = state.margins.mr_user[a] + f_ac - f_ab - f_bc
    nu_user = _first_violation(user_args, num_candidates)

    item_cands = _draw_distinct(train.user_item_sets[a], train.num_items,
                                num_candidates, rng)
    if item_cands is None:
        return None
    cand_vecs = emb.item_matrix()[item_cands]
    diff = e_a - cand_vecs
    f_ad = np.einsum("ij,jk,ik->i", diff, w_ui, diff)
    d = int(item_cands[int(np.argmax(f_ad))])
    diff_cd = e_c - cand_vecs
    f_cd = np.einsum("ij,jk,ik->i", diff_cd, state.metrics.w_item, diff_cd)
    item_args = state.margins.mr_item[c] + f_ac - f_cd - f_ad
    nu_item = _first_violation(item_args, num_candidates)

    return DualTriplet(a, b, c, d, nu_user, nu_item, num_candidates)


def sample_latent_triplet(anchor, sets, kind, rng, state=None, num_candidates=1):
    """Draw (similar f, dissimilar g) for one anchor, or skip.

    f is uniform over the anchor's buffer-set partners; g is uniform over
    same-kind entities that are neither partnered with the anchor nor the
    anchor itself.  When a model state is supplied, the rank statistic nu
    is estimated from the dissimilar draw: additional candidates are
    probed (up to ``num_candidates``) until one violates the margin, and g
    stays the first draw so its distribution remains uniform.
    """
    anchor = int(anchor)
    partners = sets.partners(kind, anchor)
    if partners.size == 0:
        return None
    total = sets.num_entities(kind)
    forbidden = set(partners.tolist())
    forbidden.add(anchor)
    if total - len(forbidden) <= 0:
        return None

    similar = int(partners[int(rng.integers(partners.size))])

    def draw_dissimilar():
        while True:
            cand = int(rng.integers(total))
            if cand not in forbidden:
                return cand

    dissimilar = draw_dissimilar()
    nu = num_candidates
    if state is not None:
        emb = state.embeddings
        offset = 0 if kind == USER else emb.num_users
        w = state.metrics.w_user if kind == USER else state.metrics.w_item
        e_a = emb.vectors[offset + anchor]
        f_sim = squared_w_distance(e_a, emb.vectors[offset + similar], w)
        base = state.margins.mr_latent[offset + anchor] + f_sim
        cand = dissimilar
        for draw in range(1, num_candidates + 1):
            if base - squared_w_distance(e_a, emb.vectors[offset + cand], w) > 0.0:
                nu = draw
                break
            if draw < num_candidates:
                cand = draw_dissimilar()
    return LatentTriplet(kind, anchor, similar, dissimilar, nu, num_candidates)


def assemble_training_batch(pairs, train, state, sets, num_candidates, rng):
    """One training batch: per positive pair, a dual triplet plus latent
    triplets for the anchor user and anchor item.

    Pairs whose dual triplet cannot be formed are dropped entirely.
    """
    batch = TripletBatch()
    for pair in pairs:
        dual = sample_dual_triplet(pair, train, state, num_candidates, rng)
        if dual is None:
            continue
        batch.duals.append(dual)
        for kind, anchor in ((USER, dual.user_anchor), (ITEM, dual.item_anchor)):
            latent = sample_latent_triplet(
                anchor, sets, kind, rng, state=state,
                num_candidates=num_candidates)
            if latent is not None:
                batch.latents.append(latent)
    return batch
