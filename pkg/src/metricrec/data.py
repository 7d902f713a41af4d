"""Rating-matrix ingestion, dense re-indexing, and train/val/test splitting.

Input files are UTF-8 delimited text with one interaction per line:
``user<delim>item<delim>rating``.  Tokens are re-indexed to dense integer
ids in order of first appearance; the token -> id mapping can be exported
to (and re-loaded from) a sidecar "entity index" file so that round trips
preserve ids exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    DataValidationError,
    EmptyDatasetError,
)

DELIMITERS = {"tsv": "\t", "csv": ","}
DEFAULT_POSITIVE_THRESHOLD = 3.0
RATING_MIN = 1.0
RATING_MAX = 5.0


@dataclass
class RatingDataset:
    """A sparse user-item rating matrix with positives binarized.

    A rated pair is *positive* when its rating is at or above the
    positivity threshold; everything else (rated below threshold or never
    rated) counts as negative.  Interaction lists contain the positive
    counterparts of each entity and drive both similarity computation and
    negative sampling.
    """

    num_users: int
    num_items: int
    ratings: dict
    threshold: float
    user_tokens: list
    item_tokens: list
    positive_pairs: np.ndarray = field(repr=False)
    user_items: list = field(repr=False)
    item_users: list = field(repr=False)
    user_item_sets: list = field(repr=False)
    item_user_sets: list = field(repr=False)

    @classmethod
    def from_ratings(cls, num_users, num_items, ratings, threshold,
                     user_tokens=None, item_tokens=None):
        if user_tokens is None:
            user_tokens = [str(u) for u in range(num_users)]
        if item_tokens is None:
            item_tokens = [str(i) for i in range(num_items)]
        for (u, i) in ratings:
            if not (0 <= u < num_users and 0 <= i < num_items):
                raise DataValidationError(
                    f"pair ({u}, {i}) outside [0,{num_users}) x [0,{num_items})")
        positives = sorted((u, i) for (u, i), r in ratings.items() if r >= threshold)
        pos_array = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
        user_items = [[] for _ in range(num_users)]
        item_users = [[] for _ in range(num_items)]
        for u, i in positives:
            user_items[u].append(i)
            item_users[i].append(u)
        user_items = [np.asarray(v, dtype=np.int64) for v in user_items]
        item_users = [np.asarray(v, dtype=np.int64) for v in item_users]
        ds = cls(
            num_users=num_users,
            num_items=num_items,
            ratings=dict(ratings),
            threshold=float(threshold),
            user_tokens=list(user_tokens),
            item_tokens=list(item_tokens),
            positive_pairs=pos_array,
            user_items=user_items,
            item_users=item_users,
            user_item_sets=[frozenset(v.tolist()) for v in user_items],
            item_user_sets=[frozenset(v.tolist()) for v in item_users],
        )
        ds.positive_pairs.setflags(write=False)
        return ds

    @property
    def num_ratings(self):
        return len(self.ratings)

    @property
    def num_positive(self):
        return int(self.positive_pairs.shape[0])

    def is_positive(self, user, item):
        return item in self.user_item_sets[user]

    def positive_pair_set(self):
        return {(int(u), int(i)) for u, i in self.positive_pairs}


@dataclass
class DatasetSplit:
    """Disjoint train/validation/test views over one source dataset."""

    train: RatingDataset
    validation: RatingDataset
    test: RatingDataset
    fold_seed: int

    def validate(self, source=None):
        parts = [self.train.positive_pair_set(),
                 self.validation.positive_pair_set(),
                 self.test.positive_pair_set()]
        union = parts[0] | parts[1] | parts[2]
        total = sum(len(p) for p in parts)
        if len(union) != total:
            raise DataValidationError("split positive pairs are not disjoint")
        if source is not None and union != source.positive_pair_set():
            raise DataValidationError("split does not cover the source positives")


def _parse_rating(text, lineno):
    try:
        value = float(text)
    except ValueError:
        raise DataFormatError(f"line {lineno}: rating {text!r} is not a number") from None
    if math.isnan(value):
        raise DataFormatError(f"line {lineno}: rating is NaN")
    return value


def read_entity_index(path):
    """Read a sidecar entity-index file: ``token<tab>dense_id<tab>kind``."""
    users, items = {}, {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataFormatError(f"{path}: line {lineno}: expected 3 fields")
            token, dense, kind = fields
            if kind == "user":
                users[token] = int(dense)
            elif kind == "item":
                items[token] = int(dense)
            else:
                raise DataFormatError(f"{path}: line {lineno}: unknown kind {kind!r}")
    return users, items


def write_entity_index(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for uid, token in enumerate(dataset.user_tokens):
            fh.write(f"{token}\t{uid}\tuser\n")
        for iid, token in enumerate(dataset.item_tokens):
            fh.write(f"{token}\t{iid}\titem\n")


def load_ratings(path, format="tsv", threshold=DEFAULT_POSITIVE_THRESHOLD,
                 index_path=None):
    """Load a delimited interaction file into a :class:`RatingDataset`.

    Tokens are assigned dense ids in order of first appearance unless an
    entity-index sidecar is supplied, in which case its mapping is used
    verbatim (this is what makes export/load round trips exact).
    """
    if format not in DELIMITERS:
        raise DataValidationError(f"unknown format {format!r}; expected tsv or csv")
    delim = DELIMITERS[format]
    path = Path(path)

    fixed_index = index_path is not None
    if fixed_index:
        user_ids, item_ids = read_entity_index(index_path)
        user_tokens = [None] * len(user_ids)
        item_tokens = [None] * len(item_ids)
        for tok, uid in user_ids.items():
            user_tokens[uid] = tok
        for tok, iid in item_ids.items():
            item_tokens[iid] = tok
    else:
        user_ids, item_ids = {}, {}
        user_tokens, item_tokens = [], []

    ratings = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split(delim)
            if len(fields) != 3:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected 3 fields, got {len(fields)}")
            user_tok, item_tok, rating_text = (f.strip() for f in fields)
            rating = _parse_rating(rating_text, lineno)
            if not (RATING_MIN <= rating <= RATING_MAX):
                raise DataValidationError(
                    f"{path}: line {lineno}: rating {rating} outside "
                    f"[{RATING_MIN:g}, {RATING_MAX:g}]")
            if user_tok not in user_ids:
                if fixed_index:
                    raise DataValidationError(
                        f"{path}: line {lineno}: user token {user_tok!r} "
                        f"missing from entity index")
                user_ids[user_tok] = len(user_tokens)
                user_tokens.append(user_tok)
            if item_tok not in item_ids:
                if fixed_index:
                    raise DataValidationError(
                        f"{path}: line {lineno}: item token {item_tok!r} "
                        f"missing from entity index")
                item_ids[item_tok] = len(item_tokens)
                item_tokens.append(item_tok)
            ratings[(user_ids[user_tok], item_ids[item_tok])] = rating

    if not ratings:
        raise EmptyDatasetError(f"{path}: no interactions found")

    return RatingDataset.from_ratings(
        num_users=len(user_tokens),
        num_items=len(item_tokens),
        ratings=ratings,
        threshold=threshold,
        user_tokens=user_tokens,
        item_tokens=item_tokens,
    )


def export_dataset(dataset, path, format="tsv", index_path=None):
    """Write a dataset back to delimited text plus its entity-index sidecar.

    Returns the path of the sidecar, which defaults to ``<path>.index``.
    """
    if format not in DELIMITERS:
        raise DataValidationError(f"unknown format {format!r}; expected tsv or csv")
    delim = DELIMITERS[format]
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for (u, i) in sorted(dataset.ratings):
            rating = dataset.ratings[(u, i)]
            fh.write(f"{dataset.user_tokens[u]}{delim}"
                     f"{dataset.item_tokens[i]}{delim}{rating:g}\n")
    if index_path is None:
        index_path = path.with_name(path.name + ".index")
    write_entity_index(dataset, index_path)
    return Path(index_path)


def _apportion(count, ratios, rng):
    """Largest-remainder allocation of `count` into len(ratios) buckets.

    Ties between equal remainders are broken randomly so they do not
    systematically favor one bucket across many users.
    """
    raw = [count * r for r in ratios]
    base = [int(math.floor(x)) for x in raw]
    short = count - sum(base)
    jitter = rng.random(len(ratios))
    order = sorted(range(len(ratios)),
                   key=lambda j: (-(raw[j] - base[j]), jitter[j]))
    for j in order[:short]:
        base[j] += 1
    return base


MIN_POSITIVES_FOR_SPLIT = 5


def split_dataset(data, ratios=(0.6, 0.2, 0.2), seed=0):
    """Split positives into train/validation/test, stratified per user.

    Users with at least ``MIN_POSITIVES_FOR_SPLIT`` positives get their
    positives apportioned per the ratios (always keeping at least one in
    train); colder users contribute all their positives to train.  Rated
    pairs below the positivity threshold stay with the training view.
    Deterministic for a fixed seed.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or ratios[0] <= 0:
        raise DataValidationError(f"invalid split ratios {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataValidationError(f"split ratios {ratios} do not sum to 1")

    rng = np.random.default_rng(seed)
    buckets = [{}, {}, {}]  # train, validation, test rating dicts

    for u in range(data.num_users):
        items = data.user_items[u]
        if items.size == 0:
            continue
        if items.size < MIN_POSITIVES_FOR_SPLIT:
            for i in items:
                buckets[0][(u, int(i))] = data.ratings[(u, int(i))]
            continue
        perm = rng.permutation(items)
        n_train, n_val, n_test = _apportion(items.size, ratios, rng)
        if n_train == 0:  # keep >= 1 training positive
            if n_val >= n_test and n_val > 0:
                n_val -= 1
            else:
                n_test -= 1
            n_train = 1
        cuts = (n_train, n_train + n_val)
        for i in perm[: cuts[0]]:
            buckets[0][(u, int(i))] = data.ratings[(u, int(i))]
        for i in perm[cuts[0]: cuts[1]]:
            buckets[1][(u, int(i))] = data.ratings[(u, int(i))]
        for i in perm[cuts[1]:]:
            buckets[2][(u, int(i))] = data.ratings[(u, int(i))]

    # Below-threshold ratings are training-side observations.
    for (u, i), r in data.ratings.items():
        if r < data.threshold:
            buckets[0][(u, i)] = r

    parts = [
        RatingDataset.from_ratings(
            data.num_users, data.num_items, bucket, data.threshold,
            user_tokens=data.user_tokens, item_tokens=data.item_tokens)
        for bucket in buckets
    ]
    split = DatasetSplit(train=parts[0], validation=parts[1], test=parts[2],
                         fold_seed=int(seed))
    split.validate(source=data)
    return split
