"""Seeded synthetic rating data with planted category structure.

Users and items are partitioned into matching categories; a user rates an
item of the same category with probability ``within_prob`` and any other
item with probability ``cross_prob``.  Generated ratings are positive
(3..5), so the planted block structure survives binarization untouched.
Used for the bundled toy fixture and the end-to-end experiments.
"""

from __future__ import annotations

import numpy as np

from .data import DELIMITERS


def category_of(index, count, num_categories):
    """Contiguous-block category id for entity `index` out of `count`."""
    return index * num_categories // count


def planted_clusters(num_users, num_items, num_categories, within_prob,
                     cross_prob, seed):
    """Generate ``(records, item_labels)`` with planted co-rating blocks.

    ``records`` is a list of ``(user_token, item_token, rating)``;
    ``item_labels`` maps item tokens to category names.  Every user is
    guaranteed at least one interaction (a same-category item is forced
    when the coin flips produce none) so that ingestion never drops
    entities.
    """
    if num_categories < 1 or num_categories > min(num_users, num_items):
        raise ValueError("num_categories must be in [1, min(users, items)]")
    rng = np.random.default_rng(seed)
    user_cat = np.array([category_of(u, num_users, num_categories)
                         for u in range(num_users)])
    item_cat = np.array([category_of(i, num_items, num_categories)
                         for i in range(num_items)])

    same = user_cat[:, None] == item_cat[None, :]
    probs = np.where(same, within_prob, cross_prob)
    interacts = rng.random((num_users, num_items)) < probs
    ratings = rng.integers(3, 6, size=(num_users, num_items))

    records = []
    for u in range(num_users):
        row = np.nonzero(interacts[u])[0]
        if row.size == 0:
            own = np.nonzero(item_cat == user_cat[u])[0]
            row = np.array([own[int(rng.integers(own.size))]])
        for i in row:
            records.append((f"u{u}", f"i{int(i)}", float(ratings[u, i])))

    item_labels = {f"i{i}": f"cat{item_cat[i]}" for i in range(num_items)}
    return records, item_labels


def write_ratings_file(records, path, format="tsv"):
    delim = DELIMITERS[format]
    with open(path, "w", encoding="utf-8") as fh:
        for user_tok, item_tok, rating in records:
            fh.write(f"{user_tok}{delim}{item_tok}{delim}{rating:g}\n")


def write_labels_file(item_labels, path, format="tsv"):
    delim = DELIMITERS[format]
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(item_labels, key=lambda t: (len(t), t)):
            fh.write(f"{token}{delim}{item_labels[token]}\n")


def read_labels_file(path, format="tsv"):
    """Read ``item_token<delim>label`` rows into a dict."""
    delim = DELIMITERS[format]
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            token, label = line.split(delim)[:2]
            labels[token.strip()] = label.strip()
    return labels
