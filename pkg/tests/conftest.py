import numpy as np
import pytest

import metricrec as mr
from metricrec.sampling import DualTriplet, LatentTriplet, TripletBatch

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
TOY_RATINGS = DATA_DIR / "toy_ratings.tsv"
TOY_LABELS = DATA_DIR / "toy_labels.tsv"


@pytest.fixture(scope="session")
def toy_dataset():
    return mr.load_ratings(TOY_RATINGS)


@pytest.fixture(scope="session")
def toy_split(toy_dataset):
    return mr.split_dataset(toy_dataset, seed=3)


def make_dataset(num_users, num_items, positives, extra_ratings=None,
                 threshold=3.0):
    """Dataset directly from dense-id positive pairs (rating 5 each)."""
    ratings = {(u, i): 5.0 for u, i in positives}
    if extra_ratings:
        ratings.update(extra_ratings)
    return mr.RatingDataset.from_ratings(num_users, num_items, ratings, threshold)


def random_dataset(num_users, num_items, density, rng, threshold=3.0):
    mask = rng.random((num_users, num_items)) < density
    ratings = {}
    for u in range(num_users):
        for i in np.nonzero(mask[u])[0]:
            ratings[(u, int(i))] = float(rng.integers(1, 6))
    if not ratings:
        ratings[(0, 0)] = 5.0
    return mr.RatingDataset.from_ratings(num_users, num_items, ratings, threshold)


def random_model(num_users, num_items, dim, rng, identity_metrics=False,
                 margin_range=(0.1, 0.9)):
    """Model with embeddings in the ball, random PSD metrics, random margins."""
    state = mr.init_model(num_users, num_items, dim, seed=int(rng.integers(2**31)))
    vecs = rng.normal(size=(num_users + num_items, dim))
    vecs *= (0.9 * rng.random(num_users + num_items) /
             np.linalg.norm(vecs, axis=1))[:, None]
    state.embeddings.vectors[:] = vecs
    if not identity_metrics:
        for w in (state.metrics.w_user, state.metrics.w_item,
                  state.metrics.w_user_item):
            a = rng.normal(size=(dim, dim)) / np.sqrt(dim)
            w[:] = a.T @ a + 0.1 * np.eye(dim)
    lo, hi = margin_range
    state.margins.mr_user[:] = rng.uniform(lo, hi, num_users)
    state.margins.mr_item[:] = rng.uniform(lo, hi, num_items)
    state.margins.mr_latent[:] = rng.uniform(lo, hi, num_users + num_items)
    return state


def random_batch(num_users, num_items, rng, n_dual=4, n_latent=4,
                 num_candidates=10):
    """Structurally valid triplets with random indices and rank draws."""
    duals = []
    for _ in range(n_dual):
        a, b = rng.choice(num_users, size=2, replace=False)
        c, d = rng.choice(num_items, size=2, replace=False)
        duals.append(DualTriplet(int(a), int(b), int(c), int(d),
                                 int(rng.integers(1, num_candidates + 1)),
                                 int(rng.integers(1, num_candidates + 1)),
                                 num_candidates))
    latents = []
    for _ in range(n_latent):
        kind = "user" if rng.random() < 0.5 else "item"
        total = num_users if kind == "user" else num_items
        a, f, g = rng.choice(total, size=3, replace=False)
        latents.append(LatentTriplet(kind, int(a), int(f), int(g),
                                     int(rng.integers(1, num_candidates + 1)),
                                     num_candidates))
    return TripletBatch(duals=duals, latents=latents)
