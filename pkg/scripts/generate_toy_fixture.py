#!/usr/bin/env python3
"""Regenerate the bundled toy fixture (two disjoint rating blocks).

The committed files under data/ are produced by this script; rerunning it
must reproduce them byte-for-byte.
"""

from pathlib import Path

from metricrec.synthetic import planted_clusters, write_labels_file, write_ratings_file

OUT_DIR = Path(__file__).resolve().parent.parent / "data"

NUM_USERS = 20
NUM_ITEMS = 20
NUM_CATEGORIES = 2
WITHIN_PROB = 0.8
CROSS_PROB = 0.0
SEED = 7


def main():
    records, item_labels = planted_clusters(
        NUM_USERS, NUM_ITEMS, NUM_CATEGORIES, WITHIN_PROB, CROSS_PROB, SEED)
    OUT_DIR.mkdir(exist_ok=True)
    write_ratings_file(records, OUT_DIR / "toy_ratings.tsv")
    write_labels_file(item_labels, OUT_DIR / "toy_labels.tsv")
    print(f"wrote {len(records)} interactions for {NUM_USERS} users / "
          f"{NUM_ITEMS} items to {OUT_DIR}")


if __name__ == "__main__":
    main()
