import numpy as np
import pytest

import metricrec as mr
from metricrec.data import read_entity_index

from conftest import make_dataset


def write_lines(path, lines, delim="\t"):
    with open(path, "w", encoding="utf-8") as fh:
        for fields in lines:
            fh.write(delim.join(str(f) for f in fields) + "\n")
    return path


class TestLoadRatings:
    def test_threshold_binarization(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv",
                           [("a", "x", 5), ("a", "y", 2), ("b", "x", 4)])
        ds = mr.load_ratings(path)
        assert ds.num_users == 2 and ds.num_items == 2
        assert ds.positive_pair_set() == {(0, 0), (1, 0)}
        assert ds.num_ratings == 3  # the (a, y) record stays, just negative

    def test_csv_format(self, tmp_path):
        path = write_lines(tmp_path / "r.csv", [("a", "x", 5), ("b", "y", 3)],
                           delim=",")
        ds = mr.load_ratings(path, format="csv")
        assert ds.num_positive == 2

    def test_custom_threshold(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv", [("a", "x", 2), ("a", "y", 4)])
        ds = mr.load_ratings(path, threshold=2.0)
        assert ds.positive_pair_set() == {(0, 0), (0, 1)}

    def test_rating_out_of_range(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv", [("a", "x", 6)])
        with pytest.raises(mr.DataValidationError, match="line 1"):
            mr.load_ratings(path)

    def test_malformed_record_names_line(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv", [("a", "x", 5), ("b", "y")])
        with pytest.raises(mr.DataFormatError, match="line 2"):
            mr.load_ratings(path)

    def test_unparseable_rating(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv", [("a", "x", "high")])
        with pytest.raises(mr.DataFormatError, match="line 1"):
            mr.load_ratings(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        with pytest.raises(mr.EmptyDatasetError):
            mr.load_ratings(path)

    def test_large_ingest_exact_counts(self, tmp_path):
        # Construction guarantees unique (user, item) pairs covering every
        # user and item id, so all three counts must round-trip exactly.
        num_users, num_items, num_ratings = 3076, 1651, 28564
        lines = []
        for j in range(num_ratings):
            u = j % num_users
            i = (j // num_users + u) % num_items
            lines.append((f"u{u}", f"i{i}", (j % 5) + 1))
        path = write_lines(tmp_path / "big.tsv", lines)
        ds = mr.load_ratings(path)
        assert ds.num_users == num_users
        assert ds.num_items == num_items
        assert ds.num_ratings == num_ratings


class TestExportRoundTrip:
    def test_round_trip_preserves_ids(self, tmp_path, toy_dataset):
        out = tmp_path / "export.tsv"
        index = mr.export_dataset(toy_dataset, out)
        reloaded = mr.load_ratings(out, index_path=index)
        assert reloaded.positive_pair_set() == toy_dataset.positive_pair_set()
        for u in range(toy_dataset.num_users):
            assert np.array_equal(reloaded.user_items[u], toy_dataset.user_items[u])
        assert reloaded.user_tokens == toy_dataset.user_tokens
        assert reloaded.item_tokens == toy_dataset.item_tokens

    def test_sidecar_contents(self, tmp_path, toy_dataset):
        out = tmp_path / "export.tsv"
        index = mr.export_dataset(toy_dataset, out)
        users, items = read_entity_index(index)
        assert len(users) == toy_dataset.num_users
        assert len(items) == toy_dataset.num_items
        assert users[toy_dataset.user_tokens[0]] == 0


class TestInvariants:
    def test_interaction_list_sizes(self):
        rng = np.random.default_rng(0)
        from conftest import random_dataset
        for _ in range(5):
            ds = random_dataset(12, 9, 0.3, rng)
            per_user = {}
            for u, i in ds.positive_pair_set():
                per_user.setdefault(u, set()).add(i)
            for u in range(ds.num_users):
                assert ds.user_items[u].size == len(per_user.get(u, set()))
                assert np.all(np.diff(ds.user_items[u]) > 0)  # sorted, no dupes

    def test_out_of_range_pair_rejected(self):
        with pytest.raises(mr.DataValidationError):
            mr.RatingDataset.from_ratings(2, 2, {(2, 0): 5.0}, 3.0)


class TestSplit:
    def test_single_user_sizes(self):
        ds = make_dataset(1, 12, [(0, i) for i in range(10)])
        split = mr.split_dataset(ds, (0.6, 0.2, 0.2), seed=7)
        assert split.train.num_positive == 6
        assert split.validation.num_positive == 2
        assert split.test.num_positive == 2

    def test_deterministic(self, toy_dataset):
        a = mr.split_dataset(toy_dataset, seed=5)
        b = mr.split_dataset(toy_dataset, seed=5)
        assert a.train.positive_pair_set() == b.train.positive_pair_set()
        assert a.test.positive_pair_set() == b.test.positive_pair_set()

    def test_different_seed_differs(self, toy_dataset):
        a = mr.split_dataset(toy_dataset, seed=5)
        b = mr.split_dataset(toy_dataset, seed=6)
        assert a.train.positive_pair_set() != b.train.positive_pair_set()

    def test_cold_users_go_to_train(self):
        # users 0 and 1 are cold (< 5 positives); user 2 has 8
        positives = [(0, 0)] + [(1, 1), (1, 2)] + [(2, i) for i in range(8)]
        ds = make_dataset(3, 12, positives)
        split = mr.split_dataset(ds, seed=1)
        train_pairs = split.train.positive_pair_set()
        assert (0, 0) in train_pairs
        assert {(1, 1), (1, 2)} <= train_pairs
        # the warm user keeps at least one training positive
        assert split.train.user_items[2].size >= 1

    def test_disjoint_union(self, toy_dataset):
        split = mr.split_dataset(toy_dataset, seed=9)
        split.validate(source=toy_dataset)
        parts = (split.train.positive_pair_set()
                 | split.validation.positive_pair_set()
                 | split.test.positive_pair_set())
        assert parts == toy_dataset.positive_pair_set()

    def test_global_proportions_close(self):
        ds = make_dataset(40, 30, [(u, (u + j) % 30) for u in range(40)
                                   for j in range(10)])
        split = mr.split_dataset(ds, (0.6, 0.2, 0.2), seed=2)
        total = ds.num_positive
        assert split.train.num_positive / total == pytest.approx(0.6, abs=0.05)
        assert split.test.num_positive / total == pytest.approx(0.2, abs=0.05)

    def test_bad_ratios(self, toy_dataset):
        with pytest.raises(mr.DataValidationError):
            mr.split_dataset(toy_dataset, (0.5, 0.2, 0.2), seed=1)
        with pytest.raises(mr.DataValidationError):
            mr.split_dataset(toy_dataset, (-0.2, 0.6, 0.6), seed=1)

    def test_below_threshold_ratings_stay_in_train(self, tmp_path):
        path = write_lines(tmp_path / "r.tsv",
                           [(f"u{k}", f"i{j}", 5) for k in range(2) for j in range(6)]
                           + [("u0", "i7", 1)])
        ds = mr.load_ratings(path)
        split = mr.split_dataset(ds, seed=0)
        assert (0, ds.item_tokens.index("i7")) in split.train.ratings
        assert split.train.ratings[(0, ds.item_tokens.index("i7"))] == 1.0
