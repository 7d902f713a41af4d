import numpy as np
import pytest

import metricrec as mr
from metricrec.trainer import (
    AdagradState,
    save_checkpoint,
    load_checkpoint,
    uniform_embedding_init,
)


def small_config(**overrides):
    defaults = dict(
        hyper=mr.Hyperparams(dim=8, batch_size=64),
        max_epochs=5,
        tolerance=1e-12,
        patience=3,
        num_candidates=5,
        seed=3,
    )
    defaults.update(overrides)
    return mr.TrainConfig(**defaults)


class TestInit:
    def test_raw_draw_statistics(self):
        rng = np.random.default_rng(0)
        draw = uniform_embedding_init(2500, 1500, 32, rng)
        assert draw.size >= 100_000
        assert abs(draw.mean() - 0.2) <= 0.01
        assert abs(draw.var() - 0.04) <= 0.005

    def test_margins_and_metrics(self):
        state = mr.init_model(10, 8, 4, seed=1)
        assert np.all(state.margins.mr_user == 0.02)
        assert np.all(state.margins.mr_item == 0.02)
        assert np.all(state.margins.mr_latent == 0.02)
        assert np.array_equal(state.metrics.w_user, np.eye(4))
        assert np.array_equal(state.metrics.w_item, np.eye(4))
        assert np.array_equal(state.metrics.w_user_item, np.eye(4))

    def test_rows_inside_unit_ball(self):
        state = mr.init_model(50, 50, 32, seed=2)
        norms = np.linalg.norm(state.embeddings.vectors, axis=1)
        assert np.all(norms < 1.0)

    def test_accumulators_zero(self):
        state = mr.init_model(3, 3, 4, seed=0)
        assert np.all(state.accumulators.embeddings == 0)
        assert np.all(state.accumulators.mr_user == 0)

    def test_bad_dim_rejected(self):
        with pytest.raises(ValueError):
            mr.init_model(3, 3, 0, seed=0)

    def test_deterministic(self):
        a = mr.init_model(5, 5, 4, seed=9)
        b = mr.init_model(5, 5, 4, seed=9)
        assert np.array_equal(a.embeddings.vectors, b.embeddings.vectors)


class TestAdagrad:
    def test_unit_first_step(self):
        param = np.array([1.0])
        acc = np.zeros(1)
        mr.adagrad_step(param, np.array([1.0]), 0.1, acc)
        assert param[0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8))
        assert acc[0] == 1.0

    def test_inverse_sqrt_schedule(self):
        param = np.array([0.0])
        acc = np.zeros(1)
        lr = 0.5
        for t in range(1, 101):
            before = param[0]
            mr.adagrad_step(param, np.array([1.0]), lr, acc)
            step = before - param[0]
            assert step == pytest.approx(lr / np.sqrt(t), rel=1e-6)

    def test_zero_gradient_no_change(self):
        param = np.array([2.0, -1.0])
        acc = np.array([4.0, 9.0])
        mr.adagrad_step(param, np.zeros(2), 0.1, acc)
        assert np.array_equal(param, [2.0, -1.0])
        assert np.array_equal(acc, [4.0, 9.0])

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(mr.NumericalError):
            mr.adagrad_step(np.zeros(2), np.array([np.nan, 0.0]), 0.1, np.zeros(2))


class TestProjectConstraints:
    def test_unit_ball_rescale_preserves_direction(self):
        state = mr.init_model(2, 2, 3, seed=0)
        state.embeddings.vectors[0] = np.array([2.0, 0.0, 0.0])
        mr.project_constraints(state)
        assert np.linalg.norm(state.embeddings.vectors[0]) == pytest.approx(
            1.0 - 1e-6)
        assert state.embeddings.vectors[0][1] == 0.0

    def test_margin_clamps(self):
        state = mr.init_model(2, 2, 3, seed=0)
        state.margins.mr_user[:] = [1.7, -0.2]
        mr.project_constraints(state)
        assert state.margins.mr_user[0] == 1.0
        assert state.margins.mr_user[1] == 1e-3

    def test_metric_eigenvalue_clamp(self):
        state = mr.init_model(2, 2, 3, seed=0)
        state.metrics.w_item[:] = np.diag([1.0, 1.0, -0.5])
        mr.project_constraints(state)
        eig = np.linalg.eigvalsh(state.metrics.w_item)
        assert eig[0] >= -1e-12
        assert eig[-1] == pytest.approx(1.0)


class TestTraining:
    def test_objective_decreases(self, toy_split):
        _, rows = mr.train(toy_split, small_config(max_epochs=8))
        assert rows[-1]["objective"] < rows[0]["objective"]

    def test_invariants_hold_every_epoch(self, toy_split):
        seen = []

        def check(state, epoch, row):
            state.validate()
            seen.append(epoch)

        mr.train(toy_split, small_config(max_epochs=5), epoch_callback=check)
        assert seen == [1, 2, 3, 4, 5]

    def test_bitwise_deterministic(self, toy_split):
        a, _ = mr.train(toy_split, small_config())
        b, _ = mr.train(toy_split, small_config())
        assert np.array_equal(a.embeddings.vectors, b.embeddings.vectors)
        assert np.array_equal(a.metrics.w_user, b.metrics.w_user)
        assert np.array_equal(a.margins.mr_latent, b.margins.mr_latent)

    def test_euc_variant_keeps_identity_metrics(self, toy_split):
        cfg = small_config(hyper=mr.Hyperparams(dim=8, batch_size=64,
                                                variant="euc-mml"))
        state, _ = mr.train(toy_split, cfg)
        assert np.array_equal(state.metrics.w_user, np.eye(8))
        assert np.array_equal(state.metrics.w_item, np.eye(8))
        assert np.array_equal(state.metrics.w_user_item, np.eye(8))

    def test_fixed_margin_variant_keeps_margins(self, toy_split):
        cfg = small_config(hyper=mr.Hyperparams(dim=8, batch_size=64,
                                                variant="m-mml"))
        state, _ = mr.train(toy_split, cfg)
        assert np.all(state.margins.mr_user == 0.02)
        assert np.all(state.margins.mr_item == 0.02)

    def test_tied_variant_keeps_matrices_identical(self, toy_split):
        cfg = small_config(hyper=mr.Hyperparams(dim=8, batch_size=64,
                                                variant="w-mml"))
        state, _ = mr.train(toy_split, cfg)
        assert state.metrics.w_user is state.metrics.w_item
        assert state.metrics.w_user is state.metrics.w_user_item

    def test_convergence_stops_early(self, toy_split):
        cfg = small_config(max_epochs=50, tolerance=0.5, patience=2)
        state, rows = mr.train(toy_split, cfg)
        assert len(rows) < 50
        assert state.epoch == len(rows)

    def test_training_log_file(self, toy_split, tmp_path):
        log = tmp_path / "log.tsv"
        mr.train(toy_split, small_config(max_epochs=3), log_path=log)
        lines = log.read_text().strip().splitlines()
        assert lines[0].split("\t")[0] == "epoch"
        assert len(lines) == 4
        assert len(lines[1].split("\t")) == len(lines[0].split("\t"))

    def test_empty_train_rejected(self, toy_dataset):
        empty = mr.RatingDataset.from_ratings(
            toy_dataset.num_users, toy_dataset.num_items, {(0, 0): 1.0}, 3.0)
        split = mr.DatasetSplit(empty, empty, empty, fold_seed=0)
        with pytest.raises(mr.DataValidationError):
            mr.train(split, small_config())

    def test_growth_rule(self):
        from metricrec.trainer import objective_diverged
        assert objective_diverged(float("nan"), 1.0)
        assert objective_diverged(float("inf"), None)
        assert not objective_diverged(9.9, 1.0)
        assert objective_diverged(10.1, 1.0)
        assert not objective_diverged(5.0, None)

    def test_divergence_aborts_with_last_good_checkpoint(self, toy_split, tmp_path):
        # corrupt the live state after epoch 2; epoch 3 must abort and the
        # persisted checkpoint must be the untouched epoch-2 state
        ckpt = tmp_path / "last_good.bin"

        def sabotage(state, epoch, row):
            if epoch == 2:
                state.embeddings.vectors[0, 0] = np.nan

        cfg = small_config(max_epochs=6, checkpoint_path=str(ckpt))
        with pytest.raises(mr.TrainingDiverged) as info:
            mr.train(toy_split, cfg, epoch_callback=sabotage)
        assert info.value.checkpoint_path == str(ckpt)
        restored = load_checkpoint(ckpt)
        restored.validate()
        assert restored.epoch == 2

    def test_held_out_objective_trend(self, toy_split):
        """Objective on a frozen triplet set improves over early epochs."""
        from conftest import random_model
        from metricrec.sampling import assemble_training_batch, build_similar_pair_sets

        train_ds = toy_split.train
        sets = build_similar_pair_sets(train_ds, 0.2)
        probe_state = random_model(train_ds.num_users, train_ds.num_items, 8,
                                   np.random.default_rng(0))
        rng = np.random.default_rng(123)
        pairs = mr.sample_positive_batch(train_ds, 64, rng)
        fixed = assemble_training_batch(pairs, train_ds, probe_state, sets, 5, rng)

        hyper = mr.Hyperparams(dim=8, batch_size=64)
        values = []

        def probe(state, epoch, row):
            breakdown, _ = mr.total_objective(fixed, state, hyper)
            values.append(breakdown.total)

        mr.train(toy_split, small_config(max_epochs=10), epoch_callback=probe)
        non_improving = sum(1 for a, b in zip(values, values[1:]) if b >= a)
        assert values[-1] < values[0]
        assert non_improving <= 2


class TestCheckpoint:
    def test_round_trip_identity(self, toy_split, tmp_path):
        state, _ = mr.train(toy_split, small_config(max_epochs=2))
        path = tmp_path / "ck.bin"
        save_checkpoint(state, path)
        loaded = load_checkpoint(path)
        assert loaded.epoch == state.epoch
        assert loaded.seed == state.seed
        assert np.array_equal(loaded.embeddings.vectors, state.embeddings.vectors)
        assert np.array_equal(loaded.metrics.w_user_item, state.metrics.w_user_item)
        assert np.array_equal(loaded.margins.mr_latent, state.margins.mr_latent)
        assert np.array_equal(loaded.accumulators.embeddings,
                              state.accumulators.embeddings)

    def test_resume_matches_uninterrupted(self, toy_split, tmp_path):
        full, _ = mr.train(toy_split, small_config(max_epochs=5))

        half, _ = mr.train(toy_split, small_config(max_epochs=3))
        path = tmp_path / "half.bin"
        save_checkpoint(half, path)
        resumed = load_checkpoint(path)
        final, _ = mr.train(toy_split, small_config(max_epochs=5), state=resumed)

        assert np.array_equal(final.embeddings.vectors, full.embeddings.vectors)
        assert np.array_equal(final.metrics.w_user, full.metrics.w_user)
        assert np.array_equal(final.accumulators.embeddings,
                              full.accumulators.embeddings)
        assert final.epoch == full.epoch

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"JUNK" + b"\x00" * 64)
        with pytest.raises(mr.DataValidationError):
            load_checkpoint(path)

    def test_mismatched_split_rejected(self, toy_split, tmp_path):
        state = mr.init_model(3, 3, 8, seed=0)
        with pytest.raises(mr.DataValidationError):
            mr.train(toy_split, small_config(), state=state)
