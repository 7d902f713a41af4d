import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import metricrec as mr
from metricrec.metric import (
    load_metrics_binary,
    load_metrics_text,
    save_metrics_binary,
    save_metrics_text,
    squared_w_cdist,
)


def vec(*values):
    return np.asarray(values, dtype=np.float64)


class TestDistances:
    def test_identity_reduces_to_euclidean(self):
        assert mr.w_distance(vec(1, 0), vec(0, 1), np.eye(2)) == pytest.approx(
            math.sqrt(2), abs=1e-12)

    def test_same_point_is_zero(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=5)
        w = rng.normal(size=(5, 5))
        w = w.T @ w
        assert mr.w_distance(a, a, w) == 0.0

    def test_diagonal_weighting(self):
        w = np.diag([4.0, 1.0])
        assert mr.w_distance(vec(1, 0), vec(0, 0), w) == pytest.approx(2.0)
        assert mr.squared_w_distance(vec(1, 0), vec(0, 0), w) == pytest.approx(4.0)

    def test_squared_identity(self):
        assert mr.squared_w_distance(vec(3, 4), vec(0, 0), np.eye(2)) == pytest.approx(25.0)

    def test_symmetry_in_arguments(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = rng.normal(size=(2, 4))
            m = rng.normal(size=(4, 4))
            w = m.T @ m
            assert mr.squared_w_distance(a, b, w) == pytest.approx(
                mr.squared_w_distance(b, a, w), rel=1e-12)

    def test_euclidean_cases(self):
        assert mr.euclidean_distance(vec(0, 0), vec(3, 4)) == pytest.approx(5.0)
        assert mr.euclidean_distance(vec(1, 1, 1), vec(2, 2, 2)) == pytest.approx(
            math.sqrt(3))

    def test_euclidean_equals_identity_metric(self):
        rng = np.random.default_rng(2)
        eye = np.eye(8)
        for _ in range(100):
            a, b = rng.normal(size=(2, 8))
            assert abs(mr.w_distance(a, b, eye)
                       - mr.euclidean_distance(a, b)) <= 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mr.w_distance(vec(1, 0), vec(1, 0, 0), np.eye(2))
        with pytest.raises(ValueError):
            mr.w_distance(vec(1, 0), vec(0, 1), np.eye(3))
        with pytest.raises(ValueError):
            mr.euclidean_distance(vec(1, 0), vec(1, 0, 0))

    def test_nan_rejected(self):
        with pytest.raises(mr.NumericalError):
            mr.w_distance(vec(np.nan, 0), vec(0, 1), np.eye(2))
        with pytest.raises(mr.NumericalError):
            mr.squared_w_distance(vec(1, 0), vec(0, 1),
                                  np.array([[np.nan, 0], [0, 1]]))

    def test_cdist_matches_pairwise(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 4))
        y = rng.normal(size=(5, 4))
        m = rng.normal(size=(4, 4))
        w = m.T @ m
        table = squared_w_cdist(x, y, w)
        for i in range(6):
            for j in range(5):
                assert table[i, j] == pytest.approx(
                    mr.squared_w_distance(x[i], y[j], w), rel=1e-9, abs=1e-12)


class TestProjectPsd:
    def test_diagonal_clamp(self):
        out = mr.project_psd(np.diag([1.0, -2.0]))
        assert np.allclose(out, np.diag([1.0, 0.0]), atol=1e-12)

    def test_psd_fixed_point(self):
        rng = np.random.default_rng(4)
        m = rng.normal(size=(5, 5))
        w = m.T @ m
        out = mr.project_psd(w)
        assert np.linalg.norm(out - w) <= 1e-12 * max(1.0, np.linalg.norm(w))

    def test_offdiagonal_case(self):
        out = mr.project_psd(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(out, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(mr.NumericalError):
            mr.project_psd(np.array([[np.inf, 0], [0, 1.0]]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=(4, 4))
        once = mr.project_psd(w)
        twice = mr.project_psd(once)
        assert np.max(np.abs(once - twice)) <= 1e-10


class TestMetricProperties:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(4, 4))
        w = m.T @ m
        x, y, z = rng.normal(size=(3, 4))
        assert mr.w_distance(x, z, w) <= (
            mr.w_distance(x, y, w) + mr.w_distance(y, z, w) + 1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_non_negative_and_symmetric(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(3, 3))
        w = m.T @ m
        a, b = rng.normal(size=(2, 3))
        d_ab = mr.w_distance(a, b, w)
        assert d_ab >= 0.0
        assert d_ab == pytest.approx(mr.w_distance(b, a, w), rel=1e-12, abs=1e-15)


class TestMetricSet:
    def test_validate_flags_asymmetry(self):
        ms = mr.MetricSet.identity(3)
        ms.w_user[0, 1] = 1e-6
        with pytest.raises(mr.NumericalError, match="symmetric"):
            ms.validate()

    def test_validate_flags_negative_eigenvalue(self):
        ms = mr.MetricSet.identity(3)
        ms.w_item[:] = np.diag([1.0, 1.0, -0.5])
        with pytest.raises(mr.NumericalError, match="eigenvalue"):
            ms.validate()

    def test_identity_passes(self):
        mr.MetricSet.identity(4).validate()


class TestSerialization:
    def build(self):
        rng = np.random.default_rng(5)
        mats = []
        for _ in range(3):
            m = rng.normal(size=(4, 4))
            mats.append(m.T @ m)
        return mr.MetricSet(*mats)

    def test_binary_round_trip(self, tmp_path):
        ms = self.build()
        path = tmp_path / "metrics.bin"
        save_metrics_binary(ms, path)
        out = load_metrics_binary(path)
        assert np.array_equal(out.w_user, ms.w_user)
        assert np.array_equal(out.w_item, ms.w_item)
        assert np.array_equal(out.w_user_item, ms.w_user_item)

    def test_binary_header(self, tmp_path):
        ms = self.build()
        path = tmp_path / "metrics.bin"
        save_metrics_binary(ms, path)
        raw = path.read_bytes()
        assert raw[:4] == b"MRWM"
        assert len(raw) == 16 + 3 * 4 * 4 * 8

    def test_binary_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(mr.DataFormatError):
            load_metrics_binary(path)

    def test_text_round_trip(self, tmp_path):
        ms = self.build()
        path = tmp_path / "metrics.txt"
        save_metrics_text(ms, path)
        out = load_metrics_text(path)
        assert np.allclose(out.w_user, ms.w_user, atol=0, rtol=0)
        assert np.allclose(out.w_user_item, ms.w_user_item, atol=0, rtol=0)
