# backend/tests/test_aggregation.py
import numpy as np
import pytest

from shared.aggregation import FilterConfig, filter_detections, iqr_aggregate
from shared.errors import ConfigError, DegenerateDetectionError, EmptyInputError
from shared.geometry_core import OrientedDetection


def _dets(confidences):
    return [OrientedDetection(10.0 + i, 10.0, 30.0, 12.0, confidence=c) for i, c in enumerate(confidences)]


class TestFilterDetections:

    def test_threshold_is_strict(self):
        outcome = filter_detections(_dets([0.9, 0.5, 0.51, 0.2]), FilterConfig(conf_threshold=0.5, min_count=1))
        assert outcome.kept_indices == [0, 2]
        assert outcome.n_valid == 2
        assert outcome.n_input == 4

    def test_insufficient_anchors(self):
        outcome = filter_detections(_dets([0.9] * 4), FilterConfig(conf_threshold=0.5, min_count=5))
        assert not outcome.sufficient

    def test_exactly_min_count_is_enough(self):
        outcome = filter_detections(_dets([0.9] * 5), FilterConfig(conf_threshold=0.5, min_count=5))
        assert outcome.sufficient

    @pytest.mark.parametrize("kwargs", [{"conf_threshold": 1.2}, {"conf_threshold": -0.1}, {"min_count": 0}])
    def test_invalid_config_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            FilterConfig(**kwargs)


class TestIqrAggregate:

    def test_worked_example(self):
        """One gross outlier among five scales is fenced off"""
        result = iqr_aggregate([0.09, 0.10, 0.10, 0.11, 0.50])
        assert result.q1 == pytest.approx(0.10)
        assert result.q3 == pytest.approx(0.11)
        assert result.inlier_low == pytest.approx(0.085)
        assert result.inlier_high == pytest.approx(0.125)
        assert result.global_scale == pytest.approx(0.10, rel=1e-12)
        assert result.inlier_indices == [0, 1, 2, 3]
        assert result.inlier_mask() == [True, True, True, True, False]
        assert (result.n_valid, result.n_inliers) == (5, 4)

    def test_identical_values_returned_exactly(self):
        result = iqr_aggregate([0.1234567] * 7)
        assert result.global_scale == 0.1234567
        assert result.iqr == 0.0
        assert result.n_inliers == 7

    def test_single_value(self):
        assert iqr_aggregate([0.2]).global_scale == 0.2

    def test_order_does_not_matter(self):
        values = [0.31, 0.29, 0.30, 0.95, 0.305, 0.298]
        assert iqr_aggregate(values).global_scale == iqr_aggregate(sorted(values)).global_scale

    def test_result_within_observed_range(self):
        values = [0.1, 0.1000000001, 0.1000000002]
        result = iqr_aggregate(values)
        assert min(values) <= result.global_scale <= max(values)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            iqr_aggregate([])

    def test_non_finite_input(self):
        with pytest.raises(DegenerateDetectionError):
            iqr_aggregate([0.1, float("nan"), 0.1])

    def test_to_dict_keys(self):
        keys = set(iqr_aggregate([0.1, 0.2, 0.3]).to_dict())
        assert {"global_scale", "q1", "q3", "iqr", "inlier_indices", "n_valid", "n_inliers"} <= keys

    @pytest.mark.parametrize("seed", range(5))
    def test_aggregating_the_inliers_again_is_stable(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 21))
        s0 = rng.uniform(0.05, 0.3)
        cluster = s0 * (1.0 + np.linspace(-0.03, 0.03, n))
        outliers = s0 * rng.uniform(2.0, 4.0, size=int(rng.integers(0, n // 4 + 1)))
        values = np.concatenate([cluster, outliers])
        order = rng.permutation(values.size)
        shuffled = values[order]
        cluster_positions = sorted(int(i) for i in np.flatnonzero(order < n))

        result = iqr_aggregate(shuffled.tolist())
        assert sorted(result.inlier_indices) == cluster_positions
        again = iqr_aggregate(shuffled[cluster_positions].tolist())
        assert again.global_scale == pytest.approx(result.global_scale, rel=1e-12)
