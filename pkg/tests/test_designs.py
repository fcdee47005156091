import numpy as np
import pytest

from krigbench.designs import (
    ScalingRecord,
    latin_hypercube,
    maximin_lhs,
    min_pairwise_distance,
    scale_outputs,
)


def assert_latin(x):
    n = x.shape[0]
    for k in range(x.shape[1]):
        strata = np.floor(x[:, k] * n).astype(int)
        assert sorted(strata) == list(range(n))


class TestMaximinLhs:
    def test_single_point(self):
        x = maximin_lhs(1, 3, seed=0)
        assert x.shape == (1, 3)
        assert np.all((x > 0.0) & (x < 1.0))

    def test_one_dimensional_stratification(self):
        x = maximin_lhs(5, 1, seed=1)
        strata = sorted(np.floor(x[:, 0] * 5).astype(int))
        assert strata == [0, 1, 2, 3, 4]

    def test_optimization_does_not_hurt(self):
        # same seed gives the same starting sample; swaps may only improve
        raw = maximin_lhs(10, 2, seed=5, iters=0)
        opt = maximin_lhs(10, 2, seed=5, iters=2000)
        assert min_pairwise_distance(opt) >= min_pairwise_distance(raw)

    def test_optimization_actually_improves(self):
        raw = maximin_lhs(30, 2, seed=9, iters=0)
        opt = maximin_lhs(30, 2, seed=9, iters=5000)
        assert min_pairwise_distance(opt) > min_pairwise_distance(raw)

    def test_latin_property_random_shapes(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(1, 40))
            d = int(rng.integers(1, 6))
            assert_latin(maximin_lhs(n, d, seed=int(rng.integers(1 << 31)), iters=200))

    def test_deterministic(self):
        a = maximin_lhs(15, 3, seed=123, iters=500)
        b = maximin_lhs(15, 3, seed=123, iters=500)
        assert np.array_equal(a, b)

    def test_validates_arguments(self):
        with pytest.raises(ValueError):
            maximin_lhs(0, 2)


class TestScaleOutputs:
    def test_symmetric_example(self):
        scaled, record = scale_outputs(np.array([0.0, 5.0, 10.0]))
        assert np.array_equal(scaled, [-0.5, 0.0, 0.5])
        assert record.y_range == 10.0
        assert not record.degenerate

    def test_constant_input(self):
        scaled, record = scale_outputs(np.array([7.0, 7.0]))
        assert np.array_equal(scaled, [0.0, 0.0])
        assert record.degenerate
        assert record.y_range == 1.0
        assert np.array_equal(record.invert(scaled), [7.0, 7.0])

    def test_roundtrip(self):
        rng = np.random.default_rng(2)
        y = rng.normal(50.0, 20.0, size=37)
        scaled, record = scale_outputs(y)
        back = record.invert(scaled)
        assert np.max(np.abs(back - y)) < 1e-12 * max(1.0, np.max(np.abs(y)))

    def test_mean_and_range(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            y = rng.normal(rng.uniform(-100, 100), rng.uniform(0.01, 1000), size=int(rng.integers(2, 200)))
            scaled, record = scale_outputs(y)
            assert float(np.max(scaled) - np.min(scaled)) == 1.0
            assert abs(float(np.mean(scaled))) < 1e-12
            assert not record.degenerate

    def test_variance_helpers(self):
        record = ScalingRecord(y_mean=3.0, y_range=4.0)
        assert record.apply_variance(np.array([16.0]))[0] == 1.0
        assert record.invert_variance(np.array([1.0]))[0] == 16.0


class TestLatinHypercube:
    def test_plain_sample_is_latin(self):
        rng = np.random.default_rng(0)
        assert_latin(latin_hypercube(17, 4, rng))
