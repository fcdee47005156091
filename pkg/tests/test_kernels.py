import numpy as np
import pytest

from krigbench.kernels import (
    KernelSpec,
    KernelWorkspace,
    NonPositiveParameterError,
    correlation,
    correlation_matrix,
    cross_correlation,
    spec_from_theta,
    theta_to_params,
    to_canonical_theta,
)


def matern52_reference(xi, xj, lengthscales):
    # direct numeric transcription of the smoothness-5/2 formula
    h = np.sqrt(np.sum((np.asarray(xi) - np.asarray(xj)) ** 2 / np.asarray(lengthscales) ** 2))
    return (1.0 + np.sqrt(5.0) * h + (5.0 / 3.0) * h * h) * np.exp(-np.sqrt(5.0) * h)


class TestConversions:
    def test_log10_zero_is_one(self):
        spec = KernelSpec("pexp", [0.0, 0.0], parameterization="log10")
        assert np.array_equal(to_canonical_theta(spec), [1.0, 1.0])

    def test_inverse(self):
        spec = KernelSpec("pexp", [2.0], parameterization="inv")
        assert np.array_equal(to_canonical_theta(spec), [0.5])

    def test_lengthscale(self):
        spec = KernelSpec("pexp", [1.0], parameterization="lensq")
        assert np.array_equal(to_canonical_theta(spec), [0.5])

    def test_nonpositive_raises(self):
        for conv in ("theta", "inv", "lensq"):
            with pytest.raises(NonPositiveParameterError):
                to_canonical_theta(KernelSpec("pexp", [-1.0], parameterization=conv))

    def test_roundtrip_all_conventions(self):
        theta = np.array([0.25, 3.0, 10.0])
        for conv in ("theta", "log10", "inv", "lensq"):
            back = to_canonical_theta(spec_from_theta("pexp", theta, conv))
            assert np.allclose(back, theta, rtol=1e-14)

    def test_theta_to_params_rejects_nonpositive(self):
        with pytest.raises(NonPositiveParameterError):
            theta_to_params([-1.0], "log10")


class TestCorrelation:
    def test_zero_distance_is_one(self):
        for family in ("pexp", "matern52"):
            spec = KernelSpec(family, [0.7, 2.0])
            assert correlation(spec, [0.3, 0.4], [0.3, 0.4]) == 1.0

    def test_gaussian_unit_distance(self):
        spec = KernelSpec("pexp", [1.0])
        assert correlation(spec, [0.0], [1.0]) == pytest.approx(np.exp(-1.0), rel=1e-14)

    def test_gaussian_product_form(self):
        spec = KernelSpec("pexp", [1.0, 1.0])
        got = correlation(spec, [0.0, 0.0], [1.0, 1.0])
        assert got == pytest.approx(np.exp(-2.0), rel=1e-14)

    def test_matern_at_h_one_over_sqrt5(self):
        # lengthscale 1, distance chosen so h = 1/sqrt(5)
        spec = spec_from_theta("matern52", [0.5])  # theta = 1/(2 ell^2) with ell = 1
        dist = 1.0 / np.sqrt(5.0)
        expected = (1.0 + 1.0 + (5.0 / 3.0) * (1.0 / 5.0)) * np.exp(-1.0)
        got = correlation(spec, [0.0], [dist])
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(matern52_reference([0.0], [dist], [1.0]), rel=1e-12)

    def test_matern_random_against_reference(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            d = int(rng.integers(1, 5))
            ell = rng.uniform(0.2, 3.0, size=d)
            theta = 1.0 / (2.0 * ell**2)
            spec = spec_from_theta("matern52", theta)
            a, b = rng.uniform(0, 1, size=d), rng.uniform(0, 1, size=d)
            assert correlation(spec, a, b) == pytest.approx(
                matern52_reference(a, b, ell), rel=1e-12
            )

    def test_fractional_exponent(self):
        spec = KernelSpec("pexp", [2.0], exponent=1.95)
        dist = 0.37
        expected = np.exp(-2.0 * dist**1.95)
        assert correlation(spec, [0.0], [dist]) == pytest.approx(expected, rel=1e-12)

    def test_symmetry_exact(self):
        rng = np.random.default_rng(3)
        for family in ("pexp", "matern52"):
            spec = KernelSpec(family, rng.uniform(0.1, 5.0, size=3), exponent=1.5)
            a, b = rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)
            assert correlation(spec, a, b) == correlation(spec, b, a)

    def test_monotone_decay(self):
        rng = np.random.default_rng(4)
        for family in ("pexp", "matern52"):
            spec = KernelSpec(family, [1.3, 0.4], exponent=1.7)
            direction = rng.uniform(-1, 1, size=2)
            direction /= np.linalg.norm(direction)
            base = np.zeros(2)
            values = [
                correlation(spec, base, t * direction) for t in np.linspace(0.0, 4.0, 30)
            ]
            assert all(a >= b - 1e-15 for a, b in zip(values, values[1:]))

    def test_exponent_validation(self):
        with pytest.raises(ValueError):
            KernelSpec("pexp", [1.0], exponent=2.5)


class TestCorrelationMatrix:
    def test_single_point(self):
        spec = KernelSpec("pexp", [1.0])
        assert np.array_equal(correlation_matrix(spec, [[0.3]]), [[1.0]])

    def test_identical_rows(self):
        spec = KernelSpec("pexp", [1.0, 1.0])
        r = correlation_matrix(spec, [[0.1, 0.2], [0.1, 0.2]])
        assert np.array_equal(r, np.ones((2, 2)))

    def test_three_collinear_points(self):
        spec = KernelSpec("pexp", [1.0])
        r = correlation_matrix(spec, [[0.0], [1.0], [2.0]])
        assert r[0, 1] == pytest.approx(np.exp(-1.0), rel=1e-14)
        assert r[0, 2] == pytest.approx(np.exp(-4.0), rel=1e-14)
        assert np.array_equal(np.diag(r), np.ones(3))
        assert np.array_equal(r, r.T)

    def test_parameterization_equivalence(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(0, 1, size=(12, 3))
        theta = np.array([0.5, 4.0, 30.0])
        reference = correlation_matrix(spec_from_theta("pexp", theta, "theta"), x)
        for conv in ("log10", "inv", "lensq"):
            other = correlation_matrix(spec_from_theta("pexp", theta, conv), x)
            assert np.allclose(other, reference, rtol=1e-14, atol=1e-16)


class TestCrossCorrelation:
    def test_design_point_gives_one(self):
        spec = KernelSpec("pexp", [2.0, 2.0])
        x = np.array([[0.1, 0.1], [0.9, 0.5]])
        r = cross_correlation(spec, x, x[1])
        assert r[1] == 1.0

    def test_far_point_decays(self):
        spec = KernelSpec("pexp", [1.0])
        x = np.array([[0.0], [1.0]])
        r = cross_correlation(spec, x, np.array([300.0]))
        assert np.all(r < 1e-300)

    def test_midpoint_symmetry(self):
        spec = KernelSpec("pexp", [1.0])
        x = np.array([[0.0], [1.0]])
        r = cross_correlation(spec, x, np.array([0.5]))
        assert r[0] == pytest.approx(np.exp(-0.25), rel=1e-14)
        assert r[0] == r[1]

    def test_batch_matches_single(self):
        spec = KernelSpec("matern52", [1.0, 3.0])
        rng = np.random.default_rng(9)
        x = rng.uniform(0, 1, size=(5, 2))
        pts = rng.uniform(0, 1, size=(4, 2))
        batch = cross_correlation(spec, x, pts)
        for j in range(4):
            assert np.array_equal(batch[:, j], cross_correlation(spec, x, pts[j]))


class TestWorkspace:
    def test_matches_direct_assembly(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(0, 1, size=(9, 2))
        for family, exponent in (("pexp", 2.0), ("pexp", 1.95), ("matern52", 2.0)):
            theta = rng.uniform(0.3, 8.0, size=2)
            ws = KernelWorkspace(x, family, exponent)
            spec = spec_from_theta(family, theta, exponent=exponent)
            assert np.allclose(ws.corr(theta), correlation_matrix(spec, x), rtol=1e-14)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0, 1, size=(7, 3))
        for family in ("pexp", "matern52"):
            ws = KernelWorkspace(x, family, 1.8)
            theta = rng.uniform(0.5, 4.0, size=3)
            r0 = ws.corr(theta)
            grads = ws.corr_gradient(theta, r0)
            h = 1e-6
            for k in range(3):
                tp, tm = theta.copy(), theta.copy()
                tp[k] += h
                tm[k] -= h
                fd = (ws.corr(tp) - ws.corr(tm)) / (2 * h)
                assert np.allclose(grads[k], fd, atol=1e-7)
