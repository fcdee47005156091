import numpy as np
import pytest

from krigbench.designs import maximin_lhs, scale_outputs
from krigbench.estimation import FitConfig
from krigbench.kernels import correlation_matrix, cross_correlation, spec_from_theta
from krigbench.linalg import cholesky, condition_number
from krigbench.model import (
    fit,
    load_model,
    model_from_parameters,
    mu_hat,
    predict_mean,
    predict_mse,
    save_model,
    sigma2_hat,
)
from krigbench.nugget import NuggetStrategy, dace_default_nugget, realize_nugget, stability_lower_bound
from krigbench.testbed import borehole_4d, lm_fit, lm_predict


def naive_predict(model, xstar):
    """Predictive mean and MSE through explicit matrix inversion."""
    n = model.n
    r_delta = correlation_matrix(model.kernel, model.x_design)
    r_delta = r_delta + np.diag(np.broadcast_to(model.delta, (n,)))
    rinv = np.linalg.inv(r_delta)
    ones = np.ones(n)
    r = cross_correlation(model.kernel, model.x_design, xstar)
    mean_scaled = model.mu_hat + r @ rinv @ (model.y_scaled - model.mu_hat)
    one_rinv_one = ones @ rinv @ ones
    mse_scaled = model.sigma2_hat * (
        1.0 - r @ rinv @ r + (1.0 - ones @ rinv @ r) ** 2 / one_rinv_one
    )
    return (
        float(model.scaling.invert(np.atleast_1d(mean_scaled))[0]),
        float(model.scaling.invert_variance(np.atleast_1d(mse_scaled))[0]),
    )


class TestMeanEstimate:
    def test_identity_constant(self):
        factor = cholesky(np.eye(3))
        assert mu_hat(factor, np.array([3.0, 3.0, 3.0])) == pytest.approx(3.0, abs=1e-14)

    def test_identity_is_sample_mean(self):
        factor = cholesky(np.eye(3))
        assert mu_hat(factor, np.array([1.0, 2.0, 3.0])) == pytest.approx(2.0, abs=1e-14)

    def test_symmetric_weights(self):
        factor = cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert mu_hat(factor, np.array([0.0, 4.0])) == pytest.approx(2.0, abs=1e-14)


class TestVarianceEstimate:
    def test_zero_residual(self):
        factor = cholesky(np.eye(4))
        assert sigma2_hat(factor, np.full(4, 1.7), 1.7) == 0.0

    def test_identity_second_moment(self):
        factor = cholesky(np.eye(2))
        assert sigma2_hat(factor, np.array([1.0, -1.0]), 0.0) == pytest.approx(1.0, abs=1e-14)

    def test_matches_naive_inverse(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((5, 5))
        a = m @ m.T + np.eye(5)
        y = rng.normal(size=5)
        mu = 0.3
        expected = (y - mu) @ np.linalg.inv(a) @ (y - mu) / 5
        assert sigma2_hat(cholesky(a), y, mu) == pytest.approx(expected, rel=1e-10)


class TestRealizeNugget:
    def test_stability_bound_identity_is_zero(self):
        assert stability_lower_bound(np.eye(5)) == 0.0
        strategy = NuggetStrategy.stability_lower_bound()
        assert realize_nugget(strategy, np.eye(5), 5) == 0.0

    def test_dace_default_n80(self):
        assert dace_default_nugget(80) == pytest.approx(2.22 * 90.0 * 1e-16, rel=1e-12)
        strategy = NuggetStrategy.dace_default()
        assert realize_nugget(strategy, np.eye(80), 80) == pytest.approx(1.998e-14, rel=1e-12)

    def test_fixed_value(self):
        strategy = NuggetStrategy.fixed(1e-6)
        assert realize_nugget(strategy, np.eye(3), 3) == 1e-6

    def test_stability_bound_near_singular(self):
        # strongly correlated pair: bound must be positive
        r = np.array([[1.0, 1.0 - 1e-14], [1.0 - 1e-14, 1.0]])
        assert stability_lower_bound(r) > 0.0

    def test_per_point_vector(self):
        noise = np.array([0.1, 0.2, 0.3])
        strategy = NuggetStrategy.per_point(noise)
        got = realize_nugget(strategy, np.eye(3), 3, current=2.0)
        assert np.allclose(got, 2.0 * noise)


def _smooth_fit(nugget=None, seed=5, n=8, family="pexp", exponent=2.0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 1, size=n)).reshape(-1, 1)
    y = np.sin(5.0 * x[:, 0]) + 2.0
    config = FitConfig(nugget=nugget or NuggetStrategy.fixed(0.0), seed=seed)
    return x, y, fit(x, y, family, config, exponent=exponent)


class TestPrediction:
    def test_interpolates_design_points(self):
        x, y, model = _smooth_fit()
        assert np.max(np.abs(predict_mean(model, x) - y)) < 1e-6
        assert np.max(predict_mse(model, x)) < 1e-6 * model.sigma2_hat + 1e-30

    def test_mean_reversion_far_away(self):
        x, y, model = _smooth_fit()
        far = np.array([5000.0])
        r = cross_correlation(model.kernel, model.x_design, far)
        assert np.all(r < 1e-12)
        expected_mean = model.scaling.invert(np.array([model.mu_hat]))[0]
        assert predict_mean(model, far) == pytest.approx(expected_mean, rel=1e-12)
        expected_mse = model.scaling.invert_variance(
            np.array([model.sigma2_hat * (1.0 + 1.0 / model.one_rinv_one)])
        )[0]
        assert predict_mse(model, far) == pytest.approx(expected_mse, rel=1e-10)

    def test_matches_naive_oracle(self):
        # random instances at controlled theta; skip those where the
        # explicit inverse used by the oracle loses more than the 1e-9
        # target (quadratic forms through an inverse lose kappa^2 * eps)
        rng = np.random.default_rng(3)
        checked = 0
        for trial in range(40):
            n = int(rng.integers(2, 9))
            d = int(rng.integers(1, 3))
            x = rng.uniform(0, 1, size=(n, d))
            y = rng.normal(size=n)
            family = "pexp" if trial % 2 else "matern52"
            theta = rng.uniform(2.0, 80.0, size=d)
            spec = spec_from_theta(family, theta)
            r_delta = correlation_matrix(spec, x) + 1e-6 * np.eye(n)
            if condition_number(r_delta) > 2e3:
                continue
            model = model_from_parameters(x, y, spec, delta=1e-6)
            for _ in range(3):
                xstar = rng.uniform(0, 1, size=d)
                mean, mse = naive_predict(model, xstar)
                assert predict_mean(model, xstar) == pytest.approx(mean, rel=1e-9, abs=1e-9)
                assert predict_mse(model, xstar) == pytest.approx(mse, rel=1e-9, abs=1e-9)
            checked += 1
        assert checked >= 20

    def test_mse_nonnegative(self):
        x, y, model = _smooth_fit(nugget=NuggetStrategy.estimated(1e-6), seed=11, n=15)
        grid = np.linspace(-0.3, 1.3, 300).reshape(-1, 1)
        assert np.all(predict_mse(model, grid) >= 0.0)

    def test_parameterization_invariance_of_predictions(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(0, 1, size=(7, 2))
        y = rng.normal(size=7)
        theta = np.array([3.0, 0.8])
        grid = rng.uniform(0, 1, size=(12, 2))
        reference = None
        for conv in ("theta", "log10", "inv", "lensq"):
            config = FitConfig(nugget=NuggetStrategy.fixed(1e-8), seed=1, n_starts=1,
                               n_lhs_candidates=8)
            model = fit(x, y, "pexp", config, parameterization=conv,
                        initial_params=spec_from_theta("pexp", theta, conv).params)
            # evaluate the prediction equations at the same canonical theta
            object.__setattr__(model.kernel, "params",
                               spec_from_theta("pexp", theta, conv).params)
            preds = predict_mean(model, grid)
            if reference is None:
                reference = preds
            else:
                assert np.allclose(preds, reference, rtol=1e-12, atol=1e-12)


class TestFit:
    def test_constant_outputs_degenerate(self):
        x = np.linspace(0, 1, 5).reshape(-1, 1)
        y = np.full(5, 7.0)
        model = fit(x, y)
        assert model.degenerate
        assert model.sigma2_hat == 0.0
        grid = np.linspace(0, 1, 9).reshape(-1, 1)
        assert np.array_equal(predict_mean(model, grid), np.full(9, 7.0))
        assert np.all(predict_mse(model, grid) >= 0.0)

    def test_six_point_interpolation(self):
        x = np.linspace(0, 1, 6).reshape(-1, 1)
        y = np.sin(6.0 * x[:, 0]) + x[:, 0]
        model = fit(x, y, config=FitConfig(nugget=NuggetStrategy.fixed(0.0), seed=2))
        assert np.max(np.abs(predict_mean(model, x) - y)) < 1e-6

    def test_beats_linear_model_on_borehole(self):
        x = maximin_lhs(30, 4, seed=9, iters=2000)
        y = borehole_4d(x)
        xp = maximin_lhs(200, 4, seed=10, iters=500)
        truth = borehole_4d(xp)
        model = fit(x, y, config=FitConfig(nugget=NuggetStrategy.estimated(1e-6), seed=3))
        gp_rmse = np.sqrt(np.mean((predict_mean(model, xp) - truth) ** 2))
        baseline = lm_fit(x, y)
        lm_rmse = np.sqrt(np.mean((lm_predict(baseline, xp) - truth) ** 2))
        assert gp_rmse < lm_rmse

    def test_interpolation_all_families(self):
        for family, exponent in (("pexp", 2.0), ("pexp", 1.95), ("matern52", 2.0)):
            x, y, model = _smooth_fit(seed=7, n=10, family=family, exponent=exponent)
            assert np.max(np.abs(predict_mean(model, x) - y)) < 1e-6

    def test_jitter_ladder_near_singular(self):
        # two points at distance 1e-8: R is numerically singular at most theta
        x = np.array([[0.5], [0.5 + 1e-8]])
        y = np.array([1.0, 2.0])
        model = fit(x, y, config=FitConfig(nugget=NuggetStrategy.fixed(0.0), seed=1))
        assert np.isfinite(predict_mean(model, np.array([0.7])))

    def test_duplicate_rows_with_nugget(self):
        x = np.array([[0.2], [0.2], [0.8], [0.8]])
        y = np.array([1.0, 1.2, 3.0, 2.8])
        model = fit(x, y, config=FitConfig(nugget=NuggetStrategy.estimated(1e-4), seed=4))
        assert np.isfinite(predict_mean(model, np.array([0.5])))
        assert np.all(predict_mse(model, x) >= 0.0)

    def test_minimal_two_point_fit(self):
        x = np.array([[0.1], [0.9]])
        y = np.array([0.0, 1.0])
        model = fit(x, y, config=FitConfig(nugget=NuggetStrategy.fixed(1e-10), seed=6))
        assert np.isfinite(predict_mean(model, np.array([0.5])))

    def test_validates_inputs(self):
        with pytest.raises(ValueError):
            fit(np.ones((1, 2)), np.ones(1))
        with pytest.raises(ValueError):
            fit(np.array([[0.0], [np.nan]]), np.array([1.0, 2.0]))

    def test_alpha_invariant(self):
        x, y, model = _smooth_fit(seed=13, n=9)
        r_delta = correlation_matrix(model.kernel, model.x_design)
        r_delta += np.diag(np.broadcast_to(model.delta, (model.n,)))
        residual = r_delta @ model.alpha - (model.y_scaled - model.mu_hat)
        assert np.max(np.abs(residual)) < 1e-8


class TestSerialization:
    def test_roundtrip_bit_identical_predictions(self, tmp_path):
        x, y, model = _smooth_fit(nugget=NuggetStrategy.estimated(1e-6), seed=21, n=12)
        grid = np.linspace(-0.2, 1.2, 40).reshape(-1, 1)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(predict_mean(loaded, grid), predict_mean(model, grid))
        assert np.array_equal(predict_mse(loaded, grid), predict_mse(model, grid))

    def test_roundtrip_per_point_delta(self, tmp_path):
        rng = np.random.default_rng(8)
        x = np.linspace(0, 1, 7).reshape(-1, 1)
        y = np.sin(3 * x[:, 0]) + rng.normal(scale=0.05, size=7)
        noise = np.full(7, 0.0025)
        config = FitConfig(nugget=NuggetStrategy.per_point(noise), seed=3)
        model = fit(x, y, config=config)
        path = tmp_path / "sk_model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert isinstance(loaded.delta, np.ndarray)
        grid = np.linspace(0, 1, 20).reshape(-1, 1)
        assert np.array_equal(predict_mean(loaded, grid), predict_mean(model, grid))

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_model(path)
