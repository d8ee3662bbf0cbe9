import numpy as np
import pytest

from plsivc.estimator import FitConfig
from plsivc.simulation import (
    BETA0,
    G_SUPPORT,
    SIGMA_U,
    SIGMA_Z,
    THETA0,
    SimConfig,
    gen_dataset,
    g1_true,
    g2_true,
    metric_counts,
    metric_gmse,
    metric_inner_product,
    metric_rase,
    oracle_fit,
    rase_grid,
    run_monte_carlo,
)
from plsivc.tuning import TuningGrid


class TestGenDataset:
    def test_truth_constants(self):
        assert np.linalg.norm(BETA0) == pytest.approx(1.0, abs=1e-15)
        assert SIGMA_Z[0, 1] == pytest.approx(2.0)
        assert SIGMA_U[0, 1] == pytest.approx(1.5)
        np.testing.assert_array_equal(THETA0[:3], [2.0, 1.6, 0.8])

    def test_index_range_bound(self):
        cfg = SimConfig(n=500, sigma=0.5, reps=1, seed=40)
        data, _ = gen_dataset(cfg, 0)
        assert np.max(np.abs(data.x @ BETA0)) <= 1.25

    def test_deterministic_per_seed_and_rep(self):
        cfg = SimConfig(n=100, sigma=0.5, reps=2, seed=41)
        d1, _ = gen_dataset(cfg, 1)
        d2, _ = gen_dataset(cfg, 1)
        np.testing.assert_array_equal(d1.y, d2.y)
        d3, _ = gen_dataset(cfg, 0)
        assert not np.array_equal(d1.y, d3.y)

    def test_noise_free_requires_flag(self):
        with pytest.raises(ValueError, match="noise_free"):
            SimConfig(n=100, sigma=0.0, reps=1, seed=0)

    def test_z_covariance_converges(self):
        cfg = SimConfig(n=100_000, sigma=0.5, reps=1, seed=42)
        data, _ = gen_dataset(cfg, 0)
        emp = np.cov(data.z.T)
        assert np.max(np.abs(emp - SIGMA_Z)) < 0.15

    def test_model_equation(self):
        cfg = SimConfig(n=50, sigma=1e-12, reps=1, seed=43,
                        allow_noise_free=True)
        data, truth = gen_dataset(cfg, 0)
        u_idx = data.x @ BETA0
        mean = (data.u @ THETA0 + g1_true(u_idx) * data.z[:, 0]
                + g2_true(u_idx) * data.z[:, 1])
        np.testing.assert_allclose(data.y, mean, atol=1e-10)


class TestMetrics:
    def test_gmse_zero_at_truth(self):
        assert metric_gmse(THETA0, THETA0) == 0.0

    def test_gmse_uses_design_covariance(self):
        diff = np.zeros(10)
        diff[0] = 1.0
        assert metric_gmse(THETA0 + diff, THETA0) == pytest.approx(3.0)

    def test_inner_product_sign_normalizes(self):
        assert metric_inner_product(-BETA0, BETA0) == pytest.approx(1.0)

    def test_counts(self):
        est = BETA0.copy()
        assert metric_counts(est, BETA0) == (7, 0)
        est[0] = 0.0
        assert metric_counts(est, BETA0) == (7, 1)
        est = np.zeros(10)
        assert metric_counts(est, BETA0) == (7, 3)

    def test_rase_zero_for_exact_curve(self):
        cfg = SimConfig(n=200, sigma=0.5, reps=1, seed=44)
        data, truth = gen_dataset(cfg, 0)
        fit = oracle_fit(data, truth, FitConfig(n_interior=2, tol=1e-9))
        grid = rase_grid(20)
        r = metric_rase(fit, lambda u: fit.coefficient_functions(u)[:, 0],
                        0, grid)
        assert r == pytest.approx(0.0, abs=1e-12)


class TestOracleFit:
    def test_noise_free_exact_recovery(self):
        cfg = SimConfig(n=300, sigma=0.0, reps=1, seed=45,
                        allow_noise_free=True, exact_spline_truth=True,
                        fit=FitConfig(n_interior=2))
        data, truth = gen_dataset(cfg, 0)
        fit = oracle_fit(data, truth, FitConfig(n_interior=2, tol=1e-12,
                                                max_iter=100))
        assert np.max(np.abs(fit.beta - truth.beta)) < 1e-6
        assert np.max(np.abs(fit.theta - truth.theta)) < 1e-6

    def test_support_is_fixed(self):
        cfg = SimConfig(n=200, sigma=1.0, reps=1, seed=46)
        data, truth = gen_dataset(cfg, 0)
        fit = oracle_fit(data, truth, FitConfig(n_interior=1))
        assert metric_counts(fit.beta, truth.beta) == (7, 0)
        assert metric_counts(fit.theta, truth.theta) == (7, 0)
        g_ind = np.any(fit.gamma != 0.0, axis=1)
        assert list(np.nonzero(g_ind)[0]) == list(G_SUPPORT)


class TestRunMonteCarlo:
    def _cfg(self, **kw):
        base = dict(n=150, sigma=0.5, reps=2, seed=47,
                    methods=("scad", "oracle"),
                    tuning=TuningGrid(n_lambdas=3, knot_counts=(1,)))
        base.update(kw)
        return SimConfig(**base)

    def test_noise_free_single_rep_ideal_metrics(self):
        cfg = self._cfg(sigma=1e-6, reps=1, allow_noise_free=True,
                        exact_spline_truth=True)
        summary = run_monte_carlo(cfg)
        scad = summary.methods["scad"]
        assert scad.mean > 0.9999
        # the tuned penalty leaves a trace of shrinkage bias; "ideal"
        # here means orders of magnitude below the noisy-case values
        assert scad.gmse < 1e-3
        assert scad.i_beta == 0.0 and scad.i_theta == 0.0
        assert summary.methods["oracle"].rase_mean < 0.05

    def test_reproducible_across_threads(self):
        cfg = self._cfg()
        s1 = run_monte_carlo(cfg, threads=1)
        s2 = run_monte_carlo(cfg, threads=2)
        for m in s1.methods:
            assert s1.methods[m] == s2.methods[m]
        for m in s1.g_hat_mean:
            np.testing.assert_array_equal(s1.g_hat_mean[m], s2.g_hat_mean[m])

    def test_failures_recorded_not_raised(self):
        # n too small for every candidate K: all replications fail but
        # the campaign still returns
        cfg = SimConfig(n=61, sigma=0.5, reps=2, seed=48,
                        methods=("scad",),
                        tuning=TuningGrid(n_lambdas=2, knot_counts=(3,)))
        summary = run_monte_carlo(cfg)
        assert len(summary.failures) == 2
        assert summary.methods == {}
