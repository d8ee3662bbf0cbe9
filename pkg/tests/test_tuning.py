import numpy as np
import pytest

from plsivc.errors import InsufficientDataError
from plsivc.estimator import FitConfig, fit_unpenalized
from plsivc.model import Dataset
from plsivc.penalties import PenaltySpec
from plsivc.simulation import SimConfig, gen_dataset
from plsivc.tuning import (
    TuningGrid,
    adaptive_lambdas,
    cv_score,
    default_knot_grid,
    fold_assignments,
    select_tuning,
)


class TestTuningGrid:
    def test_default_knot_grid(self):
        assert default_knot_grid(200) == (1, 2, 3, 4)
        assert default_knot_grid(100) == (1, 2, 3, 4)
        assert default_knot_grid(1000) == (2, 3, 4, 5)

    def test_validation(self):
        with pytest.raises(ValueError):
            TuningGrid(lambdas=(0.0, 0.1))
        with pytest.raises(ValueError):
            TuningGrid(folds=1)
        with pytest.raises(ValueError):
            TuningGrid(knot_counts=())


class TestAdaptiveLambdas:
    def _unpen(self):
        cfg = SimConfig(n=150, sigma=0.5, reps=1, seed=30)
        data, _ = gen_dataset(cfg, 0)
        return data, fit_unpenalized(data, FitConfig(n_interior=1))

    def test_scaling_formulas(self):
        _, unpen = self._unpen()
        spec = adaptive_lambdas(0.1, unpen)
        np.testing.assert_allclose(spec.lam_phi, 0.1 / np.abs(unpen.phi),
                                   rtol=1e-12)
        np.testing.assert_allclose(spec.lam_theta, 0.1 / np.abs(unpen.theta),
                                   rtol=1e-12)

    def test_zero_lambda(self):
        _, unpen = self._unpen()
        spec = adaptive_lambdas(0.0, unpen)
        assert not spec.lam_phi.any()
        assert not spec.lam_theta.any()
        assert not spec.lam_gamma.any()

    def test_tiny_magnitude_capped(self):
        _, unpen = self._unpen()
        unpen.theta[0] = 1e-12
        spec = adaptive_lambdas(0.1, unpen)
        assert spec.lam_theta[0] == pytest.approx(1e6 * 0.1)

    def test_unit_norm_gamma_scaling(self):
        _, unpen = self._unpen()
        from plsivc.model import h_norm
        from plsivc.splines import gram_matrix
        H = gram_matrix(unpen.knots)
        norms = np.array([h_norm(g, H) for g in unpen.gamma])
        spec = adaptive_lambdas(0.25, unpen)
        np.testing.assert_allclose(spec.lam_gamma, 0.25 / norms, rtol=1e-12)


class TestFoldAssignments:
    def test_deterministic(self):
        a = fold_assignments(100, 5, seed=4)
        b = fold_assignments(100, 5, seed=4)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)

    def test_partition(self):
        folds = fold_assignments(53, 5, seed=1)
        all_idx = np.sort(np.concatenate(folds))
        np.testing.assert_array_equal(all_idx, np.arange(53))

    def test_delete_one(self):
        folds = fold_assignments(7, 7, seed=2)
        assert all(f.size == 1 for f in folds)


class TestCvScore:
    def intercept_data(self):
        # three observations, pure intercept model: q=1 constant z,
        # degree 0, no interior knots, d=0
        y = np.array([1.0, 2.0, 4.0])
        x = np.array([[0.1, 0.9], [0.5, 0.4], [0.8, 0.2]])
        return Dataset(y, None, x, np.ones((3, 1)))

    def test_delete_one_intercept_by_hand(self):
        data = self.intercept_data()
        cfg = FitConfig(degree=0, n_interior=0, penalty=PenaltySpec(lam=0.0))
        score = cv_score(0, 0.0, data, folds=3, config=cfg, seed=0)
        y = data.y
        expected = sum(
            (y[i] - np.delete(y, i).mean()) ** 2 for i in range(3))
        assert score == pytest.approx(expected, rel=1e-10)

    def test_bit_identical_reruns(self):
        cfg0 = SimConfig(n=150, sigma=0.5, reps=1, seed=31)
        data, _ = gen_dataset(cfg0, 0)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        s1 = cv_score(1, 0.05, data, folds=5, config=cfg, seed=9)
        s2 = cv_score(1, 0.05, data, folds=5, config=cfg, seed=9)
        assert s1 == s2

    def test_insufficient_fold_size(self):
        cfg0 = SimConfig(n=100, sigma=0.5, reps=1, seed=32)
        data, _ = gen_dataset(cfg0, 0)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        with pytest.raises(InsufficientDataError, match="insufficient fold size"):
            cv_score(5, 0.05, data, folds=5, config=cfg, seed=0)

    def test_perfect_fit_scores_zero(self):
        # noise-free intercept data: every fold reproduces the constant
        rng = np.random.default_rng(3)
        data = Dataset(np.full(6, 3.0), None, rng.uniform(-1, 1, (6, 2)),
                       np.ones((6, 1)))
        cfg = FitConfig(degree=0, n_interior=0, penalty=PenaltySpec(lam=0.0))
        score = cv_score(0, 0.0, data, folds=6, config=cfg, seed=0)
        assert score == pytest.approx(0.0, abs=1e-18)


class TestSelect:
    def test_single_point_grid(self):
        cfg0 = SimConfig(n=150, sigma=0.5, reps=1, seed=33)
        data, _ = gen_dataset(cfg0, 0)
        grid = TuningGrid(lambdas=(0.05,), knot_counts=(1,), folds=5)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        sel = select_tuning(data, grid, cfg, seed=0)
        assert sel.n_interior == 1
        assert sel.lam == 0.05
        assert len(sel.scores) == 1

    def test_deterministic(self):
        cfg0 = SimConfig(n=150, sigma=0.5, reps=1, seed=34)
        data, _ = gen_dataset(cfg0, 0)
        grid = TuningGrid(lambdas=(0.02, 0.1), knot_counts=(1, 2), folds=5)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        s1 = select_tuning(data, grid, cfg, seed=0)
        s2 = select_tuning(data, grid, cfg, seed=0)
        assert (s1.n_interior, s1.lam) == (s2.n_interior, s2.lam)
        assert s1.scores == s2.scores
        np.testing.assert_array_equal(s1.fit.beta, s2.fit.beta)

    def test_tie_break_order(self):
        # identical lambda twice: the scan must keep the first (smaller
        # K, then smaller lambda, strict improvement only)
        cfg0 = SimConfig(n=150, sigma=0.5, reps=1, seed=35)
        data, _ = gen_dataset(cfg0, 0)
        grid = TuningGrid(lambdas=(0.05, 0.05), knot_counts=(1,), folds=5)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        sel = select_tuning(data, grid, cfg, seed=0)
        assert sel.scores[0][2] == sel.scores[1][2]
        assert sel.lam == 0.05

    def test_returns_per_coefficient_lambdas(self):
        cfg0 = SimConfig(n=150, sigma=0.5, reps=1, seed=36)
        data, _ = gen_dataset(cfg0, 0)
        grid = TuningGrid(lambdas=(0.05,), knot_counts=(1,), folds=5)
        cfg = FitConfig(penalty=PenaltySpec(family="scad"))
        sel = select_tuning(data, grid, cfg, seed=0)
        assert sel.spec.lam_phi is not None
        assert sel.spec.lam_theta.size == data.d
        assert sel.spec.lam_gamma.size == data.q
