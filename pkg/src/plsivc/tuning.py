"""Tuning-parameter selection by cross-validation.

A single base lambda is turned into per-coefficient values through the
adaptive scaling lambda / |unpenalized estimate| (H-norm for the
coefficient-function blocks), and (K, lambda) is chosen by minimizing
the cross-validated prediction error.  V = n reproduces delete-one
cross-validation; the default V = 5 keeps Monte Carlo campaigns
affordable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, InsufficientDataError, NumericalError
from .estimator import FitConfig, FitResult, fit_penalized, fit_unpenalized
from .model import Dataset, h_norm
from .penalties import PenaltySpec
from .splines import gram_matrix

# unpenalized magnitudes below this get the capped adaptive weight
TINY_ESTIMATE = 1e-8
LAMBDA_CAP_FACTOR = 1e6


@dataclass(frozen=True)
class TuningGrid:
    """Candidate grids for (K, lambda) and the fold count V.

    ``lambdas = None`` defers to a log-spaced grid over
    [1e-3, 2] * sigma_hat, where sigma_hat is the residual scale of the
    unpenalized fit at the central knot count.  ``knot_counts = None``
    defers to {max(1, floor(n^0.2) - 1), ..., floor(n^0.2) + 2}.
    """

    lambdas: tuple[float, ...] | None = None
    n_lambdas: int = 20
    knot_counts: tuple[int, ...] | None = None
    folds: int = 5

    def __post_init__(self):
        if self.lambdas is not None:
            if len(self.lambdas) == 0 or min(self.lambdas) <= 0.0:
                raise ValueError("lambda grid must be non-empty and positive")
            object.__setattr__(self, "lambdas", tuple(float(l) for l in self.lambdas))
        elif self.n_lambdas < 1:
            raise ValueError("n_lambdas must be >= 1")
        if self.knot_counts is not None:
            if len(self.knot_counts) == 0 or min(self.knot_counts) < 0:
                raise ValueError("knot grid must be non-empty and non-negative")
            object.__setattr__(self, "knot_counts",
                               tuple(int(k) for k in self.knot_counts))
        if self.folds < 2:
            raise ValueError("fold count must be >= 2")

    def resolve_knots(self, n: int) -> tuple[int, ...]:
        if self.knot_counts is not None:
            return self.knot_counts
        return default_knot_grid(n)

    def resolve_folds(self, n: int) -> int:
        if self.folds > n:
            raise ValueError("fold count exceeds the sample size")
        return self.folds


def default_knot_grid(n: int) -> tuple[int, ...]:
    """Grid centred on the n^(1/5) knot-count rate for cubic splines."""
    center = int(np.floor(n ** 0.2))
    return tuple(range(max(1, center - 1), center + 3))


def adaptive_lambdas(lam: float, unpen: FitResult,
                     base: PenaltySpec | None = None) -> PenaltySpec:
    """Per-coefficient tuning parameters lambda / |unpenalized estimate|.

    Unpenalized magnitudes below 1e-8 would give an effectively infinite
    lambda; those are capped at 1e6 * lambda so the arithmetic stays
    finite (such components are thresholded immediately anyway).
    """
    base = base or PenaltySpec()
    H = gram_matrix(unpen.knots)
    gnorms = np.array([h_norm(g, H) for g in unpen.gamma])

    def scale(mags):
        mags = np.abs(np.asarray(mags, dtype=float))
        out = np.where(mags > TINY_ESTIMATE, lam / np.maximum(mags, TINY_ESTIMATE),
                       LAMBDA_CAP_FACTOR * lam)
        return out

    return replace(base, lam=lam,
                   lam_phi=scale(unpen.phi),
                   lam_theta=scale(unpen.theta),
                   lam_gamma=scale(gnorms))


def fold_assignments(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic fold split: a permutation of range(n) derived from
    (seed, n, folds), dealt round-robin into the folds."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, folds]))
    perm = rng.permutation(n)
    return [np.sort(perm[v::folds]) for v in range(folds)]


class _Workspace:
    """Caches the per-(K, fold) unpenalized fits so that lambda sweeps
    and multiple penalty families reuse them."""

    def __init__(self, data: Dataset, config: FitConfig, folds: int, seed: int):
        self.data = data
        self.config = config
        self.seed = seed
        self.folds = fold_assignments(data.n, folds, seed)
        self.all_rows = np.arange(data.n)
        self._fold_fits: dict[tuple[int, int], tuple[Dataset, np.ndarray, FitResult]] = {}
        self._full_fits: dict[int, FitResult] = {}
        self._full_pen: dict[tuple[int, float, str], FitResult] = {}

    def fold_fit(self, K: int, v: int):
        key = (K, v)
        if key not in self._fold_fits:
            test = self.folds[v]
            train = np.setdiff1d(self.all_rows, test, assume_unique=True)
            sub = self.data.subset(train)
            cfg = replace(self.config, n_interior=K)
            # warm-start the fold fit from the full-data direction; the
            # expensive multi-candidate search runs once per K
            fit = fit_unpenalized(sub, cfg, phi_init=self.full_fit(K).phi)
            self._fold_fits[key] = (sub, test, fit)
        return self._fold_fits[key]

    def full_fit(self, K: int) -> FitResult:
        if K not in self._full_fits:
            cfg = replace(self.config, n_interior=K)
            phi0 = None
            if self._full_fits:
                # reuse the direction found at the first K fitted
                first = next(iter(self._full_fits.values()))
                phi0 = first.phi
            self._full_fits[K] = fit_unpenalized(self.data, cfg, phi_init=phi0)
        return self._full_fits[K]

    def sigma_hat(self, K: int) -> float:
        fit = self.full_fit(K)
        n = self.data.n
        dof = self.data.d + self.data.q * fit.knots.dim + self.data.p - 1
        return float(np.sqrt(fit.rss / max(n - dof, 1)))

    def lambda_grid(self, grid: TuningGrid) -> tuple[float, ...]:
        if grid.lambdas is not None:
            return grid.lambdas
        knots = grid.resolve_knots(self.data.n)
        center = knots[min(len(knots) - 1, max(0, len(knots) // 2))]
        sigma = self.sigma_hat(center)
        lo, hi = 1e-3 * sigma, 2.0 * sigma
        return tuple(np.geomspace(lo, hi, grid.n_lambdas))

    def full_penalized(self, K: int, lam: float, family: str, a: float) -> FitResult:
        key = (K, lam, family)
        if key not in self._full_pen:
            unpen = self.full_fit(K)
            spec = adaptive_lambdas(
                lam, unpen, PenaltySpec(family=family, lam=lam, a=a))
            cfg = replace(self.config, n_interior=K, penalty=spec)
            self._full_pen[key] = fit_penalized(self.data, cfg, init=unpen)
        return self._full_pen[key]

    def score(self, K: int, lam: float, family: str, a: float) -> float:
        """CV(K, lambda): summed squared held-out prediction error.

        Fold fits are warm-started from the full-data penalized fit at
        the same (K, lambda); each is still iterated to convergence on
        its own training objective with its own adaptive lambdas."""
        cfg = replace(self.config, n_interior=K)
        warm = self.full_penalized(K, lam, family, a)
        total = 0.0
        for v in range(len(self.folds)):
            sub, test, unpen = self.fold_fit(K, v)
            spec = adaptive_lambdas(
                lam, unpen, PenaltySpec(family=family, lam=lam, a=a))
            fit = fit_penalized(sub, replace(cfg, penalty=spec), init=warm)
            pred = fit.predict(self.data.u[test], self.data.x[test],
                               self.data.z[test])
            r = self.data.y[test] - pred
            total += float(r @ r)
        return total


@dataclass
class SelectionResult:
    """Winning grid point, its adaptive penalty and the full-data refit."""

    n_interior: int
    lam: float
    spec: PenaltySpec
    fit: FitResult
    unpenalized: FitResult
    scores: list[tuple[int, float, float]]  # (K, lambda, cv score)
    failures: list[tuple[int, float, str]]


def cv_score(K: int, lam: float, data: Dataset, folds: int,
             config: FitConfig, seed: int) -> float:
    """Cross-validation score of one (K, lambda) pair.

    Deterministic in (seed, n, folds); folds == n gives delete-one CV.
    """
    ws = _Workspace(data, config, folds, seed)
    try:
        return ws.score(K, lam, config.penalty.family, config.penalty.a)
    except InsufficientDataError as exc:
        raise InsufficientDataError(f"insufficient fold size: {exc}") from exc


def _select_one(ws: _Workspace, grid: TuningGrid, config: FitConfig,
                family: str) -> SelectionResult:
    lambdas = ws.lambda_grid(grid)
    knot_counts = grid.resolve_knots(ws.data.n)

    scores: list[tuple[int, float, float]] = []
    failures: list[tuple[int, float, str]] = []
    best = None
    for K in knot_counts:
        for lam in lambdas:
            try:
                s = ws.score(K, lam, family, config.penalty.a)
            except (DataError, NumericalError) as exc:
                failures.append((K, lam, str(exc)))
                continue
            scores.append((K, lam, s))
            if best is None or s < best[2]:
                best = (K, lam, s)
    if best is None:
        detail = "; ".join(f"K={k} lam={l:.4g}: {m}" for k, l, m in failures[:5])
        raise NumericalError(f"all tuning grid points failed ({detail})")

    K_star, lam_star, _ = best
    unpen = ws.full_fit(K_star)
    fit = ws.full_penalized(K_star, lam_star, family, config.penalty.a)
    return SelectionResult(
        n_interior=K_star, lam=lam_star, spec=fit.lambdas, fit=fit,
        unpenalized=unpen, scores=scores, failures=failures)


def select_tuning(data: Dataset, grid: TuningGrid, config: FitConfig,
                  seed: int) -> SelectionResult:
    """Exhaustive grid search minimizing the CV score.

    Grid points whose folds cannot be fit are recorded and skipped;
    ties break toward smaller K, then smaller lambda (scan order with
    strict improvement).  The winner is refit on the full data.
    """
    folds = grid.resolve_folds(data.n)
    ws = _Workspace(data, config, folds, seed)
    return _select_one(ws, grid, config, config.penalty.family)


def select_families(data: Dataset, grid: TuningGrid, config: FitConfig,
                    seed: int, families: tuple[str, ...]) -> dict[str, SelectionResult]:
    """Run ``select_tuning`` for several penalty families while sharing
    the cached unpenalized fold fits."""
    folds = grid.resolve_folds(data.n)
    ws = _Workspace(data, config, folds, seed)
    return {family: _select_one(ws, grid, config, family)
            for family in families}
