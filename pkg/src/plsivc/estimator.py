"""Penalized least-squares fitting by stepwise LQA iteration.

The algorithm alternates, from unpenalized preliminary estimates:

  1. exact ridge-type solve for alpha = (theta, gamma) given phi, with
     local-quadratic-approximation weights anchored at the previous
     iterate;
  2. a damped Newton step (Gauss-Newton Hessian) for phi given alpha;
  3. hard-thresholding: any |phi_l|, |theta_h| or ||gamma_k||_H below
     the zeroing threshold becomes an exact zero and leaves the active
     set for good.

Knots are rebuilt from the current index values at the start of every
outer iteration (then frozen near convergence, where rebuilding makes
the outer map non-contractive); within an iteration the knot vector is
fixed and out-of-range index values are clamped (and counted).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InsufficientDataError, SingularDesignError
from .model import (
    Dataset,
    beta_from_phi,
    design_matrix,
    h_norm,
    index_jacobian,
    model_mean,
    phi_from_beta,
    sign_normalize,
)
from .penalties import PenaltySpec, lqa_weight, penalty_value
from .splines import KnotVector, basis_deriv_matrix, basis_matrix, gram_matrix, make_knots

# ball-constraint margin: iterates keep ||phi|| <= 1 - PHI_MARGIN
PHI_MARGIN = 1e-6
MAX_HALVINGS = 30


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the iterative fit.

    ``n_interior`` is the interior-knot count K; when None it defaults
    to floor(n**(1/5)), the rate-optimal order for twice-differentiable
    coefficient functions under cubic splines.
    """

    degree: int = 3
    n_interior: int | None = None
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    epsilon: float = 1e-2
    tol: float = 1e-4
    max_iter: int = 50
    max_inner: int = 3
    ridge: float = 1e-8
    # index of the x column whose beta entry is anchored positive by the
    # ball parameterization; None keeps the natural ordering (column 0).
    # Anchoring on the dominant covariate matters when the leading
    # component of the true direction is small or negative.
    anchor: int | None = None

    def __post_init__(self):
        if self.epsilon <= 0.0 or self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("epsilon and tol must be positive, max_iter >= 1")

    def knot_count(self, n: int) -> int:
        if self.n_interior is not None:
            return self.n_interior
        return max(1, int(np.floor(n ** 0.2)))


@dataclass
class FitResult:
    """Estimates plus convergence diagnostics from one fit."""

    beta: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray          # (q, L) spline coefficients per function
    knots: KnotVector
    converged: bool
    iterations: int
    rss: float
    objective: float
    n_clamped: int
    lambdas: PenaltySpec
    grid: np.ndarray = field(repr=False, default=None)
    g_hat: np.ndarray = field(repr=False, default=None)  # (len(grid), q)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def beta_support(self) -> np.ndarray:
        return np.nonzero(self.beta != 0.0)[0]

    @property
    def theta_support(self) -> np.ndarray:
        return np.nonzero(self.theta != 0.0)[0]

    @property
    def g_support(self) -> np.ndarray:
        return np.nonzero(np.any(self.gamma != 0.0, axis=1))[0]

    def coefficient_functions(self, u) -> np.ndarray:
        """Evaluate all fitted g_k at the given points, shape (len(u), q)."""
        return basis_matrix(self.knots, u) @ self.gamma.T

    def predict(self, u_block, x, z) -> np.ndarray:
        return model_mean(self.knots, self.beta, self.theta, self.gamma,
                          u_block, x, z)


def _chol_solve(G: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    """Solve G a = b for symmetric positive (semi)definite G, adding
    scaled ridge jitter when the plain factorization fails."""
    if G.shape[0] == 0:
        return np.zeros(0)
    try:
        np.linalg.cholesky(G)
        return np.linalg.solve(G, b)
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.mean(np.diag(G))), 1.0)
    for boost in (1.0, 1e4):
        Gj = G + ridge * boost * scale * np.eye(G.shape[0])
        try:
            np.linalg.cholesky(Gj)
            return np.linalg.solve(Gj, b)
        except np.linalg.LinAlgError:
            continue
    raise SingularDesignError("singular design")


def effective_knots(index_values, n_interior: int, degree: int) -> KnotVector:
    """Knot vector the fit uses for a set of index values.

    With enough data the boundary comes from the second-smallest and
    second-largest values: a single extreme index point would otherwise
    create a nearly empty edge span whose barely-constrained
    coefficients explode under clamped extrapolation.  The trimmed
    points themselves are evaluated clamped (and counted)."""
    values = np.asarray(index_values, dtype=float)
    if values.size >= 120:
        trimmed = np.partition(values, [1, values.size - 2])
        lo, hi = trimmed[1], trimmed[values.size - 2]
        if lo < hi:
            values = np.clip(values, lo, hi)
    return make_knots(values, n_interior, degree)


def _anchor_perm(p: int, anchor: int):
    perm = np.concatenate([[anchor], np.delete(np.arange(p), anchor)])
    return perm, np.argsort(perm)


def _apply_anchor(data: Dataset, config: FitConfig):
    """Reorder the index block so the anchored covariate comes first
    (its beta entry is the one the ball parameterization keeps
    positive).  Returns (data, inverse permutation or None)."""
    if config.anchor is None or config.anchor == 0:
        return data, None
    if not 0 <= config.anchor < data.p:
        raise ValueError("anchor column out of range")
    perm, inv = _anchor_perm(data.p, config.anchor)
    return Dataset(data.y, data.u, data.x[:, perm], data.z), inv


def initial_phi_candidates(data: Dataset, config: FitConfig,
                           count: int = 3) -> list[np.ndarray]:
    """Ranked preliminary index directions.

    The profile objective in phi is multimodal (the spline blocks can
    absorb a lot of structure along a wrong index), so a single starting
    direction is not reliable.  The search is deterministic:

    1. build candidate directions: the ordinary least-squares direction
       of y on x, moment directions from quadratic regressions of the
       interaction targets (y residualized on u) * z_k on x, and the
       coordinate axes;
    2. score every candidate by one least-squares pass on a coarse
       no-interior-knot basis, where the profile surface is least
       contorted;
    3. polish the best few with linearized global re-solves of the
       direction against the current curve estimates, which can jump
       across shelves that defeat incremental steps;
    4. return the best-scoring, mutually distinct candidates (the
       caller multi-starts from them).
    """
    eye = np.eye(data.p)
    pool = []
    ols = _ols_direction(data)
    if ols is not None:
        pool.append(ols)
    pool.extend(_moment_directions(data))
    pool.extend(_shrink_into_ball(phi_from_beta(eye[j])) for j in range(data.p))

    # two-axis combinations, pre-screened by a cheap in-sample pass
    axis_pairs = range(data.p) if data.p <= 12 else _top_axes(data, config, 6)
    combos = []
    for i in axis_pairs:
        for j in axis_pairs:
            if j <= i:
                continue
            for sgn in (1.0, -1.0):
                v = eye[i] + sgn * eye[j]
                combos.append(_shrink_into_ball(phi_from_beta(v / np.linalg.norm(v))))
    combo_scores = []
    for idx, c in enumerate(combos):
        try:
            combo_scores.append((_one_pass_rss(data, config, 0, c), idx))
        except (np.linalg.LinAlgError, SingularDesignError, ValueError):
            continue
    combo_scores.sort()
    pool.extend(combos[idx] for _, idx in combo_scores[:10])
    if not pool:
        return np.zeros(data.p - 1)

    scored = []
    for idx, phi in enumerate(pool):
        try:
            scored.append((_cv_profile_score(data, config, phi), idx))
        except (np.linalg.LinAlgError, SingularDesignError, ValueError):
            continue
    if not scored:
        return np.zeros(data.p - 1)
    scored.sort()

    ranked = [(scored[0][0], pool[scored[0][1]])]
    for _, idx in scored[:6]:
        try:
            polished = _linearized_direction_rounds(data, config, pool[idx])
            score = _cv_profile_score(data, config, polished)
        except (np.linalg.LinAlgError, SingularDesignError, ValueError):
            continue
        ranked.append((score, polished))
    ranked.sort(key=lambda t: t[0])

    # keep well-separated starters for the multi-start stage
    starters = []
    for _, phi in ranked:
        if all(np.max(np.abs(phi - other)) > 0.05 for other in starters):
            starters.append(phi)
        if len(starters) == count:
            break
    return starters if starters else [np.zeros(data.p - 1)]


def initial_phi(data: Dataset, config: FitConfig) -> np.ndarray:
    """Best single preliminary direction (see ``initial_phi_candidates``)."""
    return initial_phi_candidates(data, config, count=1)[0]


def _top_axes(data: Dataset, config: FitConfig, count: int) -> list[int]:
    eye = np.eye(data.p)
    scored = []
    for j in range(data.p):
        phi = _shrink_into_ball(phi_from_beta(eye[j]))
        try:
            scored.append((_one_pass_rss(data, config, 0, phi), j))
        except (np.linalg.LinAlgError, SingularDesignError, ValueError):
            continue
    scored.sort()
    return [j for _, j in scored[:count]]


def _cv_profile_score(data: Dataset, config: FitConfig, phi,
                      folds: int = 5, ridge: float = 3e-2) -> float:
    """Cross-evaluated residual sum of squares of the coarse
    (no-interior-knot) model at a fixed direction.

    Ranks starting directions honestly: unlike the in-sample profile it
    is not fooled by the flexibility of the spline blocks, and the
    sizeable ridge keeps the fold solves stable when the column count
    approaches the fold size."""
    beta = beta_from_phi(phi)
    u_idx = data.x @ beta
    kv = effective_knots(u_idx, 0, config.degree)
    B = basis_matrix(kv, np.clip(u_idx, kv.a, kv.b))
    W = (data.z[:, :, None] * B[:, None, :]).reshape(data.n, -1)
    F = np.column_stack([data.u, W])
    if data.n < 2 * folds:
        resid = data.y - F @ np.linalg.lstsq(F, data.y, rcond=None)[0]
        return float(resid @ resid)
    idx = np.arange(data.n)
    total = 0.0
    for v in range(folds):
        te = idx % folds == v
        tr = ~te
        G = F[tr].T @ F[tr]
        G += ridge * max(float(np.mean(np.diag(G))), 1.0) * np.eye(G.shape[0])
        a = np.linalg.solve(G, F[tr].T @ data.y[tr])
        r = data.y[te] - F[te] @ a
        total += float(r @ r)
    return total


def _shrink_into_ball(phi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(phi)
    cap = 1.0 - PHI_MARGIN
    if norm > cap:
        phi = phi * (cap / norm)
    return phi


def _ols_direction(data: Dataset):
    X1 = np.column_stack([np.ones(data.n), data.x])
    coef, *_ = np.linalg.lstsq(X1, data.y, rcond=None)
    b = coef[1:]
    if np.linalg.norm(b) < 1e-12:
        return None
    return _shrink_into_ball(phi_from_beta(b))


def _moment_directions(data: Dataset) -> list[np.ndarray]:
    """Candidate directions from quadratic regressions of the
    interaction targets on x (x standardized internally).

    The response is first residualized on the linear covariates, which
    removes the theta'u part exactly in the mean; the products
    residual * z_k then carry the coefficient-function signal, whose
    linear parts a_k and quadratic matrices B_k are proportional to
    beta and beta beta'.  Returned: the leading eigenvector of
    sum_k (a_k a_k' + B_k B_k'), its rank-one alternating refinement,
    and the leading eigenvectors of the three strongest B_k."""
    x = data.x
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    if np.any(sd == 0.0):
        return []
    xs = (x - mu) / sd
    n, p = xs.shape

    y = data.y
    if data.d:
        U1 = np.column_stack([np.ones(n), data.u])
        coef, *_ = np.linalg.lstsq(U1, y, rcond=None)
        y = y - U1 @ coef

    iu = np.triu_indices(p)
    quad = xs[:, iu[0]] * xs[:, iu[1]]
    F = np.column_stack([np.ones(n), xs, quad])
    targets = y[:, None] * data.z
    G = F.T @ F
    G += 1e-6 * max(float(np.mean(np.diag(G))), 1.0) * np.eye(G.shape[0])
    try:
        coefs = np.linalg.solve(G, F.T @ targets)  # (m, q)
    except np.linalg.LinAlgError:
        return []
    lins, quads = [], []
    for k in range(data.q):
        a = coefs[1:1 + p, k]
        c = coefs[1 + p:, k]
        B = np.zeros((p, p))
        B[iu] = c
        B = 0.5 * (B + B.T)
        lins.append(a)
        quads.append(B)

    raw = []
    M = sum(np.outer(a, a) + B @ B for a, B in zip(lins, quads))
    lead = np.linalg.eigh(M)[1][:, -1]
    raw.append(lead)
    # alternating rank-one refinement: beta <- top eig of
    # sum_k (a_k a_k' + (B_k beta)(B_k beta)')
    beta = lead.copy()
    for _ in range(5):
        Mb = sum(np.outer(a, a) + np.outer(B @ beta, B @ beta)
                 for a, B in zip(lins, quads))
        beta = np.linalg.eigh(Mb)[1][:, -1]
    raw.append(beta)
    strength = [np.linalg.norm(B, 2) for B in quads]
    for k in np.argsort(strength)[::-1][:3]:
        raw.append(np.linalg.eigh(quads[k])[1][:, -1])

    out = []
    for v in raw:
        v = v / sd
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            out.append(_shrink_into_ball(phi_from_beta(v / norm)))
    return out


def _linearized_direction_rounds(data: Dataset, config: FitConfig,
                                 phi: np.ndarray, rounds: int = 8) -> np.ndarray:
    """Alternate an exact alpha solve with a global linearized re-solve
    of the index direction on a coarse basis (no interior knots).

    Expanding each fitted curve to first order around the current index
    turns the direction into an ordinary least-squares unknown; solving
    that jointly moves all components at once."""
    for _ in range(rounds):
        beta = beta_from_phi(phi)
        kv = effective_knots(data.x @ beta, 0, config.degree)
        H = gram_matrix(kv)
        theta, gamma, resid, _ = _solve_alpha_active(
            data, kv, beta, np.ones(data.d, dtype=bool),
            np.ones(data.q, dtype=bool), np.zeros(data.d),
            np.zeros(data.q), H, config.ridge)
        u_idx = data.x @ beta
        uc = np.clip(u_idx, kv.a, kv.b)
        Bd = basis_deriv_matrix(kv, uc)
        s = ((Bd @ gamma.T) * data.z).sum(axis=1)
        s[(u_idx < kv.a) | (u_idx > kv.b)] = 0.0
        t = resid + s * uc
        A = s[:, None] * data.x
        G = A.T @ A + 1e-10 * np.eye(data.p)
        try:
            b = np.linalg.solve(G, A.T @ t)
        except np.linalg.LinAlgError:
            break
        norm = np.linalg.norm(b)
        if norm < 1e-12:
            break
        phi_new = _shrink_into_ball(phi_from_beta(sign_normalize(b / norm)))
        if np.max(np.abs(phi_new - phi)) < 1e-10:
            phi = phi_new
            break
        phi = phi_new
    return phi


def _one_pass_rss(data, config, K, phi):
    beta = beta_from_phi(phi)
    kv = effective_knots(data.x @ beta, K, config.degree)
    W, _ = design_matrix(kv, beta, data.x, data.z)
    Wt = np.column_stack([data.u, W])
    alpha = _chol_solve(Wt.T @ Wt, Wt.T @ data.y, config.ridge)
    r = data.y - Wt @ alpha
    return float(r @ r)


def _split_alpha(alpha, d, q, L):
    theta = alpha[:d]
    gamma = alpha[d:].reshape(q, L)
    return theta, gamma


def _lqa_weights(phi, theta, gamma, H, spec: PenaltySpec,
                 phi_act, theta_act, gamma_act):
    """Per-coefficient ridge weights over the active sets only."""
    lam_phi = spec.phi_lambdas(phi.size)
    lam_theta = spec.theta_lambdas(theta.size)
    lam_gamma = spec.gamma_lambdas(gamma.shape[0])
    w_phi = np.zeros(phi.size)
    for l in np.nonzero(phi_act)[0]:
        if lam_phi[l] > 0.0:
            w_phi[l] = lqa_weight(spec.family, lam_phi[l], spec.a, abs(phi[l]))
    w_theta = np.zeros(theta.size)
    for h in np.nonzero(theta_act)[0]:
        if lam_theta[h] > 0.0:
            w_theta[h] = lqa_weight(spec.family, lam_theta[h], spec.a, abs(theta[h]))
    w_gamma = np.zeros(gamma.shape[0])
    for k in np.nonzero(gamma_act)[0]:
        if lam_gamma[k] > 0.0:
            w_gamma[k] = lqa_weight(spec.family, lam_gamma[k], spec.a,
                                    h_norm(gamma[k], H))
    return w_phi, w_theta, w_gamma


def _solve_alpha_active(data, kv, beta, theta_act, gamma_act,
                        w_theta, w_gamma, H, ridge, design=None):
    """Closed-form LQA-penalized least squares on the active columns.

    Returns full-length theta and gamma (inactive entries exactly 0),
    the fitted residual vector and the clamp count of the design build.
    ``design`` may carry a prebuilt (W, clamp_count) pair for the same
    (kv, beta).
    """
    n, d, q, L = data.n, data.d, data.q, kv.dim
    W, clamped = design if design is not None else design_matrix(
        kv, beta, data.x, data.z)
    th_idx = np.nonzero(theta_act)[0]
    g_idx = np.nonzero(gamma_act)[0]
    gcols = (g_idx[:, None] * L + np.arange(L)[None, :]).ravel()
    Wt = np.column_stack([data.u[:, th_idx], W[:, gcols]])

    theta = np.zeros(d)
    gamma = np.zeros((q, L))
    if Wt.shape[1] == 0:
        return theta, gamma, data.y.copy(), clamped

    G = Wt.T @ Wt
    nt = th_idx.size
    if nt:
        G[:nt, :nt] += 0.5 * n * np.diag(w_theta[th_idx])
    for j, k in enumerate(g_idx):
        sl = slice(nt + j * L, nt + (j + 1) * L)
        G[sl, sl] += 0.5 * n * w_gamma[k] * H
    alpha_act = _chol_solve(G, Wt.T @ data.y, ridge)

    theta[th_idx] = alpha_act[:nt]
    gamma[g_idx] = alpha_act[nt:].reshape(g_idx.size, L)
    resid = data.y - Wt @ alpha_act
    return theta, gamma, resid, clamped


def _phi_newton(data, kv, theta, gamma, phi, phi_act, w_phi, config,
                resid0=None):
    """Damped Newton (Gauss-Newton Hessian) descent on

        Q(phi) = sum_i (y_i - theta'u_i - g(beta'x_i)'z_i)^2
                 + (n/2) phi' diag(w_phi) phi

    with the knot vector frozen.  Step halving enforces both a strict
    objective decrease and ||phi|| <= 1 - margin; a step that fails all
    halvings leaves phi unchanged (stalled).  ``resid0`` may carry the
    residual vector already computed at the incoming phi.
    """
    n = data.n
    act = np.nonzero(phi_act)[0]
    clamp_total = 0

    base = data.y - (data.u @ theta if theta.size else 0.0)

    def evaluate(phi_full):
        beta = beta_from_phi(phi_full)
        u_idx = data.x @ beta
        clamped = (u_idx < kv.a) | (u_idx > kv.b)
        uc = np.clip(u_idx, kv.a, kv.b)
        B = basis_matrix(kv, uc)
        resid = base - ((B @ gamma.T) * data.z).sum(axis=1)
        rss = float(resid @ resid)
        pen = 0.5 * n * float(phi_full @ (w_phi * phi_full))
        return rss + pen, rss, resid, uc, clamped

    if resid0 is not None:
        u_idx = data.x @ beta_from_phi(phi)
        clamped = (u_idx < kv.a) | (u_idx > kv.b)
        uc = np.clip(u_idx, kv.a, kv.b)
        resid = resid0
        rss = float(resid @ resid)
        obj = rss + 0.5 * n * float(phi @ (w_phi * phi))
    else:
        obj, rss, resid, uc, clamped = evaluate(phi)
    if act.size == 0:
        return phi.copy(), False, obj, rss, 0

    stalled = False
    moved = False
    for _ in range(config.max_inner):
        clamp_total += int(np.count_nonzero(clamped))
        beta = beta_from_phi(phi)
        Bd = basis_deriv_matrix(kv, uc)
        # slope of the fitted surface along the index, zero where clamped
        s = ((Bd @ gamma.T) * data.z).sum(axis=1)
        s[clamped] = 0.0
        V = data.x @ index_jacobian(phi)[:, act]
        J = -s[:, None] * V
        grad = 2.0 * (J.T @ resid) + n * w_phi[act] * phi[act]
        if np.max(np.abs(grad)) <= 1e-10 * (1.0 + abs(obj)):
            break
        Hgn = 2.0 * (J.T @ J) + n * np.diag(w_phi[act])
        Hgn += config.ridge * max(float(np.mean(np.diag(Hgn))), 1.0) * np.eye(act.size)
        try:
            step = np.linalg.solve(Hgn, -grad)
        except np.linalg.LinAlgError:
            stalled = not moved
            break

        t = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = phi.copy()
            cand[act] = phi[act] + t * step
            if np.linalg.norm(cand) <= 1.0 - PHI_MARGIN:
                cobj, crss, cres, cuc, ccl = evaluate(cand)
                if cobj < obj:
                    phi, obj, rss, resid, uc, clamped = cand, cobj, crss, cres, cuc, ccl
                    accepted = True
                    moved = True
                    break
            t *= 0.5
        if not accepted:
            stalled = not moved
            break
        if t * np.max(np.abs(step)) < 1e-10:
            break
    return phi, stalled, obj, rss, clamp_total


def apply_threshold(phi, theta, gamma, H, epsilon):
    """Zero every coefficient whose magnitude (H-norm for gamma blocks)
    falls below the threshold; returns copies."""
    phi = np.where(np.abs(phi) < epsilon, 0.0, phi)
    theta = np.where(np.abs(theta) < epsilon, 0.0, theta)
    gamma = gamma.copy()
    for k in range(gamma.shape[0]):
        if h_norm(gamma[k], H) < epsilon:
            gamma[k] = 0.0
    return phi, theta, gamma


def step_alpha(data: Dataset, kv: KnotVector, phi, alpha0, spec: PenaltySpec,
               ridge: float = 1e-8) -> np.ndarray:
    """One closed-form alpha update given phi and the LQA anchors in
    alpha0 (components already thresholded to exact zeros are inactive
    and stay zero)."""
    d, q, L = data.d, data.q, kv.dim
    theta0, gamma0 = _split_alpha(np.asarray(alpha0, dtype=float), d, q, L)
    theta_act = theta0 != 0.0
    gamma_act = np.any(gamma0 != 0.0, axis=1)
    H = gram_matrix(kv)
    _, w_theta, w_gamma = _lqa_weights(
        np.zeros(data.p - 1), theta0, gamma0, H, spec,
        np.zeros(data.p - 1, dtype=bool), theta_act, gamma_act)
    beta = beta_from_phi(phi)
    theta, gamma, _, _ = _solve_alpha_active(
        data, kv, beta, theta_act, gamma_act, w_theta, w_gamma, H, ridge)
    return np.concatenate([theta, gamma.ravel()])


def step_phi(data: Dataset, kv: KnotVector, alpha, phi0, spec: PenaltySpec,
             config: FitConfig | None = None):
    """One damped-Newton phi update given alpha; returns
    (phi_new, stalled)."""
    config = config or FitConfig()
    d, q, L = data.d, data.q, kv.dim
    theta, gamma = _split_alpha(np.asarray(alpha, dtype=float), d, q, L)
    phi0 = np.asarray(phi0, dtype=float)
    phi_act = phi0 != 0.0
    H = gram_matrix(kv)
    w_phi, _, _ = _lqa_weights(
        phi0, theta, gamma, H, spec, phi_act,
        np.zeros(d, dtype=bool), np.zeros(q, dtype=bool))
    phi, stalled, _, _, _ = _phi_newton(
        data, kv, theta, gamma, phi0, phi_act, w_phi, config)
    return phi, stalled


def _max_change(phi, theta, gamma, prev):
    if prev is None:
        return np.inf
    p0, t0, g0 = prev
    return max(
        float(np.max(np.abs(phi - p0))) if phi.size else 0.0,
        float(np.max(np.abs(theta - t0))) if theta.size else 0.0,
        float(np.max(np.abs(gamma - g0))),
    )


def _break_two_cycle(phi, prev, prev2):
    """The alternation can fall into a small two-cycle (the knot rebuild
    makes the map slightly non-contractive near its fixed point).  When
    the iterate returns close to the one two rounds ago, restart from
    the midpoint of the cycle."""
    if prev is None or prev2 is None:
        return phi
    step = np.max(np.abs(phi - prev[0]))
    back = np.max(np.abs(phi - prev2[0]))
    if step > 0.0 and back < 0.25 * step:
        mid = 0.5 * (phi + prev[0])
        mid[phi == 0.0] = 0.0
        return _shrink_into_ball(mid)
    return phi


def _accelerate_phi(phi, prev, prev2):
    """Aitken-style extrapolation of the phi sequence.

    The alternation converges linearly along a single slow mode once the
    active set is stable; when two successive increments point the same
    way with a steady contraction ratio, jump ahead along that mode.
    Returns the (possibly) extrapolated phi."""
    if prev is None or prev2 is None:
        return phi
    d1 = phi - prev[0]
    d0 = prev[0] - prev2[0]
    n1 = np.linalg.norm(d1)
    n0 = np.linalg.norm(d0)
    if n1 == 0.0 or n0 == 0.0:
        return phi
    ratio = n1 / n0
    cosine = float(d1 @ d0) / (n1 * n0)
    if cosine > 0.9 and 0.3 < ratio < 0.97:
        gain = min(ratio / (1.0 - ratio), 25.0)
        out = phi + gain * d1
        out[phi == 0.0] = 0.0
        return _shrink_into_ball(out)
    return phi


def _check_rows(data: Dataset, L: int):
    if data.n <= data.d + data.q * L:
        raise InsufficientDataError(
            f"need more than d + q*L = {data.d + data.q * L} rows, have {data.n}")


def _finalize(data, config, spec, phi, theta, gamma, kv, H, converged,
              iterations, rss, clamp_total, diagnostics, anchor_inv=None):
    n = data.n
    lam_phi = spec.phi_lambdas(phi.size)
    lam_theta = spec.theta_lambdas(theta.size)
    lam_gamma = spec.gamma_lambdas(gamma.shape[0])
    pen = 0.0
    for l in range(phi.size):
        pen += penalty_value(spec.family, lam_phi[l], spec.a, abs(phi[l]))
    for h in range(theta.size):
        pen += penalty_value(spec.family, lam_theta[h], spec.a, abs(theta[h]))
    for k in range(gamma.shape[0]):
        pen += penalty_value(spec.family, lam_gamma[k], spec.a, h_norm(gamma[k], H))
    grid = np.linspace(kv.a, kv.b, 101)
    g_hat = basis_matrix(kv, grid) @ gamma.T
    beta = beta_from_phi(phi)
    if anchor_inv is not None:
        beta = beta[anchor_inv]
    return FitResult(
        beta=beta,
        phi=phi,
        theta=theta,
        gamma=gamma,
        knots=kv,
        converged=converged,
        iterations=iterations,
        rss=rss,
        objective=rss + n * pen,
        n_clamped=clamp_total,
        lambdas=spec,
        grid=grid,
        g_hat=g_hat,
        diagnostics=diagnostics,
    )


def fit_unpenalized(data: Dataset, config: FitConfig,
                    phi_init=None) -> FitResult:
    """Alternating least squares / Gauss-Newton minimization of the
    unpenalized objective.  No thresholding is applied.

    Without an explicit ``phi_init`` the fit multi-starts: short
    alternations run from each ranked preliminary direction and the one
    with the smallest fitted residual continues to convergence (the
    profile surface has genuinely distinct local basins)."""
    K = config.knot_count(data.n)
    L = K + config.degree + 1
    _check_rows(data, L)
    data, anchor_inv = _apply_anchor(data, config)
    inner_cfg = replace(config, anchor=None)

    if phi_init is None:
        starters = initial_phi_candidates(data, config)
        if len(starters) > 1:
            trial_cfg = replace(inner_cfg, max_iter=min(12, config.max_iter))
            best = None
            for phi0 in starters:
                trial = fit_unpenalized(data, trial_cfg, phi_init=phi0)
                if best is None or trial.rss < best.rss:
                    best = trial
            phi_init = best.phi
        else:
            phi_init = starters[0]

    phi = np.asarray(phi_init, dtype=float)
    if phi.size != data.p - 1:
        raise ValueError("phi_init has the wrong length")
    phi = _shrink_into_ball(phi.copy())

    no_pen = PenaltySpec(family=config.penalty.family, lam=0.0, a=config.penalty.a)
    theta = np.zeros(data.d)
    gamma = np.zeros((data.q, L))
    all_theta = np.ones(data.d, dtype=bool)
    all_gamma = np.ones(data.q, dtype=bool)
    zeros_t = np.zeros(data.d)
    zeros_g = np.zeros(data.q)
    w_phi = np.zeros(data.p - 1)

    prev = None
    prev2 = None
    cooldown = 0
    converged = False
    clamp_total = 0
    iterations = 0
    rss = np.inf
    kv = None
    H = None
    freeze = False
    for iterations in range(1, config.max_iter + 1):
        beta = beta_from_phi(phi)
        if not freeze or kv is None:
            kv = effective_knots(data.x @ beta, K, config.degree)
            H = gram_matrix(kv)
        theta, gamma, resid, cl = _solve_alpha_active(
            data, kv, beta, all_theta, all_gamma, zeros_t, zeros_g, H,
            config.ridge)
        clamp_total += cl
        phi, _, _, rss, cl = _phi_newton(
            data, kv, theta, gamma, phi, np.ones(phi.size, dtype=bool),
            w_phi, config, resid0=resid)
        clamp_total += cl
        phi = _break_two_cycle(phi, prev, prev2)
        if cooldown == 0:
            phi_acc = _accelerate_phi(phi, prev, prev2)
            if phi_acc is not phi:
                cooldown = 2
            phi = phi_acc
        else:
            cooldown -= 1
        delta = _max_change(phi, theta, gamma, prev)
        prev2 = prev
        prev = (phi.copy(), theta.copy(), gamma.copy())
        if delta < config.tol:
            converged = True
            break
        # near the fixed point, rebuilding knots every round makes the
        # outer map slightly non-contractive; freeze the basis and let
        # the alternation finish on one fixed objective
        freeze = freeze or delta < 100.0 * config.tol \
            or iterations >= config.max_iter - 15

    return _finalize(data, config, no_pen, phi, theta, gamma, kv, H,
                     converged, iterations, rss, clamp_total, {},
                     anchor_inv=anchor_inv)


def fit_penalized(data: Dataset, config: FitConfig, phi_init=None,
                  init: FitResult | None = None) -> FitResult:
    """Full stepwise fit: unpenalized initialization, then alternating
    penalized alpha / phi updates with hard thresholding until the
    joint max-abs parameter change drops below the tolerance."""
    K = config.knot_count(data.n)
    L = K + config.degree + 1
    _check_rows(data, L)
    spec = config.penalty

    if init is None:
        init = fit_unpenalized(data, config, phi_init)
    data, anchor_inv = _apply_anchor(data, config)
    phi = init.phi.copy()
    theta = init.theta.copy()
    gamma = init.gamma.copy()
    kv = init.knots
    H = gram_matrix(kv)
    phi, theta, gamma = apply_threshold(phi, theta, gamma, H, config.epsilon)

    prev = None
    prev2 = None
    cooldown = 0
    converged = False
    clamp_total = init.n_clamped
    surrogate = []
    iterations = 0
    rss = init.rss
    freeze = False
    for iterations in range(1, config.max_iter + 1):
        beta = beta_from_phi(phi)
        if not freeze:
            kv = effective_knots(data.x @ beta, K, config.degree)
            H = gram_matrix(kv)
        phi_act = phi != 0.0
        theta_act = theta != 0.0
        gamma_act = np.any(gamma != 0.0, axis=1)
        w_phi, w_theta, w_gamma = _lqa_weights(
            phi, theta, gamma, H, spec, phi_act, theta_act, gamma_act)

        # surrogate value at the round anchors, for the monotonicity audit
        W, cl0 = design_matrix(kv, beta, data.x, data.z)
        clamp_total += cl0
        r0 = data.y - W @ gamma.ravel() - (data.u @ theta if data.d else 0.0)
        pen_alpha0 = 0.5 * data.n * (
            float(theta @ (w_theta * theta))
            + sum(w_gamma[k] * h_norm(gamma[k], H) ** 2 for k in range(data.q)))
        pen_phi0 = 0.5 * data.n * float(phi @ (w_phi * phi))
        s_start = float(r0 @ r0) + pen_alpha0 + pen_phi0

        theta, gamma, resid, cl = _solve_alpha_active(
            data, kv, beta, theta_act, gamma_act, w_theta, w_gamma, H,
            config.ridge, design=(W, 0))
        clamp_total += cl
        pen_alpha = 0.5 * data.n * (
            float(theta @ (w_theta * theta))
            + sum(w_gamma[k] * h_norm(gamma[k], H) ** 2 for k in range(data.q)))
        s_alpha = float(resid @ resid) + pen_alpha + pen_phi0

        phi, _, obj_phi, rss, cl = _phi_newton(
            data, kv, theta, gamma, phi, phi_act, w_phi, config,
            resid0=resid)
        clamp_total += cl
        s_phi = obj_phi + pen_alpha
        surrogate.append((s_start, s_alpha, s_phi))

        phi, theta, gamma = apply_threshold(phi, theta, gamma, H, config.epsilon)
        phi = _break_two_cycle(phi, prev, prev2)
        if cooldown == 0:
            phi_acc = _accelerate_phi(phi, prev, prev2)
            if phi_acc is not phi:
                cooldown = 2
            phi = phi_acc
        else:
            cooldown -= 1
        delta = _max_change(phi, theta, gamma, prev)
        prev2 = prev
        prev = (phi.copy(), theta.copy(), gamma.copy())
        if delta < config.tol:
            converged = True
            break
        freeze = freeze or delta < 100.0 * config.tol \
            or iterations >= config.max_iter - 15

    # residual at the final thresholded estimates
    beta = beta_from_phi(phi)
    W, _ = design_matrix(kv, beta, data.x, data.z)
    resid = data.y - W @ gamma.ravel() - (data.u @ theta if data.d else 0.0)
    rss = float(resid @ resid)

    return _finalize(data, config, spec, phi, theta, gamma, kv, H,
                     converged, iterations, rss, clamp_total,
                     {"surrogate": surrogate}, anchor_inv=anchor_inv)
