"""Model data structures and the sphere-to-ball reparameterization.

The regression is Y = theta'U + g(beta'X)'Z + error with ||beta|| = 1
and the first nonzero entry of beta positive.  Internally beta is
stored through phi = (beta_2, ..., beta_p) with ||phi|| < 1 and
beta_1 = sqrt(1 - ||phi||^2), which turns the sphere constraint into an
open ball where the objective is smooth.
"""

from __future__ import annotations

import numpy as np

from .splines import KnotVector, basis_matrix

# magnitude below which a beta entry is treated as zero when locating
# the leading nonzero component for the sign convention
SIGN_TOL = 1e-10


class Dataset:
    """Response plus the three covariate blocks.

    y : (n,) response
    u : (n, d) linear covariates (d may be 0)
    x : (n, p) index covariates, p >= 2
    z : (n, q) varying-coefficient covariates, q >= 1 (a leading
        constant-one column is the caller's choice; none is injected)
    """

    def __init__(self, y, u, x, z):
        y = np.asarray(y, dtype=float).ravel()
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float) if u is not None else np.empty((y.size, 0))
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if x.ndim != 2 or z.ndim != 2 or u.ndim != 2:
            raise ValueError("covariate blocks must be two-dimensional")
        n = y.size
        if n < 1 or x.shape[0] != n or z.shape[0] != n or u.shape[0] != n:
            raise ValueError("covariate blocks must share the response row count")
        if x.shape[1] < 2:
            raise ValueError("index block needs at least two covariates")
        if z.shape[1] < 1:
            raise ValueError("varying-coefficient block needs at least one covariate")
        for name, block in (("y", y), ("u", u), ("x", x), ("z", z)):
            if not np.all(np.isfinite(block)):
                raise ValueError(f"non-finite entries in {name}")
        self.y = y
        self.u = u
        self.x = x
        self.z = z

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.z.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.u[rows], self.x[rows], self.z[rows])


def beta_from_phi(phi) -> np.ndarray:
    """Map phi in the open unit ball to the unit vector
    (sqrt(1 - ||phi||^2), phi)."""
    phi = np.asarray(phi, dtype=float).ravel()
    ss = float(phi @ phi)
    if ss >= 1.0:
        raise ValueError("index parameter must satisfy ||phi|| < 1")
    return np.concatenate([[np.sqrt(1.0 - ss)], phi])


def phi_from_beta(beta) -> np.ndarray:
    """Inverse map: normalize beta, fix the sign convention, drop the
    first entry.  Round-trips with ``beta_from_phi`` when beta_1 > 0."""
    beta = np.asarray(beta, dtype=float).ravel()
    norm = np.linalg.norm(beta)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    beta = beta / norm
    nz = np.nonzero(np.abs(beta) > SIGN_TOL)[0]
    if nz.size and beta[nz[0]] < 0.0:
        beta = -beta
    return beta[1:]


def sign_normalize(beta) -> np.ndarray:
    """Flip beta so its first nonzero entry is positive (no rescaling)."""
    beta = np.asarray(beta, dtype=float).ravel()
    nz = np.nonzero(np.abs(beta) > SIGN_TOL)[0]
    if nz.size and beta[nz[0]] < 0.0:
        return -beta
    return beta.copy()


def index_jacobian(phi) -> np.ndarray:
    """Jacobian of beta(phi): first row -(1 - ||phi||^2)^(-1/2) phi',
    identity below.  Shape (p, p - 1)."""
    phi = np.asarray(phi, dtype=float).ravel()
    ss = float(phi @ phi)
    if ss >= 1.0:
        raise ValueError("index parameter must satisfy ||phi|| < 1")
    top = -phi / np.sqrt(1.0 - ss)
    return np.vstack([top, np.eye(phi.size)])


def design_matrix(kv: KnotVector, beta, x, z):
    """Rows W_i = vec over k of Z_ik * B(beta'X_i), shape (n, q*L).

    Index values falling outside the knot boundary are clamped; the
    count of clamped rows is returned alongside for diagnostics.
    """
    u_idx = np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float)
    n_clamped = int(np.count_nonzero((u_idx < kv.a) | (u_idx > kv.b)))
    B = basis_matrix(kv, u_idx)  # (n, L)
    z = np.asarray(z, dtype=float)
    W = (z[:, :, None] * B[:, None, :]).reshape(z.shape[0], -1)
    return W, n_clamped


def design_row(kv: KnotVector, beta, x_i, z_i) -> np.ndarray:
    """Single design row of length q*L; block k is Z_ik * B(beta'X_i)."""
    W, _ = design_matrix(kv, beta, np.atleast_2d(x_i), np.atleast_2d(z_i))
    return W[0]


def augmented_row(u_i, w_i) -> np.ndarray:
    """Concatenate the linear covariates in front of the spline row, so
    that the stacked coefficient vector is (theta, gamma)."""
    return np.concatenate([np.asarray(u_i, dtype=float).ravel(),
                           np.asarray(w_i, dtype=float).ravel()])


def h_norm(gamma_k, H: np.ndarray) -> float:
    """Function-space norm sqrt(gamma' H gamma) of a spline coefficient
    block; equals the L2 norm of u -> B(u)'gamma."""
    gamma_k = np.asarray(gamma_k, dtype=float).ravel()
    if gamma_k.size != H.shape[0]:
        raise ValueError("coefficient block does not match the Gram matrix")
    return float(np.sqrt(max(gamma_k @ H @ gamma_k, 0.0)))


def model_mean(kv: KnotVector, beta, theta, gamma, u, x, z) -> np.ndarray:
    """Fitted mean theta'U_i + sum_k g_k(beta'X_i) Z_ik."""
    gamma = np.asarray(gamma, dtype=float)
    W, _ = design_matrix(kv, beta, x, z)
    mean = W @ gamma.ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size:
        mean = mean + np.asarray(u, dtype=float) @ theta
    return mean
