"""SCAD and LASSO penalty calculus.

Everything needed by the local-quadratic-approximation solver: penalty
values, first derivatives, the ridge weights dp(|w0|) / |w0|, and the
diagonal / block-diagonal weight matrices used in the quadratic
surrogate objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCAD = "scad"
LASSO = "lasso"

# Fan-Li choice; any a > 2 is admissible.
DEFAULT_SCAD_A = 3.7


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family plus tuning parameters.

    ``lam`` is the base tuning parameter.  The optional per-coefficient
    arrays (one value per index parameter, linear coefficient and
    coefficient-function block) override the base value; they are how
    the adaptive lambda / |unpenalized estimate| scaling enters the
    fit.  ``lam == 0`` (or a zero entry) disables the penalty for that
    coefficient.
    """

    family: str = SCAD
    lam: float = 0.0
    a: float = DEFAULT_SCAD_A
    lam_phi: np.ndarray | None = None
    lam_theta: np.ndarray | None = None
    lam_gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in (SCAD, LASSO):
            raise ValueError(f"unknown penalty family {self.family!r}")
        if self.family == SCAD and not self.a > 2.0:
            raise ValueError("SCAD shape parameter must satisfy a > 2")
        if self.lam < 0.0:
            raise ValueError("tuning parameter must be non-negative")
        for name in ("lam_phi", "lam_theta", "lam_gamma"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if np.any(arr < 0.0):
                    raise ValueError(f"{name} entries must be non-negative")
                object.__setattr__(self, name, arr)

    def phi_lambdas(self, size: int) -> np.ndarray:
        return self._expand(self.lam_phi, size, "lam_phi")

    def theta_lambdas(self, size: int) -> np.ndarray:
        return self._expand(self.lam_theta, size, "lam_theta")

    def gamma_lambdas(self, size: int) -> np.ndarray:
        return self._expand(self.lam_gamma, size, "lam_gamma")

    def _expand(self, arr, size, name):
        if arr is None:
            return np.full(size, self.lam)
        if arr.size != size:
            raise ValueError(f"{name} has {arr.size} entries, expected {size}")
        return arr


def scad_deriv(lam: float, a: float, w):
    """First derivative of the SCAD penalty at w >= 0.

    Equals lam on [0, lam], decays linearly to zero on (lam, a*lam],
    and is zero beyond.  lam == 0 disables the penalty.
    """
    if not a > 2.0:
        raise ValueError("SCAD shape parameter must satisfy a > 2")
    if lam < 0.0:
        raise ValueError("tuning parameter must be non-negative")
    w = np.asarray(w, dtype=float)
    if lam == 0.0:
        out = np.zeros_like(w)
        return out if out.ndim else float(out)
    out = np.where(w <= lam, lam, np.maximum(a * lam - w, 0.0) / (a - 1.0))
    return out if out.ndim else float(out)


def scad_value(lam: float, a: float, w):
    """SCAD penalty value, the integral of ``scad_deriv`` from 0.

    Piecewise closed form: lam*w on [0, lam], a quadratic on
    (lam, a*lam], then the constant (a + 1) * lam**2 / 2.
    """
    if not a > 2.0:
        raise ValueError("SCAD shape parameter must satisfy a > 2")
    if lam < 0.0:
        raise ValueError("tuning parameter must be non-negative")
    w = np.asarray(w, dtype=float)
    if lam == 0.0:
        out = np.zeros_like(w)
        return out if out.ndim else float(out)
    mid = -(w**2 - 2.0 * a * lam * w + lam**2) / (2.0 * (a - 1.0))
    out = np.where(w <= lam, lam * w,
                   np.where(w <= a * lam, mid, (a + 1.0) * lam**2 / 2.0))
    return out if out.ndim else float(out)


def penalty_deriv(family: str, lam: float, a: float, w):
    if family == SCAD:
        return scad_deriv(lam, a, w)
    w = np.asarray(w, dtype=float)
    out = np.full_like(w, lam)
    return out if out.ndim else float(out)


def penalty_value(family: str, lam: float, a: float, w):
    if family == SCAD:
        return scad_value(lam, a, w)
    w = np.asarray(w, dtype=float)
    out = lam * w
    return out if out.ndim else float(out)


def lqa_weight(family: str, lam: float, a: float, w0: float) -> float:
    """Ridge weight of the local quadratic approximation at w0 > 0.

    The surrogate replaces p(|w|) near w0 by
    p(|w0|) + (1/2) * (dp(|w0|)/|w0|) * (w^2 - w0^2); this returns
    dp(|w0|) / |w0|.  Coefficients at or below the zeroing threshold
    must have been removed by the caller.
    """
    if w0 <= 0.0:
        raise ValueError("LQA weight requires a strictly positive anchor")
    if lam == 0.0:
        return 0.0
    return float(penalty_deriv(family, lam, a, w0)) / w0


def build_weight_matrices(phi, theta, gamma, spec: PenaltySpec, H: np.ndarray):
    """Weight matrices of the quadratic surrogate objective.

    Returns ``(sigma_phi, sigma_alpha)``: ``sigma_phi`` is diagonal over
    the index parameters; ``sigma_alpha`` is block diagonal with a
    diagonal head over the linear coefficients followed by one
    weight * H block per coefficient-function group.  All anchor values
    are expected to be nonzero (already thresholded).
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[1] != H.shape[0] or H.shape[0] != H.shape[1]:
        raise ValueError("coefficient-function blocks do not match the Gram matrix")

    lam_phi = spec.phi_lambdas(phi.size)
    lam_theta = spec.theta_lambdas(theta.size)
    lam_gamma = spec.gamma_lambdas(gamma.shape[0])

    w_phi = np.array([
        lqa_weight(spec.family, lam_phi[l], spec.a, abs(phi[l]))
        if lam_phi[l] > 0.0 else 0.0
        for l in range(phi.size)
    ])
    w_theta = np.array([
        lqa_weight(spec.family, lam_theta[h], spec.a, abs(theta[h]))
        if lam_theta[h] > 0.0 else 0.0
        for h in range(theta.size)
    ])
    norms = np.sqrt(np.maximum(np.einsum("kl,lm,km->k", gamma, H, gamma), 0.0))
    w_gamma = np.array([
        lqa_weight(spec.family, lam_gamma[k], spec.a, norms[k])
        if lam_gamma[k] > 0.0 else 0.0
        for k in range(gamma.shape[0])
    ])

    L = H.shape[0]
    q = gamma.shape[0]
    d = theta.size
    sigma_alpha = np.zeros((d + q * L, d + q * L))
    sigma_alpha[:d, :d] = np.diag(w_theta)
    for k in range(q):
        sl = slice(d + k * L, d + (k + 1) * L)
        sigma_alpha[sl, sl] = w_gamma[k] * H
    return np.diag(w_phi), sigma_alpha
