"""Clamped B-spline bases: construction, evaluation, derivatives, Gram matrix.

A basis of degree M with K interior knots has dimension L = K + M + 1.
Knot sequences are clamped: the boundary knots are repeated M + 1 times,
so the basis interpolates at both ends and sums to one everywhere on
[a, b].  Evaluation outside [a, b] is clamped to the boundary; callers
that care about out-of-range inputs count them themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Quasi-uniformity bound for generated knot sequences: the ratio of the
# largest to the smallest span must stay below this.
QUASI_UNIFORM_BOUND = 10.0


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot sequence of degree ``degree`` on ``[a, b]``.

    ``interior`` holds the K interior knots (non-decreasing, strictly
    inside the boundary).  ``knots`` is the full clamped sequence with
    (degree+1)-fold boundary knots.
    """

    degree: int
    a: float
    b: float
    interior: np.ndarray
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if not self.a < self.b:
            raise ValueError("empty boundary interval")
        interior = np.asarray(self.interior, dtype=float)
        if interior.size:
            if np.any(np.diff(interior) < 0):
                raise ValueError("interior knots must be non-decreasing")
            if interior[0] <= self.a or interior[-1] >= self.b:
                raise ValueError("interior knots must lie strictly inside (a, b)")
        object.__setattr__(self, "interior", interior)
        m1 = self.degree + 1
        full = np.concatenate([np.full(m1, self.a), interior, np.full(m1, self.b)])
        object.__setattr__(self, "knots", full)

    @property
    def num_interior(self) -> int:
        return self.interior.size

    @property
    def dim(self) -> int:
        """Number of basis functions, L = K + M + 1."""
        return self.num_interior + self.degree + 1

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct span boundaries a, c_1, ..., c_K, b."""
        return np.concatenate([[self.a], self.interior, [self.b]])

    def spacing_ratio(self) -> float:
        """max span / min span over the breakpoint partition."""
        h = np.diff(self.breakpoints)
        return float(h.max() / h.min())


def make_knots(index_values, n_interior: int, degree: int,
               pad: float = 1e-6) -> KnotVector:
    """Equally spaced interior knots over the observed index range.

    The boundary is the data range padded by ``pad * (max - min)`` on
    each side so extreme observations evaluate strictly inside.
    """
    values = np.asarray(index_values, dtype=float)
    if values.size == 0:
        raise ValueError("degenerate index range: no index values")
    vmin = float(values.min())
    vmax = float(values.max())
    if not np.isfinite(vmin) or not np.isfinite(vmax) or vmin >= vmax:
        raise ValueError("degenerate index range")
    if n_interior < 0:
        raise ValueError("interior knot count must be >= 0")
    extent = vmax - vmin
    a = vmin - pad * extent
    b = vmax + pad * extent
    interior = np.linspace(a, b, n_interior + 2)[1:-1]
    kv = KnotVector(degree=degree, a=a, b=b, interior=interior)
    if n_interior >= 1 and kv.spacing_ratio() >= QUASI_UNIFORM_BOUND:
        raise ValueError("knot sequence violates quasi-uniformity bound")
    return kv


def _find_spans(knots: np.ndarray, degree: int, nbasis: int,
                u: np.ndarray) -> np.ndarray:
    """Span index i with knots[i] <= u < knots[i+1], clipped to the
    valid range [degree, nbasis - 1] for clamped sequences."""
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, nbasis - 1)


def _basis_nonzero(knots: np.ndarray, degree: int, u: np.ndarray,
                   span: np.ndarray, keep_previous: bool = False):
    """Cox-de Boor triangle: values of the degree+1 basis functions that
    are non-zero at each u, shape (len(u), degree + 1).

    With ``keep_previous`` the degree-1 row of the triangle (the
    non-zero degree-(degree-1) values) is returned as well, which is
    what the derivative recurrence needs."""
    npts = u.size
    vals = np.zeros((npts, degree + 1))
    vals[:, 0] = 1.0
    left = np.zeros((npts, degree + 1))
    right = np.zeros((npts, degree + 1))
    prev = None
    for j in range(1, degree + 1):
        if keep_previous and j == degree:
            prev = vals[:, :degree].copy()
        left[:, j] = u - knots[span + 1 - j]
        right[:, j] = knots[span + j] - u
        saved = np.zeros(npts)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            # repeated knots give denom == 0 together with a zero value
            temp = np.zeros(npts)
            np.divide(vals[:, r], denom, out=temp, where=denom > 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    if keep_previous:
        if prev is None:  # degree == 0
            prev = np.zeros((npts, 0))
        return vals, prev
    return vals


def _basis_matrix_any_degree(kv: KnotVector, degree_eval: int,
                             u: np.ndarray) -> np.ndarray:
    """Full basis matrix of the given evaluation degree on kv's knot
    sequence (used with degree_eval = M and M - 1)."""
    knots = kv.knots
    nbasis = knots.size - degree_eval - 1
    uc = np.clip(u, kv.a, kv.b)
    span = _find_spans(knots, degree_eval, nbasis, uc)
    nz = _basis_nonzero(knots, degree_eval, uc, span)
    out = np.zeros((u.size, nbasis))
    cols = span[:, None] - degree_eval + np.arange(degree_eval + 1)[None, :]
    out[np.arange(u.size)[:, None], cols] = nz
    return out


def basis_matrix(kv: KnotVector, u) -> np.ndarray:
    """Evaluate all L basis functions at each point, shape (len(u), L).

    Points outside [a, b] are clamped to the boundary.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return _basis_matrix_any_degree(kv, kv.degree, u)


def eval_basis(kv: KnotVector, u: float) -> np.ndarray:
    """Basis vector B(u) of length L."""
    return basis_matrix(kv, [u])[0]


def basis_and_deriv_matrix(kv: KnotVector, u) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and first derivatives in a single pass,
    each of shape (len(u), L).  Points outside [a, b] are clamped."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    M = kv.degree
    L = kv.dim
    knots = kv.knots
    uc = np.clip(u, kv.a, kv.b)
    span = _find_spans(knots, M, L, uc)
    nz, nz_lower = _basis_nonzero(knots, M, uc, span, keep_previous=True)

    npts = u.size
    rows = np.arange(npts)[:, None]
    cols = span[:, None] - M + np.arange(M + 1)[None, :]
    out = np.zeros((npts, L))
    out[rows, cols] = nz

    dout = np.zeros((npts, L))
    if M > 0:
        # nz_lower[:, r] = N_{span-M+1+r, M-1}; derivative of column
        # j = span - M + c combines lower neighbours c-1 and c
        dnz = np.zeros((npts, M + 1))
        base = span - M  # first degree-M column index per point
        for c in range(M + 1):
            j = base + c
            if c >= 1:
                d1 = knots[j + M] - knots[j]
                term = np.zeros(npts)
                np.divide(nz_lower[:, c - 1], d1, out=term, where=d1 > 0.0)
                dnz[:, c] += term
            if c <= M - 1:
                d2 = knots[j + M + 1] - knots[j + 1]
                term = np.zeros(npts)
                np.divide(nz_lower[:, c], d2, out=term, where=d2 > 0.0)
                dnz[:, c] -= term
        dout[rows, cols] = M * dnz
    return out, dout


def basis_deriv_matrix(kv: KnotVector, u) -> np.ndarray:
    """First-derivative values of all L basis functions, shape (len(u), L)."""
    return basis_and_deriv_matrix(kv, u)[1]


def eval_basis_deriv(kv: KnotVector, u: float) -> np.ndarray:
    """Derivative vector dB/du of length L."""
    return basis_deriv_matrix(kv, [u])[0]


_GRAM_CACHE: dict = {}


def gram_matrix(kv: KnotVector) -> np.ndarray:
    """H = integral of B(u) B(u)^T over [a, b], computed exactly.

    Per-span Gauss-Legendre with M + 1 nodes integrates the degree-2M
    piecewise-polynomial entries without quadrature error.  Basis values
    are invariant under affine maps of the knot sequence and the
    integral scales with the interval length, so results are cached by
    the normalized knot layout.
    """
    width = kv.b - kv.a
    key = (kv.degree,
           tuple(np.round((kv.interior - kv.a) / width, 12).tolist()))
    cached = _GRAM_CACHE.get(key)
    if cached is None:
        # compute on the canonical unit-interval layout so the result is
        # a deterministic function of the key alone (bit-identical no
        # matter which knot vector populated the cache first)
        unit_interior = np.clip(np.array(key[1]), 1e-12, 1.0 - 1e-12)
        unit = KnotVector(degree=kv.degree, a=0.0, b=1.0,
                          interior=unit_interior)
        nodes, weights = np.polynomial.legendre.leggauss(kv.degree + 1)
        bps = unit.breakpoints
        lo, hi = bps[:-1], bps[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        wts = (half[:, None] * weights[None, :]).ravel()
        B = basis_matrix(unit, pts)
        H = B.T @ (wts[:, None] * B)
        cached = 0.5 * (H + H.T)
        if len(_GRAM_CACHE) < 1024:
            _GRAM_CACHE[key] = cached
    return cached * width
