import numpy as np
import pytest

from plsivc.splines import (
    KnotVector,
    basis_deriv_matrix,
    basis_matrix,
    eval_basis,
    eval_basis_deriv,
    gram_matrix,
    make_knots,
)


def random_knotvector(rng, max_degree=3, max_interior=8):
    M = int(rng.integers(1, max_degree + 1))
    K = int(rng.integers(0, max_interior + 1))
    lo = rng.uniform(-3, 0)
    hi = lo + rng.uniform(0.5, 4.0)
    values = rng.uniform(lo, hi, size=50)
    values[0], values[-1] = lo, hi
    return make_knots(values, K, M)


class TestMakeKnots:
    def test_dimension_no_interior(self):
        kv = make_knots([0.0, 0.5, 1.0], 0, 3)
        assert kv.num_interior == 0
        assert kv.dim == 4

    def test_equal_spacing_unit_range(self):
        kv = make_knots([0.0, 1.0], 2, 3)
        assert kv.dim == 6
        np.testing.assert_allclose(kv.interior, [1 / 3, 2 / 3], atol=1e-5)

    def test_equal_spacing_simulation_range(self):
        kv = make_knots([-1.25, 1.25], 3, 3)
        assert kv.dim == 7
        np.testing.assert_allclose(kv.interior, [-0.625, 0.0, 0.625], atol=1e-5)

    def test_boundary_padding(self):
        kv = make_knots([0.0, 1.0], 1, 3)
        assert kv.a < 0.0 < 1.0 < kv.b
        assert kv.b - 1.0 == pytest.approx(1e-6, rel=1e-6)

    def test_degenerate_range(self):
        with pytest.raises(ValueError, match="degenerate index range"):
            make_knots([2.0, 2.0, 2.0], 3, 3)

    def test_full_sequence_is_clamped(self):
        kv = make_knots([0.0, 1.0], 2, 3)
        assert np.all(kv.knots[:4] == kv.a)
        assert np.all(kv.knots[-4:] == kv.b)
        assert len(kv.knots) == 2 * 4 + 2


class TestEvalBasis:
    def test_degree_zero_single_indicator(self):
        kv = KnotVector(degree=0, a=0.0, b=1.0, interior=np.array([]))
        np.testing.assert_array_equal(eval_basis(kv, 0.3), [1.0])

    def test_partition_of_unity(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            kv = random_knotvector(rng)
            u = rng.uniform(kv.a, kv.b, size=1000)
            sums = basis_matrix(kv, u).sum(axis=1)
            assert np.max(np.abs(sums - 1.0)) < 1e-12

    def test_clamped_left_boundary(self):
        kv = KnotVector(degree=3, a=0.0, b=1.0, interior=np.array([1 / 3, 2 / 3]))
        np.testing.assert_allclose(eval_basis(kv, 0.0), [1, 0, 0, 0, 0, 0], atol=1e-15)

    def test_clamped_right_boundary(self):
        kv = KnotVector(degree=3, a=0.0, b=1.0, interior=np.array([1 / 3, 2 / 3]))
        np.testing.assert_allclose(eval_basis(kv, 1.0), [0, 0, 0, 0, 0, 1], atol=1e-15)

    def test_out_of_range_clamps(self):
        kv = KnotVector(degree=2, a=0.0, b=1.0, interior=np.array([0.5]))
        np.testing.assert_array_equal(eval_basis(kv, -3.0), eval_basis(kv, 0.0))
        np.testing.assert_array_equal(eval_basis(kv, 7.0), eval_basis(kv, 1.0))

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            kv = random_knotvector(rng)
            B = basis_matrix(kv, rng.uniform(kv.a, kv.b, size=200))
            assert B.min() >= 0.0 and B.max() <= 1.0 + 1e-12

    def test_local_support(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            kv = random_knotvector(rng)
            B = basis_matrix(kv, rng.uniform(kv.a, kv.b, size=100))
            for row in B:
                nz = np.nonzero(row)[0]
                assert nz.size <= kv.degree + 1
                if nz.size > 1:
                    assert np.all(np.diff(nz) == 1)


class TestEvalBasisDeriv:
    def test_derivatives_sum_to_zero(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            kv = random_knotvector(rng)
            u = rng.uniform(kv.a, kv.b, size=300)
            sums = basis_deriv_matrix(kv, u).sum(axis=1)
            assert np.max(np.abs(sums)) < 1e-9

    def test_hat_function_slopes(self):
        kv = KnotVector(degree=1, a=0.0, b=1.0, interior=np.array([]))
        np.testing.assert_allclose(eval_basis_deriv(kv, 0.5), [-1.0, 1.0])

    def test_degree_zero_gives_zero(self):
        kv = KnotVector(degree=0, a=0.0, b=1.0, interior=np.array([0.4]))
        np.testing.assert_array_equal(eval_basis_deriv(kv, 0.3), [0.0, 0.0])

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        for _ in range(20):
            kv = random_knotvector(rng)
            h = 1e-6 * (kv.b - kv.a)
            # keep clear of the knots, where lower-degree bases kink
            for u in _interior_points(kv, rng, 100, margin=20 * h):
                exact = eval_basis_deriv(kv, u)
                fd = (eval_basis(kv, u + h) - eval_basis(kv, u - h)) / (2 * h)
                err = np.max(np.abs(fd - exact)) / max(1.0, np.max(np.abs(exact)))
                assert err < 1e-6


class TestGramMatrix:
    def test_degree_zero_unit_interval(self):
        kv = KnotVector(degree=0, a=0.0, b=1.0, interior=np.array([]))
        np.testing.assert_allclose(gram_matrix(kv), [[1.0]], atol=1e-15)

    def test_hat_functions_analytic(self):
        kv = KnotVector(degree=1, a=0.0, b=1.0, interior=np.array([]))
        expected = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
        np.testing.assert_allclose(gram_matrix(kv), expected, atol=1e-14)

    def test_symmetric_positive_definite(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            kv = random_knotvector(rng)
            H = gram_matrix(kv)
            np.testing.assert_allclose(H, H.T)
            assert np.linalg.eigvalsh(H).min() > 0.0

    def test_matches_trapezoid(self):
        rng = np.random.default_rng(32)
        for _ in range(10):
            kv = random_knotvector(rng)
            H = gram_matrix(kv)
            assert np.max(np.abs(H - _trapezoid_gram(kv))) < 1e-6


def _interior_points(kv, rng, count, margin):
    pts = []
    bps = kv.breakpoints
    while len(pts) < count:
        u = rng.uniform(kv.a + margin, kv.b - margin)
        if np.min(np.abs(bps - u)) > margin:
            pts.append(u)
    return pts


def _trapezoid_gram(kv, npts=10_000):
    u = np.linspace(kv.a, kv.b, npts)
    B = basis_matrix(kv, u)
    w = np.full(npts, (kv.b - kv.a) / (npts - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return B.T @ (w[:, None] * B)
