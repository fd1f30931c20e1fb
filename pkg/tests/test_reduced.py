import numpy as np
import pytest
from conftest import quadrature_truncation_error, random_expansion, random_spd

from stochkap.basis import enumerate_total_degree
from stochkap.errors import DecompositionError, UsageError
from stochkap.reduced import (
    ChaosExpansion,
    ReducedExpansion,
    coefficient_stats,
    evaluate_reduced,
    optimality_check,
    reduce,
)


def w_gram(r, W):
    """``sum_beta phi_i,beta^T W phi_j,beta`` for all retained pairs."""
    return np.einsum("ibu,uv,jbv->ij", r.basis_vectors, W, r.basis_vectors)


def rank_one(rng, m, n, p, w, alpha):
    """``c(zeta) + g(zeta) phi_alpha(xi)`` and the squared W-norm of ``g``."""
    q = random_expansion(rng, m, n, p, w)
    coeffs = q.coefficients.copy()
    keep = np.all(q.alphas == 0, axis=1) | np.all(q.alphas == alpha, axis=1)
    coeffs[~keep] = 0.0
    return ChaosExpansion(m, n, p, coeffs), np.all(q.alphas == alpha, axis=1)


class TestCoefficientStats:
    def test_hand_example(self):
        q = ChaosExpansion(1, 1, 2, np.ones((6, 1)))
        stats = coefficient_stats(q)
        assert stats.block(0, 0)[0, 0] == 2.0
        assert stats.block(0, 1)[0, 0] == 1.0
        assert stats.block(1, 1)[0, 0] == 1.0
        np.testing.assert_array_equal(stats.mean[:, 0], [1.0, 1.0, 1.0])

    def test_deterministic_in_xi(self, rng):
        q = random_expansion(rng, 2, 2, 3, 2)
        coeffs = np.where(np.all(q.alphas == 0, axis=1)[:, None], q.coefficients, 0.0)
        stats = coefficient_stats(ChaosExpansion(2, 2, 3, coeffs))
        assert np.all(stats.covariance == 0.0)

    def test_monte_carlo_covariance(self, rng):
        m, n, p, w = 2, 1, 2, 2
        q = random_expansion(rng, m, n, p, w)
        stats = coefficient_stats(q)
        xi_basis = enumerate_total_degree(m, p)
        # q_beta(xi) = sum_alpha q_{alpha beta} phi_alpha(xi) for beta = 0, 1
        samples = 10**6
        phi = xi_basis.evaluate(rng.uniform(-1, 1, (samples, m)))
        zeta_basis = enumerate_total_degree(n, p)
        blocks = np.zeros((len(xi_basis), 2, w))
        for k, (a, b) in enumerate(zip(q.alphas, q.betas)):
            ib = zeta_basis.position[tuple(int(v) for v in b)]
            if ib < 2:
                blocks[xi_basis.position[tuple(int(v) for v in a)], ib] = q.coefficients[k]
        vals = phi @ blocks.reshape(len(xi_basis), -1)
        centered = vals - vals.mean(axis=0)
        prods = centered[:, :, None] * centered[:, None, :]
        est = prods.mean(axis=0)
        se = prods.std(axis=0) / np.sqrt(samples)
        assert np.all(np.abs(est - stats.covariance) <= 3 * se + 1e-12)


class TestReduce:
    def test_rank_one(self, rng):
        W = random_spd(rng, 3)
        alpha = np.array([0, 1])
        q, rows = rank_one(rng, 2, 2, 3, 3, alpha)
        g = q.coefficients[rows]
        r = reduce(q, W, 0.01)
        assert r.d == 1
        assert r.eigenvalues[0] == pytest.approx(np.einsum("bi,ij,bj->", g, W, g), rel=1e-12)
        assert np.max(r.all_eigenvalues[1:]) < 1e-12 * r.eigenvalues[0]
        target = np.zeros(len(r.xi_basis))
        target[r.xi_basis.position[(0, 1)]] = 1.0
        np.testing.assert_allclose(np.abs(r.reduced_coeffs[0]), target, atol=1e-12)

    def test_deterministic_in_xi(self, rng):
        q = random_expansion(rng, 2, 1, 2, 2)
        coeffs = np.where(np.all(q.alphas == 0, axis=1)[:, None], q.coefficients, 0.0)
        q = ChaosExpansion(2, 1, 2, coeffs)
        r = reduce(q, np.eye(2), 0.01)
        assert r.d == 0
        zeta = rng.uniform(-1, 1, (5, 1))
        xi = rng.uniform(-1, 1, (5, 2))
        np.testing.assert_allclose(evaluate_reduced(r, xi, zeta), q.evaluate(xi, zeta), atol=1e-13)

    @pytest.mark.parametrize("d", [0, 1, 3, 6])
    def test_truncation_identity(self, rng, d):
        q = random_expansion(rng, 2, 2, 3, 4)
        W = random_spd(rng, 4)
        r = reduce(q, W, d)
        err = quadrature_truncation_error(q, r, W, 4)
        assert err == pytest.approx(r.residual_energy, rel=1e-9)

    def test_full_rank_reconstruction(self, rng):
        q = random_expansion(rng, 2, 2, 3, 2)
        W = random_spd(rng, 2)
        probe = reduce(q, W, 0)
        rank = int(np.sum(probe.all_eigenvalues > 1e-12 * probe.all_eigenvalues[0]))
        r = reduce(q, W, rank)
        xi = rng.uniform(-1, 1, (20, 2))
        zeta = rng.uniform(-1, 1, (20, 2))
        np.testing.assert_allclose(evaluate_reduced(r, xi, zeta), q.evaluate(xi, zeta), atol=1e-10)

    def test_orthonormality_and_whiteness(self, rng):
        q = random_expansion(rng, 3, 2, 3, 5)
        W = random_spd(rng, 5)
        r = reduce(q, W, 4)
        np.testing.assert_allclose(w_gram(r, W), np.eye(4), atol=1e-8)
        np.testing.assert_allclose(r.reduced_coeffs @ r.reduced_coeffs.T, np.eye(4), atol=1e-8)
        assert np.all(r.reduced_coeffs[:, 0] == 0.0)

    def test_energy_identity(self, rng):
        q = random_expansion(rng, 2, 3, 3, 3)
        W = random_spd(rng, 3)
        r = reduce(q, W, 2)
        fluct = ~np.all(q.alphas == 0, axis=1)
        c = q.coefficients[fluct]
        energy = np.einsum("ki,ij,kj->", c, W, c)
        assert np.sum(r.all_eigenvalues) == pytest.approx(energy, rel=1e-10)
        assert r.total_energy == pytest.approx(q.norm_squared(W), rel=1e-14)

    def test_eigenvalues_descending(self, rng):
        r = reduce(random_expansion(rng, 2, 2, 3, 3), np.eye(3), 0)
        assert np.all(np.diff(r.all_eigenvalues) <= 0)
        assert np.all(r.all_eigenvalues >= 0)

    def test_tolerance_selects_smallest_d(self, rng):
        q = random_expansion(rng, 3, 2, 3, 4)
        W = np.eye(4)
        vals = reduce(q, W, 0).all_eigenvalues
        bound = 0.3 * np.sqrt(q.norm_squared(W))
        r = reduce(q, W, 0.3)
        assert np.sqrt(np.sum(vals[r.d :])) <= bound
        assert r.d == 0 or np.sqrt(np.sum(vals[r.d - 1 :])) > bound

    def test_ties_are_kept_together(self):
        # two xi-variables carrying identical energy give a double eigenvalue
        coeffs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        q = ChaosExpansion(2, 0, 1, coeffs)
        r = reduce(q, np.eye(2), 0.9)
        assert r.d == 2

    def test_odd_content_vanishes_at_origin(self, rng):
        q = random_expansion(rng, 1, 1, 3, 2)
        odd = q.alphas[:, 0] % 2 == 1
        coeffs = np.where((odd | (q.alphas[:, 0] == 0))[:, None], q.coefficients, 0.0)
        q = ChaosExpansion(1, 1, 3, coeffs)
        r = reduce(q, np.eye(2), 2)
        zeta = rng.uniform(-1, 1, (4, 1))
        np.testing.assert_allclose(r.eta(np.zeros((1, 1))), 0.0, atol=1e-14)
        expected = r.evaluate_at_eta(np.zeros((4, 2)), zeta)
        np.testing.assert_allclose(evaluate_reduced(r, np.zeros((4, 1)), zeta), expected, atol=1e-13)

    def test_dict_round_trip(self, rng):
        r = reduce(random_expansion(rng, 2, 2, 2, 3), np.eye(3), 2)
        back = ReducedExpansion.from_dict(r.to_dict())
        for name in ("eigenvalues", "mean_part", "basis_vectors", "reduced_coeffs"):
            np.testing.assert_array_equal(getattr(back, name), getattr(r, name))
        assert back.residual_energy == r.residual_energy

    def test_invalid(self, rng):
        q = random_expansion(rng, 1, 1, 2, 2)
        with pytest.raises(UsageError):
            reduce(q, np.eye(3), 1)
        with pytest.raises(DecompositionError):
            reduce(q, -np.eye(2), 1)
        with pytest.raises(UsageError):
            reduce(q, np.eye(2), 99)
        with pytest.raises(UsageError):
            reduce(q, np.eye(2), 1.5)
        with pytest.raises(UsageError):
            ChaosExpansion(1, 1, 2, np.ones((5, 2)))


class TestOptimality:
    def test_random_instance(self, rng):
        q = random_expansion(rng, 2, 2, 3, 3)
        W = random_spd(rng, 3)
        report = optimality_check(q, W, 2, trials=20, rng=rng)
        assert report.optimal
        assert np.all(report.competitor_errors >= report.eigen_error)

    def test_full_rank_is_trivially_optimal(self, rng):
        q = random_expansion(rng, 1, 1, 2, 2)
        dim = reduce(q, np.eye(2), 0).all_eigenvalues.size
        report = optimality_check(q, np.eye(2), dim, trials=5, rng=rng)
        assert report.eigen_error == 0.0
        np.testing.assert_allclose(report.competitor_errors, 0.0, atol=1e-10)

    def test_rank_one(self, rng):
        q, _ = rank_one(rng, 2, 1, 2, 2, np.array([1, 0]))
        report = optimality_check(q, np.eye(2), 1, trials=10, rng=rng)
        assert report.eigen_error == pytest.approx(0.0, abs=1e-12)
        assert report.optimal
