"""Reduced chaos expansions with random coefficients.

A vector-valued chaos expansion ``q(xi, zeta)`` over two independent blocks of
uniform variables is rewritten as

    q(xi, zeta) ~ qbar(zeta) + sum_j sqrt(lam_j) eta_j(xi) phi_j(zeta),

where the ``eta_j`` are zero-mean, white scalar functions of ``xi`` only and the
``phi_j`` are zeta-dependent vectors, orthonormal in a weighted inner product.
The split is optimal in the W-weighted mean-square sense.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import enumerate_total_degree
from .errors import NumericalError, UsageError
from .linalg import cholesky, generalized_sym_eig

__all__ = [
    "ChaosExpansion",
    "CoefficientStats",
    "ReducedExpansion",
    "OptimalityReport",
    "coefficient_stats",
    "reduce",
    "evaluate_reduced",
    "optimality_check",
]

_CLIP = 1e-12
_DEGENERATE = 1e-14
_TIE = 1e-12


@dataclass(frozen=True)
class ChaosExpansion:
    """Coefficients of ``q`` over the joint total-degree basis in ``(xi, zeta)``.

    Attributes
    ----------
    xi_dim, zeta_dim, degree : int
    coefficients : ndarray, shape (K, w)
        Row ``k`` belongs to member ``k`` of
        ``enumerate_total_degree(xi_dim + zeta_dim, degree)``; the first
        ``xi_dim`` exponents form ``alpha`` and the rest ``beta``.
    """

    xi_dim: int
    zeta_dim: int
    degree: int
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.coefficients.ndim != 2 or self.coefficients.shape[0] != len(self.basis):
            raise UsageError(
                f"expected coefficients of shape ({len(self.basis)}, w), "
                f"got {self.coefficients.shape}"
            )

    @property
    def value_dim(self):
        return self.coefficients.shape[1]

    @cached_property
    def basis(self):
        return enumerate_total_degree(self.xi_dim + self.zeta_dim, self.degree)

    @property
    def alphas(self):
        return self.basis.indices[:, : self.xi_dim]

    @property
    def betas(self):
        return self.basis.indices[:, self.xi_dim :]

    def evaluate(self, xi, zeta):
        """Values at paired points, shape (N, w)."""
        pts = np.hstack([np.atleast_2d(xi), np.atleast_2d(zeta)])
        return self.basis.evaluate(pts) @ self.coefficients

    def norm_squared(self, W):
        """``sum_k q_k^T W q_k`` over all coefficients (second moment)."""
        return float(np.einsum("ki,ij,kj->", self.coefficients, W, self.coefficients))


@dataclass(frozen=True)
class CoefficientStats:
    """Means ``q_{0 beta}`` and the stacked cross-covariance of the zeta-blocks.

    Attributes
    ----------
    mean : ndarray, shape (mu_p, w)
        ``qbar_beta`` for every ``|beta| <= p``.
    fluct : ndarray, shape (A, mu_{p-1} * w)
        Row per ``alpha`` with ``1 <= |alpha| <= p``; column block ``beta``
        holds ``q_{alpha beta}`` for ``|beta| <= p - 1``.
    alpha_rows : ndarray
        Positions of those alphas in ``enumerate_total_degree(m, p)``.
    """

    mean: np.ndarray
    fluct: np.ndarray
    alpha_rows: np.ndarray
    value_dim: int

    @property
    def covariance(self):
        """Stacked blocks ``C_{beta beta~} = sum_alpha q_{alpha beta} q_{alpha beta~}^T``."""
        return self.fluct.T @ self.fluct

    def block(self, b1, b2):
        w = self.value_dim
        return self.covariance[b1 * w : (b1 + 1) * w, b2 * w : (b2 + 1) * w]


def coefficient_stats(q):
    """Mean vectors and cross-covariance blocks of the zeta-coefficients."""
    m, n, p, w = q.xi_dim, q.zeta_dim, q.degree, q.value_dim
    xi_basis = enumerate_total_degree(m, p)
    zeta_p = enumerate_total_degree(n, p)
    mu_low = len(enumerate_total_degree(n, p - 1)) if p >= 1 else 0
    mean = np.zeros((len(zeta_p), w))
    fluct = np.zeros((len(xi_basis) - 1, mu_low * w))
    for k, (a, b) in enumerate(zip(q.alphas, q.betas)):
        ia = xi_basis.position[tuple(int(v) for v in a)]
        ib = zeta_p.position[tuple(int(v) for v in b)]
        if ia == 0:
            mean[ib] = q.coefficients[k]
        elif ib < mu_low:
            fluct[ia - 1, ib * w : (ib + 1) * w] = q.coefficients[k]
    return CoefficientStats(mean, fluct, np.arange(1, len(xi_basis)), w)


@dataclass(frozen=True)
class ReducedExpansion:
    """Output of :func:`reduce`.

    Attributes
    ----------
    xi_dim, zeta_dim, degree, d : int
    eigenvalues : ndarray, shape (d,)
    all_eigenvalues : ndarray
        Full spectrum, descending, negatives clipped to zero.
    mean_part : ndarray, shape (mu_p, w)
        Zeta-chaos coefficients of ``qbar`` up to degree ``p``.
    basis_vectors : ndarray, shape (d, mu_{p-1}, w)
        Zeta-chaos coefficients of ``phi_j`` up to degree ``p - 1``.
    reduced_coeffs : ndarray, shape (d, K_xi)
        Xi-chaos coefficients of ``eta_j`` over
        ``enumerate_total_degree(xi_dim, degree)``; column 0 is zero.
    residual_energy : float
        ``sum_{j>d} lam_j``.
    total_energy : float
        ``sum`` of ``q_k^T W q_k`` over every coefficient, mean included.
    """

    xi_dim: int
    zeta_dim: int
    degree: int
    d: int
    eigenvalues: np.ndarray
    all_eigenvalues: np.ndarray = field(repr=False)
    mean_part: np.ndarray = field(repr=False)
    basis_vectors: np.ndarray = field(repr=False)
    reduced_coeffs: np.ndarray = field(repr=False)
    residual_energy: float = 0.0
    total_energy: float = 0.0

    @property
    def value_dim(self):
        return self.mean_part.shape[1]

    @cached_property
    def xi_basis(self):
        return enumerate_total_degree(self.xi_dim, self.degree)

    @cached_property
    def zeta_basis(self):
        return enumerate_total_degree(self.zeta_dim, self.degree)

    def eta(self, xi):
        """Reduced variables at ``xi``, shape (N, d)."""
        vals = self.xi_basis.evaluate(np.atleast_2d(xi))
        return vals @ self.reduced_coeffs.T

    def evaluate_at_eta(self, eta, zeta):
        """``qbar(zeta) + sum_j sqrt(lam_j) eta_j phi_j(zeta)`` for given ``eta``."""
        zeta = np.atleast_2d(zeta)
        psi = self.zeta_basis.evaluate(zeta)
        out = psi @ self.mean_part
        if self.d:
            eta = np.atleast_2d(eta)
            mu = self.basis_vectors.shape[1]
            phi = np.einsum("nb,jbw->njw", psi[:, :mu], self.basis_vectors)
            out = out + np.einsum("nj,j,njw->nw", eta, np.sqrt(self.eigenvalues), phi)
        return out

    def to_dict(self):
        return {
            "xi_dim": self.xi_dim,
            "zeta_dim": self.zeta_dim,
            "degree": self.degree,
            "d": self.d,
            "eigenvalues": self.eigenvalues.tolist(),
            "all_eigenvalues": self.all_eigenvalues.tolist(),
            "mean_part": self.mean_part.tolist(),
            "basis_vectors": self.basis_vectors.tolist(),
            "reduced_coeffs": self.reduced_coeffs.tolist(),
            "residual_energy": self.residual_energy,
            "total_energy": self.total_energy,
        }

    @classmethod
    def from_dict(cls, data):
        w = len(data["mean_part"][0])
        mu = len(enumerate_total_degree(data["zeta_dim"], data["degree"] - 1))
        kx = len(enumerate_total_degree(data["xi_dim"], data["degree"]))
        d = data["d"]
        return cls(
            data["xi_dim"],
            data["zeta_dim"],
            data["degree"],
            d,
            np.array(data["eigenvalues"], dtype=float).reshape(d),
            np.array(data["all_eigenvalues"], dtype=float),
            np.array(data["mean_part"], dtype=float),
            np.array(data["basis_vectors"], dtype=float).reshape(d, mu, w),
            np.array(data["reduced_coeffs"], dtype=float).reshape(d, kx),
            float(data["residual_energy"]),
            float(data["total_energy"]),
        )


def _block_weight(W, mu):
    return np.kron(np.eye(mu), W)


def _spectrum(q, W):
    stats = coefficient_stats(q)
    w = q.value_dim
    mu = stats.fluct.shape[1] // w if w else 0
    if mu == 0 or stats.fluct.shape[0] == 0:
        return stats, np.zeros(0), np.zeros((0, 0)), mu
    wb = _block_weight(W, mu)
    a = wb @ stats.covariance @ wb
    eig = generalized_sym_eig(a, wb)
    vals = eig.eigenvalues.copy()
    top = max(vals[0], 0.0)
    if vals[-1] < -_CLIP * top and vals[-1] < -_CLIP * np.trace(a):
        raise NumericalError(
            f"covariance eigenproblem produced a negative eigenvalue {vals[-1]:.3e}"
        )
    vals[vals < 0] = 0.0
    return stats, vals, eig.eigenvectors, mu


def _select_d(vals, total, selector):
    if isinstance(selector, (int, np.integer)) and not isinstance(selector, bool):
        d = int(selector)
        if not 0 <= d <= vals.size:
            raise UsageError(f"d={d} outside [0, {vals.size}]")
    else:
        eps = float(selector)
        if not 0 < eps < 1:
            raise UsageError("tolerance selector must lie in (0, 1)")
        if vals.size == 0 or vals[0] <= _DEGENERATE * max(total, np.finfo(float).tiny):
            return 0
        tails = np.concatenate([np.cumsum(vals[::-1])[::-1], [0.0]])
        bound = eps * np.sqrt(total)
        d = int(np.argmax(np.sqrt(tails) <= bound))
    # keep modes tied with the last retained one
    while 0 < d < vals.size and vals[d] >= vals[d - 1] * (1 - _TIE) and vals[d] > 0:
        d += 1
    return d


def reduce(q, W, selector):
    """Reduced chaos expansion of ``q`` in the ``W``-weighted norm.

    Parameters
    ----------
    q : ChaosExpansion
    W : ndarray, shape (w, w)
        Symmetric positive definite weighting matrix.
    selector : int or float
        A fixed number of terms ``d``, or a tolerance ``eps`` selecting the
        smallest ``d`` with ``sqrt(sum_{j>d} lam_j) <= eps * sqrt(E)`` where
        ``E`` is the W-weighted second moment of ``q``.

    Returns
    -------
    ReducedExpansion
    """
    W = np.asarray(W, dtype=float)
    if W.shape != (q.value_dim, q.value_dim):
        raise UsageError("weighting matrix order does not match the value dimension")
    cholesky(W)
    stats, vals, vecs, mu = _spectrum(q, W)
    total = q.norm_squared(W)
    d = _select_d(vals, total, selector)
    if d and vals[d - 1] <= 0:
        raise UsageError(f"only {int(np.sum(vals > 0))} modes carry variance; d={d}")
    w = q.value_dim
    phis = vecs[:, :d].T.reshape(d, mu, w) if d else np.zeros((0, mu, w))
    kx = len(enumerate_total_degree(q.xi_dim, q.degree))
    eta = np.zeros((d, kx))
    if d:
        wb = _block_weight(W, mu)
        proj = stats.fluct @ (wb @ vecs[:, :d])
        eta[:, 1:] = (proj / np.sqrt(vals[:d])).T
    return ReducedExpansion(
        q.xi_dim,
        q.zeta_dim,
        q.degree,
        d,
        vals[:d].copy(),
        vals,
        stats.mean,
        phis,
        eta,
        float(np.sum(vals[d:])),
        total,
    )


def evaluate_reduced(r, xi, zeta):
    """Reduced expansion at paired points ``(xi, zeta)``, shape (N, w)."""
    return r.evaluate_at_eta(r.eta(xi) if r.d else None, zeta)


@dataclass(frozen=True)
class OptimalityReport:
    eigen_error: float
    competitor_errors: np.ndarray
    worst_margin: float
    optimal: bool


def optimality_check(q, W, d, trials=20, rng=None, slack=1e-10):
    """Compare the eigen-based truncation error against random W-orthonormal bases.

    Each competitor is a set of ``d`` zeta-polynomial vectors, orthonormalized
    in the block W-metric from Gaussian draws. Its error is the mean-square
    W-norm of the fluctuation left after optimal projection onto the set.
    """
    rng = np.random.default_rng(rng)
    W = np.asarray(W, dtype=float)
    stats, vals, _, mu = _spectrum(q, W)
    dim = vals.size
    if not 0 <= d <= dim:
        raise UsageError(f"d={d} outside [0, {dim}]")
    eigen_error = float(np.sum(vals[d:]))
    if dim == 0:
        return OptimalityReport(0.0, np.zeros(trials), 0.0, True)
    wb = _block_weight(W, mu)
    lower = cholesky(wb)
    a = wb @ stats.covariance @ wb
    total = float(np.trace(stats.covariance @ wb))
    errors = np.empty(trials)
    for t in range(trials):
        g = rng.standard_normal((dim, d))
        qmat, _ = np.linalg.qr(lower.T @ g)
        e = np.linalg.solve(lower.T, qmat)
        errors[t] = total - float(np.trace(e.T @ a @ e))
    scale = max(total, np.finfo(float).tiny)
    margin = float(np.min(errors) - eigen_error) if trials else 0.0
    return OptimalityReport(eigen_error, errors, margin, margin >= -slack * scale)
