"""Measure transformation for reduced random variables.

The distribution of ``eta = eta(xi)`` is represented by the discrete pushforward
of a positive-weight xi-rule. From it we build an orthonormal polynomial
family, embedded quadrature rules (weighted subsets of the atoms) and sparse
rules mixing the eta-block with Gauss-Legendre rules in zeta.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import nnls

from .basis import enumerate_total_degree, monomial_values, orthonormalize_discrete
from .errors import DegenerateMeasureError, UsageError
from .quadrature import QuadratureRule, merge_nodes, tensor_gauss_rule, tensor_rule

__all__ = [
    "DiscreteMeasure",
    "EmbeddedRule",
    "pushforward_measure",
    "build_reduced_basis",
    "embed_rule",
    "mixed_sparse_rule",
    "recombine",
]

logger = logging.getLogger(__name__)

ATOM_DECIMALS = 10
MOMENT_TOL = 1e-9
_CHUNK = 4096


@dataclass(frozen=True)
class DiscreteMeasure:
    """Positive atoms summing to one.

    Attributes
    ----------
    points : ndarray, shape (N, d)
    masses : ndarray, shape (N,)
    provenance : dict
        Free-form description of how the measure was generated.
    """

    points: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.points.shape[0] != self.masses.shape[0]:
            raise UsageError("atom and mass counts differ")
        if np.any(self.masses <= 0):
            raise UsageError("discrete measure masses must be positive")
        if abs(np.sum(self.masses) - 1.0) > 1e-12:
            raise UsageError("discrete measure masses must sum to one")

    @property
    def dimension(self):
        return self.points.shape[1]

    def __len__(self):
        return self.masses.shape[0]

    def moments(self, values):
        """Integrals of sampled functions (columns of ``values``) against the measure."""
        return self.masses @ values


@dataclass(frozen=True)
class EmbeddedRule:
    """A weighted subset of a parent measure's atoms.

    Attributes
    ----------
    rule : QuadratureRule
    atoms : ndarray of int
        Indices of the selected parent atoms.
    level : int
    method : str
        Which selection stage produced the rule.
    residual : float
        Max-norm moment mismatch against the parent.
    """

    rule: QuadratureRule
    atoms: np.ndarray
    level: int
    method: str
    residual: float
    parent: DiscreteMeasure = field(repr=False, compare=False, default=None)


def pushforward_measure(eta_coeffs, xi_rule, degree=None):
    """Discrete distribution of ``eta(xi)`` under a positive-weight xi-rule.

    Parameters
    ----------
    eta_coeffs : ReducedExpansion or ndarray, shape (d, K_xi)
        Xi-chaos coefficients of the reduced variables.
    xi_rule : QuadratureRule
        Must have nonnegative weights.
    degree : int, optional
        Chaos degree of ``eta_coeffs`` when passed as an array.
    """
    if hasattr(eta_coeffs, "reduced_coeffs"):
        degree = eta_coeffs.degree
        eta_coeffs = eta_coeffs.reduced_coeffs
    eta_coeffs = np.atleast_2d(np.asarray(eta_coeffs, dtype=float))
    if xi_rule.has_negative_weights:
        raise UsageError(
            "the pushforward needs a positive-weight xi-rule (e.g. a tensor "
            "Gauss rule); sparse rules with negative weights are not probability "
            "measures"
        )
    d = eta_coeffs.shape[0]
    provenance = {"xi_rule_nodes": len(xi_rule), "xi_rule_level": xi_rule.level}
    if d == 0:
        return DiscreteMeasure(np.zeros((1, 0)), np.ones(1), provenance)
    basis = enumerate_total_degree(xi_rule.dimension, degree)
    if len(basis) != eta_coeffs.shape[1]:
        raise UsageError("eta coefficients do not match the xi-rule dimension/degree")
    points = np.vstack(
        [
            basis.evaluate(xi_rule.nodes[i : i + _CHUNK]) @ eta_coeffs.T
            for i in range(0, len(xi_rule), _CHUNK)
        ]
    )
    keep = xi_rule.weights > 0
    pts, masses = merge_nodes(points[keep], xi_rule.weights[keep], ATOM_DECIMALS)
    masses = masses / np.sum(masses)
    return DiscreteMeasure(pts, masses, provenance)


def build_reduced_basis(measure, degree):
    """Gram-Schmidt polynomial family orthonormal under ``measure``."""
    if len(measure) < len(enumerate_total_degree(measure.dimension, degree)):
        raise UsageError("measure has fewer atoms than polynomials of the requested degree")
    return orthonormalize_discrete(measure.points, measure.masses, degree, measure=measure)


def _moment_functions(measure, degree):
    """Measure-orthonormal functions spanning the monomials of ``degree``, shape (M, N).

    Uses the Gram-Schmidt family when the monomials are independent on the
    atoms. Otherwise (few atoms, or atoms on a grid where e.g. ``x**3`` and
    ``x`` coincide) an SVD basis of the monomials restricted to the atoms is
    used; matching its moments matches every monomial moment.
    """
    try:
        return build_reduced_basis(measure, degree).evaluate(measure.points).T
    except (DegenerateMeasureError, UsageError):
        pass
    exps = enumerate_total_degree(measure.dimension, degree).indices
    sq = np.sqrt(measure.masses)
    u, sv, _ = np.linalg.svd(monomial_values(exps, measure.points) * sq[:, None], full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    logger.info("monomials of degree %d have rank %d on %d atoms", degree, rank, len(measure))
    return (u[:, :rank] / sq[:, None]).T


def _moment_residual(values, weights, target):
    return float(np.max(np.abs(values @ weights - target)))


def _caratheodory(a, w):
    # drop atoms one at a time along null vectors of the moment matrix until
    # at most rank(a) atoms carry weight; moments are preserved throughout
    idx = np.flatnonzero(w > 0)
    w = w.copy()
    while idx.size > a.shape[0]:
        _, _, vt = np.linalg.svd(a[:, idx])
        v = vt[-1]
        if not np.any(v > 0):
            v = -v
        pos = v > 0
        ratio = np.full(v.shape, np.inf)
        ratio[pos] = w[idx][pos] / v[pos]
        j = int(np.argmin(ratio))
        w[idx] -= ratio[j] * v
        w[idx[j]] = 0.0
        w[idx] = np.maximum(w[idx], 0.0)
        idx = idx[w[idx] > 0]
    return w


def recombine(a, w):
    """Positive weights on at most ``a.shape[0]`` atoms with the moments ``a @ w``.

    Block recombination: atoms are grouped into ``2M`` contiguous clusters,
    the clusters' barycentres are reduced by Caratheodory steps, and surviving
    clusters are rescaled, halving the support each round.
    """
    m = a.shape[0]
    w = np.asarray(w, dtype=float).copy()
    idx = np.flatnonzero(w > 0)
    while idx.size > 2 * m:
        groups = np.array_split(idx, 2 * m)
        mass = np.array([w[g].sum() for g in groups])
        bary = np.stack([a[:, g] @ w[g] for g in groups], axis=1) / mass
        new = _caratheodory(bary, mass)
        for g, old, nw in zip(groups, mass, new):
            w[g] *= nw / old
        idx = np.flatnonzero(w > 0)
    sub = _caratheodory(a[:, idx], w[idx])
    w[idx] = sub
    return w


def embed_rule(measure, level):
    """Embedded rule exact for polynomials of total degree ``2*level - 1``.

    The moment conditions are written in functions orthonormal under the
    parent measure, which keeps the system well conditioned. At level one an
    atom sitting at the mean is used alone when one exists. Otherwise the
    selection stages are, in order: pivoted-QR subset with nonnegative weights, Caratheodory
    recombination of the parent masses, nonnegative least squares over all
    atoms, signed weights on the QR subset, and finally the full parent
    measure.
    """
    if level < 1:
        raise UsageError("embedded rule level must be at least 1")
    degree = 2 * level - 1
    d = measure.dimension
    if d == 0:
        rule = QuadratureRule(np.zeros((1, 0)), np.ones(1), level, degree, "embedded")
        return EmbeddedRule(rule, np.zeros(1, dtype=int), level, "trivial", 0.0, measure)
    if level == 1:
        # degree-1 exactness is mean reproduction; one atom suffices if it sits there
        mean = measure.masses @ measure.points
        dist = np.max(np.abs(measure.points - mean), axis=1)
        j = int(np.argmin(dist))
        if dist[j] <= MOMENT_TOL * max(1.0, float(np.max(np.abs(measure.points)))):
            rule = QuadratureRule(measure.points[j : j + 1].copy(), np.ones(1), 1, 1, "embedded")
            return EmbeddedRule(rule, np.array([j]), 1, "mean-atom", float(dist[j]), measure)
    a = _moment_functions(measure, degree)  # (M, N)
    target = a @ measure.masses
    m = a.shape[0]

    def accept(idx, w, method):
        nz = w > 0 if method != "signed" else w != 0
        idx, w = idx[nz], w[nz]
        order = np.argsort(idx, kind="stable")
        idx, w = idx[order], w[order]
        res = _moment_residual(a[:, idx], w, target)
        rule = QuadratureRule(
            measure.points[idx].copy(), w / np.sum(w) if method != "full" else w,
            level, degree, "embedded",
        )
        return EmbeddedRule(rule, idx, level, method, res, measure)

    _, _, piv = sla.qr(a, mode="economic", pivoting=True)
    subset = np.sort(piv[:m])
    w, _ = nnls(a[:, subset], target)
    if _moment_residual(a[:, subset], w, target) < MOMENT_TOL:
        return accept(subset, w, "qr-nnls")

    w = recombine(a, measure.masses)
    if _moment_residual(a, w, target) < MOMENT_TOL:
        return accept(np.arange(a.shape[1]), w, "recombination")

    w, _ = nnls(a, target, maxiter=50 * a.shape[1])
    if _moment_residual(a, w, target) < MOMENT_TOL:
        return accept(np.arange(a.shape[1]), w, "nnls")

    w = np.linalg.lstsq(a[:, subset], target, rcond=None)[0]
    if _moment_residual(a[:, subset], w, target) < MOMENT_TOL:
        logger.warning("embedded rule of level %d uses signed weights", level)
        return accept(subset, w, "signed")

    logger.warning("embedded rule of level %d falls back to the parent measure", level)
    return accept(np.arange(len(measure)), measure.masses.copy(), "full")


def mixed_sparse_rule(eta_rules, zeta_dim, level):
    """Two-block sparse rule over ``(eta, zeta)``.

    ``sum_{level <= k + l <= level + 1} (-1)**(level + 1 - k - l) Q_eta^k x Q_zeta^l``
    with slowly increasing levels on both blocks; ``Q_zeta^l`` is the full
    tensor Gauss-Legendre rule of level ``l``.

    Parameters
    ----------
    eta_rules : mapping
        Level -> :class:`EmbeddedRule` or :class:`QuadratureRule`, for levels
        ``1..level``.
    zeta_dim : int
    level : int
    """
    nodes, weights = [], []
    for k in range(1, level + 1):
        if k not in eta_rules:
            raise UsageError(f"eta rule of level {k} is missing")
        rk = getattr(eta_rules[k], "rule", eta_rules[k])
        for l in range(1, level + 2 - k):
            if k + l < level:
                continue
            coef = (-1) ** (level + 1 - k - l)
            term = tensor_rule([rk, tensor_gauss_rule(zeta_dim, l)]) if zeta_dim else rk
            nodes.append(term.nodes)
            weights.append(coef * term.weights)
    pts, wts = merge_nodes(np.vstack(nodes), np.concatenate(weights))
    keep = wts != 0.0
    return QuadratureRule(pts[keep], wts[keep], level, 2 * level - 1, "mixed")
