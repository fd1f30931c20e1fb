"""Multi-index enumeration, normalized Legendre chaos and Gram-Schmidt families.

All univariate polynomials are normalized with respect to the uniform
probability measure on [-1, 1], so that ``E[psi_i psi_j] = delta_ij``.
"""

import csv
import math
import sys
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, DegenerateMeasureError, UsageError

__all__ = [
    "TotalDegreeBasis",
    "OrthonormalPolyFamily",
    "enumerate_total_degree",
    "legendre_eval",
    "legendre_table",
    "tensor_basis_eval",
    "gram_schmidt_orthonormalize",
    "orthonormalize_discrete",
    "OutsideSupportWarning",
]

_SUPPORT_TOL = 1e-12


class OutsideSupportWarning(UserWarning):
    """Legendre polynomials evaluated outside [-1, 1]."""


def _compositions(total, dim):
    # first entry descends so that (1,0) precedes (0,1)
    if dim == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, dim - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class TotalDegreeBasis:
    """Multi-indices of total degree at most ``max_degree`` in graded order.

    Attributes
    ----------
    dimension : int
    max_degree : int
    indices : ndarray of int, shape (K, dimension)
        Row ``k`` is the exponent vector of member ``k``; row 0 is zero.
    """

    dimension: int
    max_degree: int
    indices: np.ndarray = field(repr=False)

    def __len__(self):
        return self.indices.shape[0]

    @cached_property
    def degrees(self):
        return self.indices.sum(axis=1)

    @cached_property
    def position(self):
        """Map from exponent tuple to row index."""
        return {tuple(int(v) for v in row): k for k, row in enumerate(self.indices)}

    @cached_property
    def _recursion(self):
        # every member is its parent times one univariate factor; the parent
        # zeroes the last nonzero entry, so it has lower degree and precedes
        # the child in graded order.
        n = len(self)
        parent = np.zeros(n, dtype=np.intp)
        axis = np.zeros(n, dtype=np.intp)
        for k in range(1, n):
            row = self.indices[k]
            j = int(np.flatnonzero(row)[-1])
            prow = row.copy()
            prow[j] = 0
            parent[k] = self.position[tuple(int(v) for v in prow)]
            axis[k] = j
        return parent, axis

    def evaluate(self, points, tables=None):
        """Evaluate every basis member at ``points``.

        Parameters
        ----------
        points : array_like, shape (N, dimension)
        tables : ndarray, optional
            Precomputed univariate tables of shape (N, dimension, max_degree+1),
            e.g. from :func:`legendre_table`. Defaults to normalized Legendre.

        Returns
        -------
        ndarray, shape (N, K)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dimension:
            raise UsageError(
                f"points have dimension {points.shape[1]}, basis has {self.dimension}"
            )
        if tables is None:
            tables = legendre_table(points, self.max_degree)
        return _evaluate_recursive(self, tables)


def _evaluate_recursive(basis, tables):
    parent, axis = basis._recursion
    exps = basis.indices
    out = np.empty((tables.shape[0], len(basis)))
    out[:, 0] = tables[:, 0, 0] if basis.dimension else 1.0
    for k in range(1, len(basis)):
        j = axis[k]
        out[:, k] = out[:, parent[k]] * tables[:, j, exps[k, j]]
    return out


def enumerate_total_degree(dimension, p):
    """All multi-indices of ``dimension`` entries with total degree <= ``p``.

    Ordered by total degree, then with the first entry descending, e.g.
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2)``.
    """
    if dimension < 0 or p < 0:
        raise UsageError("dimension and degree must be nonnegative")
    count = math.comb(dimension + p, p)
    if count > sys.maxsize:
        raise ConfigurationError(
            f"basis of dimension {dimension} and degree {p} has {count} members, "
            "beyond the platform integer range"
        )
    if dimension == 0:
        return TotalDegreeBasis(0, p, np.zeros((1, 0), dtype=np.int64))
    rows = [c for g in range(p + 1) for c in _compositions(g, dimension)]
    indices = np.array(rows, dtype=np.int64).reshape(len(rows), dimension)
    return TotalDegreeBasis(dimension, p, indices)


def legendre_table(x, degree):
    """Normalized Legendre values ``psi_0..psi_degree`` at every entry of ``x``.

    Returns an array with one extra trailing axis of length ``degree + 1``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + _SUPPORT_TOL):
        warnings.warn(
            "Legendre polynomials evaluated outside [-1, 1]",
            OutsideSupportWarning,
            stacklevel=2,
        )
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for n in range(1, degree):
        out[..., n + 1] = ((2 * n + 1) * x * out[..., n] - n * out[..., n - 1]) / (n + 1)
    out *= np.sqrt(2.0 * np.arange(degree + 1) + 1.0)
    return out


def legendre_eval(degree, point):
    """Normalized Legendre polynomial of ``degree`` at ``point``."""
    return float(legendre_table(np.asarray(point, dtype=float), degree)[..., degree])


def tensor_basis_eval(index, point):
    """Product of univariate normalized Legendre values, one per coordinate."""
    index = np.asarray(index, dtype=int)
    point = np.asarray(point, dtype=float)
    if index.shape != point.shape:
        raise UsageError(
            f"multi-index has {index.size} entries but point has {point.size}"
        )
    if index.size == 0:
        return 1.0
    table = legendre_table(point, int(index.max()))
    return float(np.prod(table[np.arange(index.size), index]))


def monomial_values(exponents, points):
    """Values of the monomials ``x**e`` (rows of ``exponents``) at ``points``."""
    exponents = np.asarray(exponents, dtype=int)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, dim = points.shape
    out = np.ones((n, exponents.shape[0]))
    if dim == 0:
        return out
    top = int(exponents.max(initial=0))
    powers = points[:, :, None] ** np.arange(top + 1)
    for j in range(dim):
        out *= powers[:, j, exponents[:, j]]
    return out


@dataclass(frozen=True)
class OrthonormalPolyFamily:
    """Polynomials expressed in graded monomials.

    Attributes
    ----------
    dimension, degree : int
    exponents : ndarray, shape (K, dimension)
        Monomial exponents in graded order (same as :func:`enumerate_total_degree`).
    coefficients : ndarray, shape (K, K)
        Row ``i`` holds the monomial coefficients of member ``i``; the matrix is
        lower triangular because member ``i`` spans monomials ``0..i``.
    measure : object, optional
        The measure the family is orthonormal against.
    """

    dimension: int
    degree: int
    exponents: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    measure: object = field(default=None, repr=False, compare=False)

    def __len__(self):
        return self.exponents.shape[0]

    def evaluate(self, points):
        """Member values at ``points``, shape (N, K)."""
        return monomial_values(self.exponents, points) @ self.coefficients.T

    def truncate(self, degree):
        """The sub-family of members of total degree <= ``degree``."""
        keep = self.exponents.sum(axis=1) <= degree
        k = int(keep.sum())
        return OrthonormalPolyFamily(
            self.dimension,
            degree,
            self.exponents[:k],
            self.coefficients[:k, :k],
            self.measure,
        )

    def to_csv(self, path):
        header = ["member"] + [
            "x^" + "_".join(str(int(e)) for e in row) for row in self.exponents
        ]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, row in enumerate(self.coefficients):
                writer.writerow([i] + [repr(float(v)) for v in row])


def _monomial_label(exponent):
    return "(" + ",".join(str(int(e)) for e in exponent) + ")"


def gram_schmidt_orthonormalize(dimension, degree, inner_product, threshold=1e-10):
    """Orthonormalize graded monomials under an arbitrary inner product.

    Parameters
    ----------
    dimension, degree : int
    inner_product : callable
        ``inner_product(a, b)`` for two monomial coefficient vectors.
    threshold : float
        A monomial whose orthogonal remainder has norm below
        ``threshold * ||monomial||`` raises :class:`DegenerateMeasureError`.

    Notes
    -----
    Modified Gram-Schmidt followed by one full re-orthogonalization pass.
    """
    exps = enumerate_total_degree(dimension, degree).indices
    k = exps.shape[0]
    coefs = np.zeros((k, k))
    for i in range(k):
        v = np.zeros(k)
        v[i] = 1.0
        raw = math.sqrt(max(inner_product(v, v), 0.0))
        for _ in range(2):
            for j in range(i):
                v = v - inner_product(coefs[j], v) * coefs[j]
        norm = math.sqrt(max(inner_product(v, v), 0.0))
        if raw == 0.0 or norm < threshold * raw:
            raise DegenerateMeasureError(
                f"monomial {_monomial_label(exps[i])} is linearly dependent on "
                "lower-order monomials under the measure",
                exponent=tuple(int(e) for e in exps[i]),
            )
        coefs[i] = v / norm
    return OrthonormalPolyFamily(dimension, degree, exps, coefs)


def orthonormalize_discrete(points, weights, degree, threshold=1e-10, measure=None):
    """Gram-Schmidt family orthonormal under a positive discrete measure.

    Works on weighted monomial values rather than on the moment matrix, which
    keeps the result accurate even when the moment matrix is ill conditioned.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise UsageError("discrete orthonormalization needs nonnegative weights")
    dimension = points.shape[1]
    exps = enumerate_total_degree(dimension, degree).indices
    sq = np.sqrt(weights)[:, None]
    vals = monomial_values(exps, points) * sq
    k = exps.shape[0]
    q = np.zeros_like(vals)
    r_inv = np.zeros((k, k))
    for i in range(k):
        v = vals[:, i].copy()
        c = np.zeros(k)
        c[i] = 1.0
        raw = np.linalg.norm(v)
        for _ in range(2):
            for j in range(i):
                proj = q[:, j] @ v
                v -= proj * q[:, j]
                c -= proj * r_inv[j]
        norm = np.linalg.norm(v)
        if raw == 0.0 or norm < threshold * raw:
            raise DegenerateMeasureError(
                f"monomial {_monomial_label(exps[i])} is linearly dependent on "
                "lower-order monomials under the measure",
                exponent=tuple(int(e) for e in exps[i]),
            )
        q[:, i] = v / norm
        r_inv[i] = c / norm
    return OrthonormalPolyFamily(dimension, degree, exps, r_inv, measure)
