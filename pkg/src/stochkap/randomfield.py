"""Karhunen-Loeve decomposition of the squared-sinc covariance kernel.

The covariance operator is discretized by Galerkin projection onto the
linear FE basis and normalized by ``1/L`` so that its eigenvalues are
dimensionless fractions summing to one.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ModelValidityError,
    NumericalError,
    TruncationError,
    UsageError,
)
from .fem import FEMesh
from .linalg import generalized_sym_eig

__all__ = [
    "FieldSpec",
    "KLDecomposition",
    "covariance_kernel",
    "kl_decompose",
    "sample_field",
    "EIGENFUNCTION_NORMS",
]

EIGENFUNCTION_NORMS = ("l2", "mean-square")

_TAYLOR_CUTOFF = 1e-8
_POSITIVE_SPECTRUM = 1e-12


@dataclass(frozen=True)
class FieldSpec:
    """Parameters of a random field ``mean * (1 + cov * sum sqrt(3 lam_j) u_j phi_j)``.

    Attributes
    ----------
    mean : float
        Mean value (field units).
    cov : float
        Coefficient of variation, in ``[0, 1/sqrt(3))``.
    corr_length : float
        Correlation length ``a`` of the kernel, cm.
    n_terms : int
        Number of retained KL terms.
    eigenfunction_norm : {"l2", "mean-square"}
        ``"l2"`` scales modes to unit L2 norm on [0, L]; ``"mean-square"``
        scales them to unit mean square, i.e. an L2 norm of ``sqrt(L)``, which
        gives the field a pointwise coefficient of variation close to ``cov``.
    """

    mean: float
    cov: float
    corr_length: float
    n_terms: int
    eigenfunction_norm: str = "l2"

    def __post_init__(self):
        if not self.mean > 0:
            raise ConfigurationError("field mean must be positive")
        if not 0 <= self.cov < 1 / np.sqrt(3):
            raise ConfigurationError("coefficient of variation must lie in [0, 1/sqrt(3))")
        if not self.corr_length > 0:
            raise ConfigurationError("correlation length must be positive")
        if int(self.n_terms) != self.n_terms or self.n_terms < 1:
            raise ConfigurationError("n_terms must be a positive integer")
        if self.eigenfunction_norm not in EIGENFUNCTION_NORMS:
            raise ConfigurationError(
                f"eigenfunction_norm must be one of {EIGENFUNCTION_NORMS}"
            )


@dataclass(frozen=True)
class KLDecomposition:
    """Leading eigenpairs of the normalized covariance operator.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n_terms,)
    eigenfunctions : ndarray, shape (n_nodes, n_terms)
        Nodal values of the retained modes.
    all_eigenvalues : ndarray
        Full discrete spectrum, descending.
    mesh : FEMesh
    eigenfunction_norm : str
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    all_eigenvalues: np.ndarray = field(repr=False)
    mesh: FEMesh
    eigenfunction_norm: str = "l2"

    @property
    def n_terms(self):
        return self.eigenvalues.shape[0]

    @property
    def captured_fraction(self):
        return float(np.sum(self.eigenvalues) / np.sum(self.all_eigenvalues))

    @property
    def pointwise_variance(self):
        """``sum_j lam_j phi_j(x)**2`` at the nodes."""
        return (self.eigenfunctions**2) @ self.eigenvalues


def covariance_kernel(x, y, a):
    """Squared-sinc kernel ``sin(t)**2 / t**2`` with ``t = pi (x - y) / (2 a)``."""
    if not a > 0:
        raise UsageError("correlation length must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    t = np.pi * d / (2.0 * a)
    near = np.abs(d) < _TAYLOR_CUTOFF * a
    safe = np.where(near, 1.0, t)
    t2 = t * t
    return np.where(near, 1.0 - t2 / 3.0 + 2.0 * t2 * t2 / 45.0, (np.sin(safe) / safe) ** 2)


def _galerkin_kernel_matrix(mesh, kernel):
    g, gw = np.polynomial.legendre.leggauss(4)
    ref = 0.5 * (g + 1.0)
    xq = (mesh.nodes[:-1, None] + mesh.h * ref[None, :]).reshape(-1)
    wq = np.tile(0.5 * gw * mesh.h, mesh.n_elements)
    basis = np.zeros((xq.size, mesh.n_nodes))
    rows = np.arange(xq.size)
    elem = np.repeat(np.arange(mesh.n_elements), 4)
    loc = np.tile(ref, mesh.n_elements)
    basis[rows, elem] = 1.0 - loc
    basis[rows, elem + 1] = loc
    weighted = basis * wq[:, None]
    cov = kernel(xq[:, None], xq[None, :])
    return weighted.T @ cov @ weighted


def kl_decompose(spec, mesh, kernel=None):
    """Galerkin KL decomposition of the field's covariance on ``mesh``.

    Parameters
    ----------
    spec : FieldSpec
    mesh : FEMesh
    kernel : callable, optional
        ``kernel(x, y)`` on broadcast arrays; defaults to the squared sinc with
        ``spec.corr_length``.

    Returns
    -------
    KLDecomposition
    """
    if mesh.n_nodes < spec.n_terms + 2:
        raise UsageError("mesh has too few nodes for the requested number of terms")
    if kernel is None:
        kernel = lambda x, y: covariance_kernel(x, y, spec.corr_length)  # noqa: E731
    gmat = _galerkin_kernel_matrix(mesh, kernel) / mesh.length
    eig = generalized_sym_eig(gmat, mesh.mass_matrix)
    vals = eig.eigenvalues.copy()
    top = max(vals[0], 0.0)
    if vals[-1] < -_POSITIVE_SPECTRUM * top:
        raise NumericalError(f"covariance operator has a negative eigenvalue {vals[-1]:.3e}")
    # the kernel is positive semidefinite; tiny negatives are round-off
    vals[vals < 0.0] = 0.0
    if top == 0.0 or vals[spec.n_terms - 1] <= _POSITIVE_SPECTRUM * top:
        raise TruncationError(
            f"requested {spec.n_terms} KL terms but only "
            f"{int(np.sum(vals > _POSITIVE_SPECTRUM * top))} eigenvalues are "
            "numerically positive"
        )
    vecs = eig.eigenvectors[:, : spec.n_terms]
    if spec.eigenfunction_norm == "mean-square":
        vecs = vecs * np.sqrt(mesh.length)
    return KLDecomposition(
        vals[: spec.n_terms].copy(),
        vecs,
        vals.copy(),
        mesh,
        spec.eigenfunction_norm,
    )


def sample_field(decomp, spec, u):
    """Nodal field values for coordinates ``u`` in ``[-1, 1]**n_terms``.

    ``u`` may be a single vector or a batch of shape (N, n_terms); the output
    has shape (n_nodes,) or (N, n_nodes).

    Raises
    ------
    ModelValidityError
        If the field is nonpositive at any node.
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != decomp.n_terms:
        raise UsageError(f"expected {decomp.n_terms} coordinates, got {u.shape[1]}")
    if np.any(np.abs(u) > 1.0 + 1e-12):
        raise UsageError("field coordinates must lie in [-1, 1]")
    modes = decomp.eigenfunctions * np.sqrt(3.0 * decomp.eigenvalues)
    values = spec.mean * (1.0 + spec.cov * (u @ modes.T))
    bad = np.argwhere(values <= 0.0)
    if bad.size:
        sample, node = (int(v) for v in bad[0])
        raise ModelValidityError(
            f"random field is nonpositive at node {node} of sample {sample}"
        )
    return values[0] if single else values
