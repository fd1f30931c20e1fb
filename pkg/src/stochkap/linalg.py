"""Dense eigen-solvers, Cholesky and banded/tridiagonal solves."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DecompositionError, NumericalError, SingularMatrixError, UsageError

__all__ = [
    "EigenDecomposition",
    "as_symmetric",
    "cholesky",
    "jacobi_eigh",
    "generalized_sym_eig",
    "solve_banded",
    "solve_tridiagonal",
    "fix_signs",
]

_SYM_TOL = 1e-12


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order and matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __len__(self):
        return self.eigenvalues.shape[0]


def as_symmetric(a, name="matrix"):
    """Validate near-symmetry of a square matrix and return its symmetric part."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise UsageError(f"{name} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a), initial=0.0), np.finfo(float).tiny)
    if np.max(np.abs(a - a.T), initial=0.0) > _SYM_TOL * scale:
        raise UsageError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def cholesky(b):
    """Lower Cholesky factor; failure reports the 0-based pivot row."""
    b = as_symmetric(b, "B")
    c, info = lapack.dpotrf(b, lower=1, clean=1)
    if info > 0:
        raise DecompositionError(
            f"matrix is not positive definite (pivot {info - 1})", pivot=info - 1
        )
    if info < 0:
        raise NumericalError(f"dpotrf rejected argument {-info}")
    return c


def fix_signs(vectors):
    """Flip columns so the largest-magnitude entry of each is positive."""
    vectors = np.array(vectors, dtype=float)
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Symmetric eigen-decomposition by cyclic Jacobi rotations.

    Returns eigenvalues (unsorted, in diagonal order) and orthonormal
    eigenvectors. Intended for small orders.
    """
    a = as_symmetric(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    for _ in range(max_sweeps):
        # summed directly: subtracting the diagonal from the full norm would
        # cancel catastrophically near convergence
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * max(norm, np.finfo(float).tiny):
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def generalized_sym_eig(a, b=None, method="lapack"):
    """Full spectrum of ``A v = lambda B v`` for symmetric A and SPD B.

    The problem is reduced with the Cholesky factor of B to a standard
    symmetric one. Eigenvalues come back in descending order (ties keep
    their original order); eigenvectors are B-orthonormal with the
    largest-magnitude entry of each made positive.

    Parameters
    ----------
    a, b : array_like
        ``b=None`` means the identity.
    method : {"lapack", "jacobi"}
        Standard-problem solver after the reduction.
    """
    a = as_symmetric(a, "A")
    n = a.shape[0]
    if b is None:
        lower = np.eye(n)
        c = a
    else:
        lower = cholesky(b)
        if lower.shape[0] != n:
            raise UsageError("A and B have different orders")
        tmp = sla.solve_triangular(lower, a, lower=True)
        c = sla.solve_triangular(lower, tmp.T, lower=True)
        c = 0.5 * (c + c.T)
    if method == "lapack":
        vals, y = sla.eigh(c)
    elif method == "jacobi":
        vals, y = jacobi_eigh(c)
    else:
        raise UsageError(f"unknown eigen method {method!r}")
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    y = y[:, order]
    vecs = y if b is None else sla.solve_triangular(lower.T, y, lower=False)
    return EigenDecomposition(vals, fix_signs(vecs))


def solve_banded(ab, rhs, lower=1, upper=1):
    """Solve a banded system in LAPACK ``(l, u)`` diagonal-ordered storage."""
    try:
        x = sla.solve_banded((lower, upper), ab, rhs, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"banded system is singular: {exc}") from exc
    except ValueError as exc:
        raise SingularMatrixError(f"banded system could not be solved: {exc}") from exc
    return x


def solve_tridiagonal(sub, diag, sup, rhs, return_failures=False, spd=False):
    """Thomas algorithm, batched over leading axes.

    Parameters
    ----------
    sub, sup : ndarray, shape (..., n-1)
        Sub- and super-diagonal.
    diag, rhs : ndarray, shape (..., n)
    return_failures : bool
        When true, systems with a vanishing pivot yield NaN solutions and a
        boolean mask of failures is returned; otherwise they raise
        :class:`SingularMatrixError`.
    spd : bool
        Treat nonpositive pivots as failures. A symmetric matrix has only
        positive pivots exactly when it is positive definite, so this detects
        loss of coercivity.

    Notes
    -----
    No pivoting; meant for the symmetric positive definite FE systems here.
    """
    diag = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    sub = np.broadcast_to(sub, diag.shape[:-1] + (diag.shape[-1] - 1,))
    sup = np.broadcast_to(sup, sub.shape)
    n = diag.shape[-1]
    cp = np.empty(sub.shape)
    dp = np.empty(rhs.shape)
    scale = np.max(np.abs(diag), axis=-1) + np.finfo(float).tiny
    bad = np.zeros(diag.shape[:-1], dtype=bool)

    def vanishing(piv):
        return (piv if spd else np.abs(piv)) <= 1e-14 * scale

    piv = diag[..., 0]
    bad |= vanishing(piv)
    piv = np.where(bad, 1.0, piv)
    if n > 1:
        cp[..., 0] = sup[..., 0] / piv
    dp[..., 0] = rhs[..., 0] / piv
    for i in range(1, n):
        piv = diag[..., i] - sub[..., i - 1] * cp[..., i - 1]
        small = vanishing(piv)
        bad |= small
        piv = np.where(small, 1.0, piv)
        if i < n - 1:
            cp[..., i] = sup[..., i] / piv
        dp[..., i] = (rhs[..., i] - sub[..., i - 1] * dp[..., i - 1]) / piv
    x = np.empty(rhs.shape)
    x[..., n - 1] = dp[..., n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i] = dp[..., i] - cp[..., i] * x[..., i + 1]
    if np.any(bad):
        if not return_failures:
            raise SingularMatrixError(
                f"zero pivot in tridiagonal solve ({int(np.sum(bad))} system(s))"
            )
        x[bad] = np.nan
    if return_failures:
        return x, bad
    return x
