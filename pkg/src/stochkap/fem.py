"""Linear finite elements on a uniform 1D mesh.

System matrices are tridiagonal and are returned either dense (for the small
Gram matrices) or as ``(sub, diag, sup)`` bands batched over samples.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import UsageError

__all__ = ["FEMesh"]

# 2-point Gauss rule on the reference element [0, 1]
_GP = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
_GW = np.array([0.5, 0.5])
# shape-function values at the Gauss points: _SHAPE[g, a]
_SHAPE = np.stack([1.0 - _GP, _GP], axis=1)


@dataclass(frozen=True)
class FEMesh:
    """Uniform mesh of ``[0, length]`` with ``n_elements`` linear elements."""

    length: float
    n_elements: int

    def __post_init__(self):
        if self.length <= 0 or self.n_elements < 1:
            raise UsageError("mesh needs a positive length and at least one element")

    @property
    def n_nodes(self):
        return self.n_elements + 1

    @property
    def h(self):
        return self.length / self.n_elements

    @cached_property
    def nodes(self):
        return np.linspace(0.0, self.length, self.n_nodes)

    @cached_property
    def gauss_points(self):
        """Physical Gauss-point coordinates, shape (n_elements, 2)."""
        return self.nodes[:-1, None] + self.h * _GP[None, :]

    def to_gauss(self, nodal):
        """Linear interpolation of nodal values to Gauss points, shape (..., ne, 2)."""
        nodal = np.asarray(nodal, dtype=float)
        left = nodal[..., :-1, None]
        right = nodal[..., 1:, None]
        return left * _SHAPE[:, 0] + right * _SHAPE[:, 1]

    def mass_bands(self, coef_gauss):
        """Bands of ``int c N_i N_j`` for ``c`` given at Gauss points."""
        c = np.asarray(coef_gauss, dtype=float) * (self.h * _GW)
        # element matrix entries (a, b) summed over Gauss points
        m00 = np.sum(c * _SHAPE[:, 0] ** 2, axis=-1)
        m11 = np.sum(c * _SHAPE[:, 1] ** 2, axis=-1)
        m01 = np.sum(c * _SHAPE[:, 0] * _SHAPE[:, 1], axis=-1)
        return self._scatter(m00, m11, m01)

    def stiffness_bands(self, coef_gauss):
        """Bands of ``int c N_i' N_j'`` for ``c`` given at Gauss points."""
        c = np.sum(np.asarray(coef_gauss, dtype=float) * _GW, axis=-1) / self.h
        return self._scatter(c, c, -c)

    def load(self, f_gauss):
        """Load vector ``int f N_i`` for ``f`` given at Gauss points."""
        f = np.asarray(f_gauss, dtype=float) * (self.h * _GW)
        out = np.zeros(f.shape[:-2] + (self.n_nodes,))
        out[..., :-1] += np.sum(f * _SHAPE[:, 0], axis=-1)
        out[..., 1:] += np.sum(f * _SHAPE[:, 1], axis=-1)
        return out

    def _scatter(self, e00, e11, e01):
        diag = np.zeros(e00.shape[:-1] + (self.n_nodes,))
        diag[..., :-1] += e00
        diag[..., 1:] += e11
        return e01, diag, e01.copy()

    @staticmethod
    def bands_to_dense(bands):
        sub, diag, sup = bands
        return np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)

    @cached_property
    def mass_matrix(self):
        return self.bands_to_dense(self.mass_bands(np.ones((self.n_elements, 2))))

    @cached_property
    def stiffness_matrix(self):
        return self.bands_to_dense(self.stiffness_bands(np.ones((self.n_elements, 2))))

    @cached_property
    def h1_gram(self):
        """Gram matrix of the FE basis in the H^1 inner product."""
        return self.mass_matrix + self.stiffness_matrix
