"""Coupled heat-transfer / neutron-diffusion reactor model on [0, L].

Both subproblems use linear finite elements with homogeneous Neumann
conditions and are coupled through temperature-dependent cross sections.
All routines are batched over a leading sample axis.
"""

from dataclasses import dataclass, field, fields
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, SingularMatrixError
from .fem import FEMesh
from .linalg import solve_tridiagonal
from .randomfield import FieldSpec, kl_decompose, sample_field

__all__ = [
    "ReactorConfig",
    "ReactorModel",
    "CoupledSolution",
    "temperature_coefficients",
]


def _default_h_spec():
    return FieldSpec(0.17, 0.1, 15.0, 10, "mean-square")


def _default_sigma_spec():
    return FieldSpec(0.0195, 0.1, 50.0, 2, "l2")


@dataclass(frozen=True)
class ReactorConfig:
    """Physical constants (CGS-like units as in the reference problem).

    Attributes
    ----------
    L : float
        Reactor length, cm.
    n_elements : int
    k : float
        Heat conductivity, J/(K cm s).
    T_inf : float
        Ambient temperature, K.
    E_f : float
        Energy per fission, J.
    Sigma_f_ref : float
        Fission cross section at ``T_ref``, 1/cm.
    D_ref : float
        Diffusion constant at ``T_ref``, cm.
    nu : float
        Neutrons per fission.
    s : float
        Neutron source, 1/(s cm^3).
    T_ref, T_min, T_max : float
        Reference temperature and the window temperatures are clamped to, K.
    h_spec, sigma_spec : FieldSpec
        Thermal transmittance and absorption cross section fields.
    """

    L: float = 100.0
    n_elements: int = 40
    k: float = 100.0
    T_inf: float = 390.0
    E_f: float = 3.0e-11
    Sigma_f_ref: float = 0.0075
    D_ref: float = 2.2
    nu: float = 2.2
    s: float = 5.0e11
    T_ref: float = 390.0
    T_min: float = 390.0
    T_max: float = 1000.0
    h_spec: FieldSpec = field(default_factory=_default_h_spec)
    sigma_spec: FieldSpec = field(default_factory=_default_sigma_spec)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, FieldSpec):
                continue
            if not value > 0:
                raise ConfigurationError(f"{f.name} must be positive")
        if int(self.n_elements) != self.n_elements:
            raise ConfigurationError("n_elements must be an integer")
        if not self.T_min <= self.T_ref <= self.T_max:
            raise ConfigurationError("temperatures must satisfy T_min <= T_ref <= T_max")
        if not self.sigma_spec.mean - self.nu * self.Sigma_f_ref > 0:
            raise ConfigurationError(
                "mean absorption must exceed nu * Sigma_f_ref (subcritical margin)"
            )

    @property
    def m(self):
        return self.h_spec.n_terms

    @property
    def n(self):
        return self.sigma_spec.n_terms


def temperature_coefficients(T, cfg):
    """Diffusion constant and cross-section factors at temperature ``T``.

    Returns ``(D, absorption_factor, fission_factor)``; temperatures are first
    clamped to ``[T_min, T_max]``. The factors multiply the reference
    absorption field and ``Sigma_f_ref`` respectively.
    """
    tc = np.clip(np.asarray(T, dtype=float), cfg.T_min, cfg.T_max)
    d = cfg.D_ref * np.sqrt(tc / cfg.T_ref)
    factor = np.sqrt(cfg.T_ref / tc)
    return d, factor, factor


@dataclass
class CoupledSolution:
    """Final iterates and per-iteration relative W-norm updates."""

    T: np.ndarray
    Phi: np.ndarray
    T_updates: np.ndarray
    Phi_updates: np.ndarray
    failed: np.ndarray
    iterates: tuple = None


class ReactorModel:
    """FE discretization of the coupled problem with KL random fields.

    Parameters
    ----------
    cfg : ReactorConfig
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.mesh = FEMesh(cfg.L, int(cfg.n_elements))

    @cached_property
    def kl_h(self):
        return kl_decompose(self.cfg.h_spec, self.mesh)

    @cached_property
    def kl_sigma(self):
        return kl_decompose(self.cfg.sigma_spec, self.mesh)

    @property
    def W(self):
        return self.mesh.h1_gram

    def h_field(self, xi):
        return sample_field(self.kl_h, self.cfg.h_spec, xi)

    def sigma_field(self, zeta):
        return sample_field(self.kl_sigma, self.cfg.sigma_spec, zeta)

    def assemble_heat(self, h_nodal, T_prev, Phi_prev):
        """Bands of ``K + H(xi)`` and the load ``q(Phi, T)``."""
        cfg, mesh = self.cfg, self.mesh
        h_g = mesh.to_gauss(h_nodal)
        shape = h_g.shape
        sub_k, diag_k, sup_k = mesh.stiffness_bands(np.full(shape, cfg.k))
        sub_h, diag_h, sup_h = mesh.mass_bands(h_g)
        _, _, fission = temperature_coefficients(mesh.to_gauss(T_prev), cfg)
        source = cfg.E_f * cfg.Sigma_f_ref * fission * mesh.to_gauss(Phi_prev)
        rhs = mesh.load(h_g * cfg.T_inf + source)
        return (sub_k + sub_h, diag_k + diag_h, sup_k + sup_h), rhs

    def assemble_neutronics(self, T_nodal, sigma_nodal):
        """Bands of ``D(T) + M(T, zeta)`` and the source load."""
        cfg, mesh = self.cfg, self.mesh
        d, absorption, fission = temperature_coefficients(mesh.to_gauss(T_nodal), cfg)
        sig_g = mesh.to_gauss(sigma_nodal)
        reaction = sig_g * absorption - cfg.nu * cfg.Sigma_f_ref * fission
        sub_d, diag_d, sup_d = mesh.stiffness_bands(d)
        sub_m, diag_m, sup_m = mesh.mass_bands(reaction)
        rhs = mesh.load(np.full(reaction.shape, cfg.s))
        return (sub_d + sub_m, diag_d + diag_m, sup_d + sup_m), rhs

    def heat_solve(self, h_nodal, T_prev, Phi_prev, return_failures=False):
        bands, rhs = self.assemble_heat(h_nodal, T_prev, Phi_prev)
        return solve_tridiagonal(*bands, rhs, return_failures=return_failures, spd=True)

    def neutronics_solve(self, T_nodal, sigma_nodal, return_failures=False):
        bands, rhs = self.assemble_neutronics(T_nodal, sigma_nodal)
        try:
            return solve_tridiagonal(
                *bands, rhs, return_failures=return_failures, spd=True
            )
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                "neutronics operator is not positive definite; the absorption "
                "field is too small relative to nu * Sigma_f (locally supercritical)"
            ) from exc

    def w_norm(self, v):
        return np.sqrt(np.einsum("...i,ij,...j->...", v, self.W, v))

    def solve_coupled(self, xi, zeta, n_iter=20, return_failures=False, keep_iterates=False):
        """Gauss-Seidel iteration: heat solve, then neutronics solve.

        Starts from ``T = T_ref`` and ``Phi = 0``. Inputs may be single
        vectors or batches; a batch returns failure flags per sample when
        ``return_failures`` is set instead of raising. With ``keep_iterates``
        every iterate is stored as arrays of shape (n_iter, batch, n_nodes).
        """
        if n_iter < 1:
            raise ConfigurationError("n_iter must be at least 1")
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        h = self.h_field(xi)
        sigma = self.sigma_field(zeta)
        batch = h.shape[0]
        r = self.mesh.n_nodes
        T = np.full((batch, r), self.cfg.T_ref)
        Phi = np.zeros((batch, r))
        failed = np.zeros(batch, dtype=bool)
        t_upd, p_upd = [], []
        t_hist, p_hist = [], []
        for it in range(n_iter):
            try:
                out = self.heat_solve(h, T, Phi, return_failures)
                T_new, bad_t = out if return_failures else (out, False)
                out = self.neutronics_solve(T_new, sigma, return_failures)
                Phi_new, bad_p = out if return_failures else (out, False)
            except SingularMatrixError as exc:
                raise SingularMatrixError(f"outer iteration {it + 1}: {exc}") from exc
            failed |= bad_t | bad_p
            t_upd.append(_relative(self.w_norm(T_new - T), self.w_norm(T_new)))
            p_upd.append(_relative(self.w_norm(Phi_new - Phi), self.w_norm(Phi_new)))
            T, Phi = T_new, Phi_new
            if keep_iterates:
                t_hist.append(T)
                p_hist.append(Phi)
        iterates = (np.array(t_hist), np.array(p_hist)) if keep_iterates else None
        return CoupledSolution(
            T, Phi, np.array(t_upd).T, np.array(p_upd).T, failed, iterates
        )


def _relative(num, den):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
