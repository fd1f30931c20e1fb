"""Polynomial-chaos Gauss-Seidel solver, Monte Carlo reference and diagnostics.

The PC solver alternates two nonintrusive projections per outer iteration:

1. heat sweep: solve the heat subproblem at every node of a sparse rule in
   ``(xi, zeta)`` and project the temperature onto Legendre chaos;
2. reduce the temperature to a few reduced variables ``eta(xi)``, build
   polynomials and quadrature for ``eta``, and project the flux onto a chaos
   in ``(eta, zeta)`` of the smallest adequate degree.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import OrthonormalPolyFamily, enumerate_total_degree, legendre_table
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateMeasureError,
    EvaluationError,
    UsageError,
)
from .measure import (
    build_reduced_basis,
    embed_rule,
    mixed_sparse_rule,
    pushforward_measure,
)
from .reduced import ChaosExpansion, ReducedExpansion, reduce
from .quadrature import smolyak_rule, tensor_gauss_rule

__all__ = [
    "SolverSettings",
    "IterationRecord",
    "MixedChaosExpansion",
    "PCResult",
    "MCResult",
    "nonintrusive_project",
    "run_pc_solver",
    "run_monte_carlo",
    "variance_decomposition",
    "cross_compare",
    "convergence_study",
]

logger = logging.getLogger(__name__)

# relative W-norm below which the flux fluctuation counts as zero
_DETERMINISTIC = 1e-12


@dataclass(frozen=True)
class SolverSettings:
    """Numerical settings of the PC and MC drivers.

    Attributes
    ----------
    p : int
        Total degree of the temperature chaos.
    eps1, eps2 : float
        Tolerances selecting the reduced dimension and the flux chaos degree.
    max_outer_iters : int
    xi_zeta_rule_level : int or None
        Level of the sparse rule of the heat sweep; ``None`` means ``p + 1``.
    mixed_rule_level_offset : int
        The flux projection of degree ``q`` uses a mixed rule of level
        ``q + offset``.
    xi_parent_level : int
        Level of the tensor Gauss rule in ``xi`` whose pushforward defines
        the distribution of the reduced variables.
    mc_samples : int
    rng_seed : int
    q_cap : int
        Hard cap on the flux chaos degree.
    warm_cap : bool
        Cap the degree search at the previous iteration's degree plus one.
    stagnation_tol : float
    stagnation_patience : int
        Stop early once both update norms stay below ``stagnation_tol`` for
        this many consecutive iterations; zero disables early stopping.
    monitor_samples : int
        Fixed samples on which the flux update norm is measured.
    chunk_size : int
        Nodes per batch in the heat sweep. It is independent of ``threads``
        so that the summation order, and hence the result, is too.
    threads : int
        Worker threads for batched solves; never changes results.
    """

    p: int = 4
    eps1: float = 0.01
    eps2: float = 0.01
    max_outer_iters: int = 20
    xi_zeta_rule_level: int = None
    mixed_rule_level_offset: int = 2
    xi_parent_level: int = 3
    mc_samples: int = 100_000
    rng_seed: int = 0
    q_cap: int = 8
    warm_cap: bool = True
    stagnation_tol: float = 1e-8
    stagnation_patience: int = 3
    monitor_samples: int = 512
    chunk_size: int = 2048
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.eps1 < 1 or not 0 < self.eps2 < 1:
            raise ConfigurationError("eps1 and eps2 must lie in (0, 1)")
        if self.p < 1:
            raise ConfigurationError("p must be at least 1")
        for name in ("max_outer_iters", "mixed_rule_level_offset", "xi_parent_level",
                     "mc_samples", "chunk_size", "threads", "monitor_samples"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1")
        if self.xi_zeta_rule_level is not None and self.xi_zeta_rule_level < 1:
            raise ConfigurationError("xi_zeta_rule_level must be at least 1")
        if self.q_cap < 0 or self.stagnation_patience < 0:
            raise ConfigurationError("q_cap and stagnation_patience must be nonnegative")

    @property
    def heat_rule_level(self):
        return self.p + 1 if self.xi_zeta_rule_level is None else self.xi_zeta_rule_level


@dataclass
class IterationRecord:
    """Diagnostics of one outer iteration."""

    ell: int
    d: int
    q: int
    eigenvalues: list
    T_update: float
    Phi_update: float
    heat_nodes: int
    mixed_nodes: int
    q_ratios: list
    embedded_sizes: list
    seconds: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class MixedChaosExpansion:
    """Chaos over ``(eta, zeta)``: ``sum c_{gamma beta} Gamma_gamma(eta) psi_beta(zeta)``.

    Attributes
    ----------
    family : OrthonormalPolyFamily
        Polynomials in ``eta`` (degree at least ``degree``).
    zeta_dim, degree : int
    coefficients : ndarray, shape (K, w)
        Over ``enumerate_total_degree(family.dimension + zeta_dim, degree)``.
    """

    family: OrthonormalPolyFamily
    zeta_dim: int
    degree: int
    coefficients: np.ndarray = field(repr=False)

    @property
    def eta_dim(self):
        return self.family.dimension

    @cached_property
    def basis(self):
        return enumerate_total_degree(self.eta_dim + self.zeta_dim, self.degree)

    @cached_property
    def _columns(self):
        fam_pos = {tuple(int(v) for v in e): i for i, e in enumerate(self.family.exponents)}
        zb = enumerate_total_degree(self.zeta_dim, self.degree)
        g = [fam_pos[tuple(int(v) for v in row[: self.eta_dim])] for row in self.basis.indices]
        b = [zb.position[tuple(int(v) for v in row[self.eta_dim :])] for row in self.basis.indices]
        return np.array(g, dtype=int), np.array(b, dtype=int), zb

    def basis_values(self, eta, zeta):
        zeta = np.atleast_2d(zeta)
        eta = np.asarray(eta, dtype=float).reshape(zeta.shape[0], self.eta_dim)
        g, b, zb = self._columns
        gam = self.family.evaluate(eta)
        psi = zb.evaluate(zeta)
        return gam[:, g] * psi[:, b]

    def evaluate(self, eta, zeta):
        return self.basis_values(eta, zeta) @ self.coefficients

    def shell_norms(self, W):
        """W-norm squared of the coefficients grouped by total degree."""
        norms = np.einsum("ki,ij,kj->k", self.coefficients, W, self.coefficients)
        return np.bincount(self.basis.degrees, weights=norms, minlength=self.degree + 1)

    def to_dict(self):
        return {
            "eta_dim": self.eta_dim,
            "zeta_dim": self.zeta_dim,
            "degree": self.degree,
            "family_degree": self.family.degree,
            "family_coefficients": self.family.coefficients.tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        d = data["eta_dim"]
        exps = enumerate_total_degree(d, data["family_degree"]).indices
        k = exps.shape[0]
        fam = OrthonormalPolyFamily(
            d, data["family_degree"], exps,
            np.array(data["family_coefficients"], dtype=float).reshape(k, k),
        )
        coefs = np.array(data["coefficients"], dtype=float)
        return cls(fam, data["zeta_dim"], data["degree"], coefs)


@dataclass
class PCResult:
    """Outcome of :func:`run_pc_solver`.

    ``history`` holds, per outer iteration, the temperature expansion, its
    reduction and the flux expansion.
    """

    T: ChaosExpansion
    Phi: MixedChaosExpansion
    reduced: ReducedExpansion
    records: list
    history: list
    eta_rules: dict
    mixed_rule: object

    def surrogate_T(self, xi, zeta, ell=None):
        T = self.T if ell is None else self.history[ell - 1]["T"]
        return T.evaluate(xi, zeta)

    def surrogate_Phi(self, xi, zeta, ell=None):
        state = self.history[-1] if ell is None else self.history[ell - 1]
        red, phi = state["reduced"], state["Phi"]
        eta = red.eta(xi) if red.d else np.zeros((np.atleast_2d(xi).shape[0], 0))
        return phi.evaluate(eta, zeta)


def _map_chunks(fn, n, chunk, threads):
    starts = list(range(0, n, chunk))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, starts))
    return [fn(s) for s in starts]


def _neumaier_sum(parts):
    total = np.zeros_like(parts[0])
    comp = np.zeros_like(parts[0])
    for term in parts:
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + comp


def nonintrusive_project(samples, rule, basis_values, chunk=1024):
    """Chaos coefficients ``sum_k w_k f(x_k) B(x_k)`` by quadrature.

    Parameters
    ----------
    samples : ndarray, shape (N, w)
    rule : QuadratureRule or ndarray of weights
    basis_values : ndarray, shape (N, K)

    Returns
    -------
    ndarray, shape (K, w)
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    weights = getattr(rule, "weights", rule)
    if samples.shape[0] != len(weights) or basis_values.shape[0] != len(weights):
        raise UsageError("sample, weight and basis counts must agree")
    bad = np.flatnonzero(~np.all(np.isfinite(samples), axis=1))
    if bad.size:
        raise EvaluationError(f"non-finite sample at node {int(bad[0])}", index=int(bad[0]))
    parts = [
        basis_values[i : i + chunk].T @ (weights[i : i + chunk, None] * samples[i : i + chunk])
        for i in range(0, len(weights), chunk)
    ]
    return _neumaier_sum(parts)


def _relative_w(diff, ref, W):
    diff = np.asarray(diff).reshape(-1, W.shape[0])
    ref = np.asarray(ref).reshape(-1, W.shape[0])
    num = np.einsum("ki,ij,kj->", diff, W, diff)
    den = np.einsum("ki,ij,kj->", ref, W, ref)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


class _HeatSweep:
    # sparse rule and basis of the temperature projection, reused each iteration
    def __init__(self, model, settings):
        cfg = model.cfg
        self.model = model
        self.settings = settings
        self.m, self.n, self.p = cfg.m, cfg.n, settings.p
        self.rule = smolyak_rule(self.m + self.n, settings.heat_rule_level)
        self.basis = enumerate_total_degree(self.m + self.n, self.p)
        self.xi_basis = enumerate_total_degree(self.m, self.p)

    def run(self, T_prev, red_prev, phi_prev):
        model, rule = self.model, self.rule
        m, p = self.m, self.p
        r = model.mesh.n_nodes

        def chunk(start):
            stop = min(start + self.settings.chunk_size, len(rule))
            pts = rule.nodes[start:stop]
            xi, zeta = pts[:, :m], pts[:, m:]
            tables = legendre_table(pts, p)
            vals = self.basis.evaluate(pts, tables)
            if T_prev is None:
                t_old = np.full((stop - start, r), model.cfg.T_ref)
            else:
                t_old = vals @ T_prev.coefficients
            if phi_prev is None:
                f_old = np.zeros((stop - start, r))
            else:
                if red_prev.d:
                    eta = self.xi_basis.evaluate(xi, tables[:, :m]) @ red_prev.reduced_coeffs.T
                else:
                    eta = np.zeros((stop - start, 0))
                f_old = phi_prev.evaluate(eta, zeta)
            h = model.h_field(xi)
            t_new = model.heat_solve(h, t_old, f_old)
            w = rule.weights[start:stop, None]
            return vals.T @ (w * t_new)

        parts = _map_chunks(chunk, len(rule), self.settings.chunk_size, self.settings.threads)
        return ChaosExpansion(m, self.n, p, _neumaier_sum(parts))


def _flux_projection(model, red, rules, family, q, offset):
    # flux chaos of degree q from a mixed rule of level q + offset
    n = model.cfg.n
    level = q + offset
    rule = mixed_sparse_rule(rules, n, level)
    d = red.d
    eta, zeta = rule.nodes[:, :d], rule.nodes[:, d:]
    T = red.evaluate_at_eta(eta, zeta)
    Phi = model.neutronics_solve(T, model.sigma_field(zeta))
    proto = MixedChaosExpansion(family, n, q, np.zeros((1, 1)))
    vals = proto.basis_values(eta, zeta)
    coefs = nonintrusive_project(Phi, rule, vals)
    return MixedChaosExpansion(family, n, q, coefs), rule


def _reduced_family(measure, cap, ell):
    # highest degree up to cap whose polynomials stay independent on the atoms
    for degree in range(cap, -1, -1):
        try:
            family = build_reduced_basis(measure, degree)
        except (DegenerateMeasureError, UsageError):
            continue
        if degree < cap:
            logger.info("iteration %d: reduced measure supports degree %d only", ell, degree)
        return family, degree
    raise DegenerateMeasureError(f"outer iteration {ell}: reduced measure is empty")


def run_pc_solver(model, settings, progress=None):
    """PC-based Gauss-Seidel iteration with dimension reduction.

    Parameters
    ----------
    model : ReactorModel
    settings : SolverSettings
    progress : callable, optional
        Called with each :class:`IterationRecord`.

    Returns
    -------
    PCResult
    """
    cfg = model.cfg
    W = model.W
    sweep = _HeatSweep(model, settings)
    xi_parent = tensor_gauss_rule(cfg.m, settings.xi_parent_level)
    mon_rng = np.random.default_rng([settings.rng_seed, 0x5EED])
    mon_xi = mon_rng.uniform(-1, 1, (settings.monitor_samples, cfg.m))
    mon_zeta = mon_rng.uniform(-1, 1, (settings.monitor_samples, cfg.n))

    T_prev = red = phi = None
    phi_mon_prev = np.zeros((settings.monitor_samples, model.mesh.n_nodes))
    q_prev = None
    records, history = [], []
    quiet = 0
    rules, mixed = {}, None
    for ell in range(1, settings.max_outer_iters + 1):
        t0 = time.perf_counter()
        T = sweep.run(T_prev, red, phi)
        red = reduce(T, W, settings.eps1)

        measure = pushforward_measure(red, xi_parent)
        cap = settings.q_cap
        if settings.warm_cap and q_prev is not None:
            cap = min(cap, q_prev + 1)
        rules = {}
        ratios = []
        q = 0
        family, cap = _reduced_family(measure, cap, ell)
        while True:
            for lev in range(1, q + settings.mixed_rule_level_offset + 1):
                if lev not in rules:
                    rules[lev] = embed_rule(measure, lev)
            fam_q = family.truncate(q)
            phi, mixed = _flux_projection(
                model, red, rules, fam_q, q, settings.mixed_rule_level_offset
            )
            shells = phi.shell_norms(W)
            ratio = float(np.sqrt(shells[q] / shells.sum())) if shells.sum() > 0 else 0.0
            ratios.append(ratio)
            if ratio <= settings.eps2:
                break
            if q >= cap:
                if q >= settings.q_cap:
                    raise ConvergenceError(
                        f"outer iteration {ell}: flux chaos degree reached the cap "
                        f"{settings.q_cap} without meeting eps2 (last ratio {ratio:.3e})"
                    )
                logger.info("iteration %d: q capped at %d (ratio %.3e)", ell, q, ratio)
                break
            q += 1
        if q and np.sqrt(shells[1:].sum()) <= _DETERMINISTIC * np.sqrt(shells.sum()):
            # the degree-0 shell always has ratio 1; a flux without any
            # fluctuation is reported with its mean alone
            q = 0
            phi = MixedChaosExpansion(phi.family.truncate(0), phi.zeta_dim, 0, phi.coefficients[:1])

        t_upd = 1.0 if T_prev is None else _relative_w(
            T.coefficients - T_prev.coefficients, T.coefficients, W
        )
        eta_mon = red.eta(mon_xi) if red.d else np.zeros((len(mon_xi), 0))
        phi_mon = phi.evaluate(eta_mon, mon_zeta)
        p_upd = _relative_w(phi_mon - phi_mon_prev, phi_mon, W)
        phi_mon_prev = phi_mon

        rec = IterationRecord(
            ell=ell,
            d=red.d,
            q=q,
            eigenvalues=red.all_eigenvalues[:20].tolist(),
            T_update=t_upd,
            Phi_update=p_upd,
            heat_nodes=len(sweep.rule),
            mixed_nodes=len(mixed),
            q_ratios=ratios,
            embedded_sizes=[len(rules[k].rule) for k in sorted(rules)],
            seconds=time.perf_counter() - t0,
        )
        records.append(rec)
        history.append({"T": T, "reduced": red, "Phi": phi})
        if progress is not None:
            progress(rec)
        T_prev, q_prev = T, q
        quiet = quiet + 1 if max(t_upd, p_upd) < settings.stagnation_tol else 0
        if settings.stagnation_patience and quiet >= settings.stagnation_patience:
            break
    return PCResult(T, phi, red, records, history, rules, mixed)


@dataclass
class MCResult:
    """Monte Carlo samples and summary fields."""

    xi: np.ndarray
    zeta: np.ndarray
    T: np.ndarray
    Phi: np.ndarray
    failed: np.ndarray
    T_updates: np.ndarray
    Phi_updates: np.ndarray
    iterates: tuple = None

    @property
    def ok(self):
        return ~self.failed

    def mean(self):
        return self.T[self.ok].mean(axis=0), self.Phi[self.ok].mean(axis=0)

    def var(self):
        return self.T[self.ok].var(axis=0, ddof=1), self.Phi[self.ok].var(axis=0, ddof=1)


def draw_inputs(seed, n_samples, m, n):
    """Uniform draws on [-1, 1]^(m+n); sample ``k`` uses its own stream."""
    out = np.empty((n_samples, m + n))
    for k in range(n_samples):
        out[k] = np.random.default_rng([seed, k]).uniform(-1.0, 1.0, m + n)
    return out[:, :m], out[:, m:]


def run_monte_carlo(model, n_samples, n_iter, seed, threads=1, chunk=2048, keep_iterates=False):
    """Coupled deterministic solves at independent uniform draws.

    Per-sample failures are recorded in ``failed`` and excluded from
    statistics; the run continues.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    cfg = model.cfg
    xi, zeta = draw_inputs(seed, n_samples, cfg.m, cfg.n)

    def solve(start):
        stop = min(start + chunk, n_samples)
        return model.solve_coupled(
            xi[start:stop], zeta[start:stop], n_iter,
            return_failures=True, keep_iterates=keep_iterates,
        )

    sols = _map_chunks(solve, n_samples, chunk, threads)
    iterates = None
    if keep_iterates:
        iterates = (
            np.concatenate([s.iterates[0] for s in sols], axis=1),
            np.concatenate([s.iterates[1] for s in sols], axis=1),
        )
    res = MCResult(
        xi,
        zeta,
        np.concatenate([s.T for s in sols]),
        np.concatenate([s.Phi for s in sols]),
        np.concatenate([s.failed for s in sols]),
        np.concatenate([s.T_updates for s in sols]),
        np.concatenate([s.Phi_updates for s in sols]),
        iterates,
    )
    if res.failed.any():
        logger.warning("%d of %d Monte Carlo samples failed", int(res.failed.sum()), n_samples)
    return res


def variance_decomposition(T, Phi, W):
    """Fractions of the W-weighted variance carried by xi-only, zeta-only and mixed terms.

    Returns
    -------
    dict
        ``{"T": (xi, zeta, mixed), "Phi": (eta, zeta, mixed)}``.
    """
    def fractions(coefs, first_block, second_block):
        norms = np.einsum("ki,ij,kj->k", coefs, W, coefs)
        a = first_block.any(axis=1)
        b = second_block.any(axis=1)
        parts = np.array([norms[a & ~b].sum(), norms[~a & b].sum(), norms[a & b].sum()])
        total = parts.sum()
        if total <= 0:
            raise EvaluationError("zero total variance; fractions undefined")
        return tuple(float(x) for x in parts / total)

    idx_t = T.basis.indices
    idx_p = Phi.basis.indices
    d = Phi.eta_dim
    return {
        "T": fractions(T.coefficients, idx_t[:, : T.xi_dim], idx_t[:, T.xi_dim :]),
        "Phi": fractions(Phi.coefficients, idx_p[:, :d], idx_p[:, d:]),
    }


def cross_compare(mc, pc, n_common=None, W=None, ell=None):
    """Relative mean-square W-distance between MC samples and PC surrogates.

    Uses the first ``n_common`` successful MC samples.
    """
    ok = np.flatnonzero(mc.ok)
    if n_common is not None:
        ok = ok[:n_common]
    xi, zeta = mc.xi[ok], mc.zeta[ok]
    t_mc = mc.T[ok] if ell is None else mc.iterates[0][ell - 1][ok]
    p_mc = mc.Phi[ok] if ell is None else mc.iterates[1][ell - 1][ok]
    t_pc = pc.surrogate_T(xi, zeta, ell)
    p_pc = pc.surrogate_Phi(xi, zeta, ell)
    return {
        "T": _relative_w(t_mc - t_pc, t_mc, W),
        "Phi": _relative_w(p_mc - p_pc, p_mc, W),
        "samples": int(ok.size),
    }


def convergence_study(model, pc, n_common, seed, threads=1):
    """Per-iteration MC-vs-PC distances and update norms."""
    n_iter = len(pc.records)
    mc = run_monte_carlo(model, n_common, n_iter, seed, threads, keep_iterates=True)
    rows = []
    for rec in pc.records:
        dist = cross_compare(mc, pc, W=model.W, ell=rec.ell)
        rows.append(
            {
                "ell": rec.ell,
                "T_distance": dist["T"],
                "Phi_distance": dist["Phi"],
                "T_update": rec.T_update,
                "Phi_update": rec.Phi_update,
            }
        )
    return rows
