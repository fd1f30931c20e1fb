import numpy as np
import pytest

from stochkap.errors import ConfigurationError, SingularMatrixError, UsageError
from stochkap.fem import FEMesh
from stochkap.linalg import solve_tridiagonal
from stochkap.randomfield import FieldSpec
from stochkap.reactor import ReactorConfig, ReactorModel, temperature_coefficients

CFG = ReactorConfig()


def constant_config(**kw):
    return ReactorConfig(
        h_spec=FieldSpec(0.17, 0.0, 15.0, 10, "mean-square"),
        sigma_spec=FieldSpec(0.0195, 0.0, 50.0, 2, "l2"),
        **kw,
    )


def fixed_point(cfg):
    """Closed-form spatially constant solution for deterministic constant fields."""
    margin = cfg.sigma_spec.mean - cfg.nu * cfg.Sigma_f_ref
    T = cfg.T_inf + cfg.E_f * cfg.Sigma_f_ref * cfg.s / (margin * cfg.h_spec.mean)
    Phi = cfg.s / (margin * np.sqrt(cfg.T_ref / T))
    return T, Phi


@pytest.fixture(scope="module")
def model():
    return ReactorModel(CFG)


class TestMesh:
    def test_nodes_and_gauss_points(self):
        mesh = FEMesh(100.0, 40)
        assert mesh.n_nodes == 41
        np.testing.assert_allclose(np.diff(mesh.nodes), 2.5, rtol=1e-14)
        assert mesh.gauss_points.shape == (40, 2)
        assert np.all((mesh.gauss_points[:, 0] > mesh.nodes[:-1]) & (mesh.gauss_points[:, 1] < mesh.nodes[1:]))

    def test_h1_gram_stencil(self):
        mesh = FEMesh(100.0, 40)
        h = mesh.h
        w = mesh.h1_gram
        main = np.full(41, 2 * h / 3 + 2 / h)
        main[[0, -1]] = h / 3 + 1 / h
        expected = np.diag(main) + (h / 6 - 1 / h) * (np.eye(41, k=1) + np.eye(41, k=-1))
        np.testing.assert_allclose(w, expected, rtol=0, atol=1e-13)
        assert np.all(np.linalg.eigvalsh(w) > 0)

    def test_mass_exact_for_linear_coefficient(self):
        # int x N_i N_j is computed exactly by the 2-point rule
        mesh = FEMesh(3.0, 3)
        c = mesh.to_gauss(mesh.nodes)
        m = mesh.bands_to_dense(mesh.mass_bands(c))
        assert np.sum(m) == pytest.approx(4.5, rel=1e-14)
        assert m @ np.ones(4) @ mesh.nodes == pytest.approx(9.0, rel=1e-14)

    def test_load_integrates_constant(self):
        mesh = FEMesh(7.0, 5)
        assert np.sum(mesh.load(np.full((5, 2), 2.0))) == pytest.approx(14.0, rel=1e-14)

    def test_batched_bands(self):
        mesh = FEMesh(1.0, 4)
        sub, diag, sup = mesh.mass_bands(np.ones((3, 4, 2)))
        assert diag.shape == (3, 5) and sub.shape == (3, 4)

    def test_invalid(self):
        with pytest.raises(UsageError):
            FEMesh(0.0, 4)
        with pytest.raises(UsageError):
            FEMesh(1.0, 0)


class TestCoefficients:
    def test_reference(self):
        d, a, f = temperature_coefficients(390.0, CFG)
        assert (d, a, f) == (pytest.approx(2.2), pytest.approx(1.0), pytest.approx(1.0))

    def test_clamped(self):
        d, a, f = temperature_coefficients(4 * 390.0, CFG)
        assert d == pytest.approx(2.2 * np.sqrt(1000 / 390), rel=1e-14)
        assert a == pytest.approx(np.sqrt(390 / 1000), rel=1e-14)
        d_low, *_ = temperature_coefficients(100.0, CFG)
        assert d_low == pytest.approx(2.2)

    def test_hand_value(self):
        _, a, f = temperature_coefficients(610.59, CFG)
        assert a == pytest.approx(0.79920, abs=5e-6)
        assert f == a


class TestConfig:
    def test_defaults(self):
        assert CFG.m == 10 and CFG.n == 2
        assert CFG.sigma_spec.mean - CFG.nu * CFG.Sigma_f_ref == pytest.approx(0.003)

    @pytest.mark.parametrize(
        "kw",
        [{"L": -1.0}, {"T_min": 400.0}, {"nu": 3.0}, {"n_elements": 4.5}],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            ReactorConfig(**kw)


class TestAssembly:
    def test_heat_equilibrium(self, model):
        r = model.mesh.n_nodes
        h = np.full(r, 0.17)
        bands, rhs = model.assemble_heat(h, np.full(r, CFG.T_inf), np.zeros(r))
        T = solve_tridiagonal(*bands, rhs)
        np.testing.assert_allclose(T, CFG.T_inf, rtol=1e-13)

    def test_heat_without_transmittance_is_singular(self, model):
        r = model.mesh.n_nodes
        with pytest.raises(SingularMatrixError):
            model.heat_solve(np.zeros(r), np.full(r, CFG.T_ref), np.zeros(r))

    def test_reaction_coefficient(self, model):
        r = model.mesh.n_nodes
        bands, _ = model.assemble_neutronics(np.full(r, CFG.T_ref), np.full(r, 0.0195))
        dense = FEMesh.bands_to_dense(bands)
        # constants lie in the kernel of the diffusion part
        react = dense @ np.ones(r)
        np.testing.assert_allclose(react, 0.003 * model.mesh.mass_matrix @ np.ones(r), rtol=1e-12)

    def test_constant_flux(self, model):
        r = model.mesh.n_nodes
        phi = model.neutronics_solve(np.full(r, CFG.T_ref), np.full(r, 0.0195))
        np.testing.assert_allclose(phi, CFG.s / 0.003, rtol=1e-12)

    def test_zero_source(self):
        m = ReactorModel(ReactorConfig(s=1e-300))
        r = m.mesh.n_nodes
        phi = m.neutronics_solve(np.full(r, CFG.T_ref), np.full(r, 0.0195))
        assert np.max(np.abs(phi)) < 1e-290

    def test_supercritical_diagnostic(self, model):
        r = model.mesh.n_nodes
        with pytest.raises(SingularMatrixError, match="supercritical"):
            model.neutronics_solve(np.full(r, CFG.T_ref), np.full(r, 0.01))


class TestCoupled:
    def test_constant_field_fixed_point(self):
        cfg = constant_config()
        T_exp, Phi_exp = fixed_point(cfg)
        assert T_exp == pytest.approx(610.588235, rel=1e-8)
        assert Phi_exp == pytest.approx(2.0854e14, rel=1e-4)
        sol = ReactorModel(cfg).solve_coupled(np.zeros(10), np.zeros(2), n_iter=40)
        np.testing.assert_allclose(sol.T[0], T_exp, rtol=1e-8)
        np.testing.assert_allclose(sol.Phi[0], Phi_exp, rtol=1e-8)
        assert np.ptp(sol.T[0]) / T_exp < 1e-10
        assert np.ptp(sol.Phi[0]) / Phi_exp < 1e-10

    def test_iterations_differ_then_converge(self, model, rng):
        xi = rng.uniform(-1, 1, 10)
        zeta = rng.uniform(-1, 1, 2)
        one = model.solve_coupled(xi, zeta, n_iter=1)
        two = model.solve_coupled(xi, zeta, n_iter=2)
        assert not np.allclose(one.T, two.T)
        full = model.solve_coupled(xi, zeta, n_iter=20)
        assert full.T_updates[0, -1] <= 1e-8
        assert full.Phi_updates[0, -1] <= 1e-8

    def test_updates_non_increasing(self, model, rng):
        xi = rng.uniform(-1, 1, (8, 10))
        zeta = rng.uniform(-1, 1, (8, 2))
        sol = model.solve_coupled(xi, zeta, n_iter=20)
        for upd in (sol.T_updates, sol.Phi_updates):
            active = upd[:, 2:]
            # once at round-off level the sequence only fluctuates
            steps = np.diff(active, axis=1)
            assert np.all((steps <= 0) | (active[:, 1:] < 1e-12))

    def test_temperature_window(self, model, rng):
        sol = model.solve_coupled(rng.uniform(-1, 1, (16, 10)), rng.uniform(-1, 1, (16, 2)))
        assert np.all((sol.T >= CFG.T_min) & (sol.T <= CFG.T_max))
        assert np.all(sol.Phi > 0)

    def test_absorption_monotonicity(self, model, rng):
        for _ in range(5):
            xi = rng.uniform(-1, 1, 10)
            zeta = rng.uniform(-1, 1, 2)
            lo = model.solve_coupled(xi, zeta)
            # raising the first absorption variable raises Sigma_a everywhere
            up = zeta.copy()
            up[0] = min(zeta[0] + 0.5, 1.0)
            if model.kl_sigma.eigenfunctions[:, 0].mean() < 0:
                up[0] = max(zeta[0] - 0.5, -1.0)
            hi = model.solve_coupled(xi, up)
            assert np.all(hi.Phi < lo.Phi)

    def test_batch_matches_single(self, model, rng):
        xi = rng.uniform(-1, 1, (3, 10))
        zeta = rng.uniform(-1, 1, (3, 2))
        batch = model.solve_coupled(xi, zeta, n_iter=5)
        single = model.solve_coupled(xi[1], zeta[1], n_iter=5)
        np.testing.assert_allclose(batch.T[1], single.T[0], rtol=1e-13)

    def test_keep_iterates(self, model):
        sol = model.solve_coupled(np.zeros(10), np.zeros(2), n_iter=4, keep_iterates=True)
        T_it, Phi_it = sol.iterates
        assert T_it.shape == (4, 1, 41)
        np.testing.assert_array_equal(Phi_it[-1], sol.Phi)

    def test_invalid_iterations(self, model):
        with pytest.raises(ConfigurationError):
            model.solve_coupled(np.zeros(10), np.zeros(2), n_iter=0)
