import numpy as np
import pytest

ACCEPTANCE_LINES = {}


def uniform_moment(exponents):
    """Moment of prod x_j**e_j under the uniform probability measure on [-1, 1]^n."""
    out = 1.0
    for e in exponents:
        out *= 0.0 if e % 2 else 1.0 / (e + 1)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, shift=None):
    a = rng.standard_normal((n, n))
    return a @ a.T + (n if shift is None else shift) * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def random_expansion(rng, m, n, p, w):
    """ChaosExpansion with standard normal coefficients."""
    from stochkap.basis import enumerate_total_degree
    from stochkap.reduced import ChaosExpansion

    k = len(enumerate_total_degree(m + n, p))
    return ChaosExpansion(m, n, p, rng.standard_normal((k, w)))


def quadrature_truncation_error(q, r, W, level):
    """Mean-square W-distance between ``q`` and its reduction on a tensor GL grid."""
    from stochkap.quadrature import tensor_gauss_rule
    from stochkap.reduced import evaluate_reduced

    rule = tensor_gauss_rule(q.xi_dim + q.zeta_dim, level)
    xi, zeta = rule.nodes[:, : q.xi_dim], rule.nodes[:, q.xi_dim :]
    diff = q.evaluate(xi, zeta) - evaluate_reduced(r, xi, zeta)
    return float(rule.weights @ np.einsum("ni,ij,nj->n", diff, W, diff))
