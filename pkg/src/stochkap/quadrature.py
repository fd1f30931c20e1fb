"""Gauss-Legendre, tensor and Smolyak quadrature for the uniform measure on [-1, 1]^n.

Weights are normalized so that every rule integrates against a probability
measure, i.e. the weights sum to one.
"""

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import EvaluationError, UsageError

__all__ = [
    "QuadratureRule",
    "gauss_legendre_1d",
    "tensor_rule",
    "tensor_gauss_rule",
    "smolyak_rule",
    "merge_nodes",
    "integrate",
    "growth_points",
    "read_rule_csv",
]

MERGE_DECIMALS = 12


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and (possibly signed) weights of a cubature rule.

    Attributes
    ----------
    nodes : ndarray, shape (N, dimension)
    weights : ndarray, shape (N,)
    level : int
    exactness_degree : int
        Declared total degree of exactness; verified by tests, never assumed.
    growth : str
        ``"gauss"`` for univariate/tensor rules, else the Smolyak growth name.
    """

    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    level: int = 1
    exactness_degree: int = 1
    growth: str = "gauss"

    def __post_init__(self):
        if self.nodes.ndim != 2 or self.nodes.shape[0] != self.weights.shape[0]:
            raise UsageError("node and weight counts differ")

    @property
    def dimension(self):
        return self.nodes.shape[1]

    def __len__(self):
        return self.weights.shape[0]

    @property
    def has_negative_weights(self):
        return bool(np.any(self.weights < 0))

    def integrate_values(self, values):
        """Weighted sum of precomputed integrand values (first axis = nodes)."""
        return compensated_dot(self.weights, values)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# dimension={self.dimension},level={self.level},"
                f"growth={self.growth},exactness_degree={self.exactness_degree}\n"
            )
            writer = csv.writer(fh)
            writer.writerow([f"node_{j + 1}" for j in range(self.dimension)] + ["weight"])
            for x, w in zip(self.nodes, self.weights):
                writer.writerow([repr(float(v)) for v in x] + [repr(float(w))])


def read_rule_csv(path):
    """Inverse of :meth:`QuadratureRule.to_csv`."""
    with open(path, newline="") as fh:
        meta = dict(item.split("=") for item in fh.readline()[1:].strip().split(","))
        rows = list(csv.reader(fh))[1:]
    data = np.array(rows, dtype=float).reshape(len(rows), -1)
    dim = int(meta["dimension"])
    return QuadratureRule(
        data[:, :dim].copy(),
        data[:, dim].copy(),
        level=int(meta["level"]),
        exactness_degree=int(meta["exactness_degree"]),
        growth=meta["growth"],
    )


def compensated_dot(weights, values):
    """``sum_k weights[k] * values[k]`` with Neumaier summation in node order."""
    values = np.asarray(values, dtype=float)
    total = np.zeros(values.shape[1:])
    comp = np.zeros(values.shape[1:])
    for w, v in zip(weights, values):
        term = w * v
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp += np.where(big, (total - t) + term, (term - t) + total)
        total = t
    return total + comp


@lru_cache(maxsize=None)
def _gauss_legendre_cached(level):
    k = np.arange(1, level)
    offdiag = k / np.sqrt(4.0 * k * k - 1.0)
    x, vecs = eigh_tridiagonal(np.zeros(level), offdiag)
    w = vecs[0] ** 2
    # enforce exact symmetry of the rule about the origin
    x = 0.5 * (x - x[::-1]) + 0.0
    w = 0.5 * (w + w[::-1])
    w = w / math.fsum(w)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_1d(level):
    """Level-``level`` Gauss-Legendre rule, exact to degree ``2*level - 1``.

    Built by the Golub-Welsch method from the recurrence of the Legendre
    polynomials; weights are for the uniform probability measure.
    """
    if level < 1:
        raise UsageError("quadrature level must be at least 1")
    x, w = _gauss_legendre_cached(int(level))
    return QuadratureRule(
        x[:, None].copy(), w.copy(), level=level, exactness_degree=2 * level - 1
    )


def merge_nodes(nodes, weights, decimals=MERGE_DECIMALS):
    """Merge coincident nodes (after rounding) and add their weights.

    The output is sorted lexicographically, so merging is idempotent and the
    node order is independent of how the input was assembled.
    """
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if nodes.shape[0] == 0:
        return nodes, weights
    keys = np.round(nodes, decimals) + 0.0
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    summed = np.bincount(inverse, weights=weights, minlength=uniq.shape[0])
    return uniq, summed


def tensor_rule(rules):
    """Cartesian product of rules; the first rule varies slowest."""
    rules = list(rules)
    if not rules:
        raise UsageError("tensor_rule needs at least one component rule")
    nodes = rules[0].nodes
    weights = rules[0].weights
    for r in rules[1:]:
        nodes = np.hstack(
            [np.repeat(nodes, len(r), axis=0), np.tile(r.nodes, (nodes.shape[0], 1))]
        )
        weights = np.outer(weights, r.weights).reshape(-1)
    return QuadratureRule(
        nodes,
        weights,
        level=min(r.level for r in rules),
        exactness_degree=min(r.exactness_degree for r in rules),
    )


def tensor_gauss_rule(dimension, level):
    """Full tensor product of ``dimension`` copies of the level-``level`` GL rule."""
    if dimension == 0:
        return QuadratureRule(np.zeros((1, 0)), np.ones(1), level, 2 * level - 1)
    return tensor_rule([gauss_legendre_1d(level)] * dimension)


def growth_points(level, growth):
    """Univariate rule size for a Smolyak level index."""
    if growth == "smolyak":
        return 2**level - 1
    if growth == "slow":
        return level
    raise UsageError(f"unknown growth rule {growth!r}; expected 'smolyak' or 'slow'")


def _level_vectors(dimension, lo, hi):
    # all l >= 1 (componentwise) with lo <= |l| <= hi
    for total in range(max(lo, dimension), hi + 1):
        for c in itertools.combinations(range(total - 1), dimension - 1):
            cuts = (-1,) + c + (total - 1,)
            yield tuple(cuts[i + 1] - cuts[i] for i in range(dimension))


def smolyak_rule(dimension, level, growth="smolyak"):
    """Smolyak sparse-grid rule built by the combination technique.

    Parameters
    ----------
    dimension : int
    level : int
        Sparse-grid level; the rule is exact for total degree ``2*level - 1``.
    growth : {"smolyak", "slow"}
        Univariate sizes ``2**l - 1`` or ``l``.

    Returns
    -------
    QuadratureRule
        Coincident nodes merged; negative weights retained.
    """
    if dimension < 1 or level < 1:
        raise UsageError("Smolyak rules need dimension >= 1 and level >= 1")
    top = level + dimension - 1
    # univariate abscissae get integer ids so that tensor nodes can be merged
    # exactly on integer keys; rounding only decides identity, the stored
    # coordinates are the unrounded Gauss abscissae
    sizes = sorted({growth_points(l, growth) for l in range(1, level + 1)})
    raw = np.concatenate([gauss_legendre_1d(s).nodes[:, 0] for s in sizes])
    keys_1d, first = np.unique(np.round(raw, MERGE_DECIMALS) + 0.0, return_index=True)
    abscissae = raw[first]
    ids, wts = {}, {}
    for s in sizes:
        r = gauss_legendre_1d(s)
        ids[s] = np.searchsorted(keys_1d, np.round(r.nodes[:, 0], MERGE_DECIMALS) + 0.0)
        wts[s] = r.weights

    keys, weights = [], []
    for lvec in _level_vectors(dimension, level, top):
        gap = top - sum(lvec)
        coef = (-1) ** gap * math.comb(dimension - 1, gap)
        pts = [growth_points(l, growth) for l in lvec]
        grids = np.meshgrid(*[ids[s] for s in pts], indexing="ij")
        keys.append(np.stack([g.reshape(-1) for g in grids], axis=1))
        wgrid = coef * np.ones(())
        for s in pts:
            wgrid = np.multiply.outer(wgrid, wts[s])
        weights.append(wgrid.reshape(-1))
    keys = np.concatenate(keys)
    weights = np.concatenate(weights)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    summed = np.bincount(inverse.reshape(-1), weights=weights, minlength=uniq.shape[0])
    keep = summed != 0.0
    return QuadratureRule(
        abscissae[uniq[keep]],
        summed[keep],
        level=level,
        exactness_degree=2 * level - 1,
        growth=growth,
    )


def integrate(rule, f):
    """``sum_k w_k f(x_k)`` accumulated in node order with compensated summation.

    Raises
    ------
    EvaluationError
        If ``f`` returns a non-finite value; the offending node index is attached.
    """
    values = []
    for k, x in enumerate(rule.nodes):
        v = np.asarray(f(x), dtype=float)
        if not np.all(np.isfinite(v)):
            raise EvaluationError(f"integrand is not finite at node {k}", index=k)
        values.append(v)
    values = np.array(values)
    if values.ndim == 1:
        return math.fsum(w * v for w, v in zip(rule.weights, values))
    return compensated_dot(rule.weights, values)
