"""Data generators for the worked examples and the bundled diabetes fixture."""

from __future__ import annotations

import csv
from importlib import resources

import numpy as np

from .errors import ConfigError, DataError
from .kernels import (
    CategoricalComponent, CategoricalKernel, GaussianComponent, GaussianKernel,
    MarkovChainComponent, MarkovKernel,
)

# component means, one column per component
EXAMPLE1_MEANS = np.array([
    [-2.0, -2.0, -2.0, 2.0],
    [-3.0, 3.0, -3.0, 3.0],
    [4.0, 4.0, 4.0, 4.0],
    [0.0, 0.0, 0.0, 0.0],
    [2.0, 2.0, 0.0, 2.0],
    [2.0, 0.0, 0.0, 2.0],
])
EXAMPLE1_SIGMA = 0.6 * np.eye(6)

FIGURE1 = {"weights": [0.3, 0.5, 0.2], "means": [-3.0, 0.0, 2.0], "variances": [1.0, 0.5, 0.8]}

# latent class occurrence probabilities (fear, cry, motoric) for two classes
LCA_TABLE = [
    [[0.63, 0.28, 0.09], [0.68, 0.11, 0.21], [0.22, 0.58, 0.13, 0.07]],
    [[0.07, 0.29, 0.63], [0.27, 0.30, 0.43], [0.15, 0.17, 0.40, 0.28]],
]
LCA_VARIABLES = ("fear", "cry", "motoric")

MARKOV_PERSISTENCE = (0.8, 0.5, 0.2)


def markov_matrices(diagonals=MARKOV_PERSISTENCE, L=4):
    """Transition matrices with the given persistence and uniform off-diagonal mass."""
    out = []
    for d in diagonals:
        xi = np.full((L, L), (1.0 - d) / (L - 1))
        np.fill_diagonal(xi, d)
        out.append(xi)
    return out


def _allocations(weights, n, rng):
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-8):
        raise ConfigError(f"weights must be a probability vector, got {list(weights)}")
    return rng.choice(w.size, size=n, p=w / w.sum())


def _check_n(n):
    if int(n) < 1:
        raise DataError(f"number of observations must be positive, got {n}")
    return int(n)


def simulate_gaussian(n, weights, comps, rng):
    n = _check_n(n)
    z = _allocations(weights, n, rng)
    kern = GaussianKernel()
    y = np.empty((n, comps[0].mu.size))
    for k, c in enumerate(comps):
        idx = np.flatnonzero(z == k)
        y[idx] = kern.simulate(c, idx.size, rng)
    return y, z + 1


def simulate_example1(n, rng):
    comps = [GaussianComponent(EXAMPLE1_MEANS[:, k], EXAMPLE1_SIGMA) for k in range(4)]
    y, z = simulate_gaussian(n, np.full(4, 0.25), comps, rng)
    truth = {"weights": [0.25] * 4, "means": EXAMPLE1_MEANS.T.tolist(),
             "sigma": EXAMPLE1_SIGMA.tolist()}
    return y, z, truth


def simulate_figure1(n, rng):
    comps = [GaussianComponent(np.array([m]), np.array([[v]]))
             for m, v in zip(FIGURE1["means"], FIGURE1["variances"])]
    y, z = simulate_gaussian(n, FIGURE1["weights"], comps, rng)
    return y, z, dict(FIGURE1)


def lca_table(table=None):
    """Probability rows normalised to sum to one (published rows are rounded)."""
    table = LCA_TABLE if table is None else table
    return [[np.asarray(p, dtype=float) / np.sum(p) for p in row] for row in table]


def simulate_lca(n, rng, table=None, weights=None):
    n = _check_n(n)
    table = lca_table(table)
    K = len(table)
    weights = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    if weights.size != K:
        raise ConfigError("LCA weights do not match the number of classes")
    z = _allocations(weights, n, rng)
    kern = CategoricalKernel()
    y = np.empty((n, len(table[0])), dtype=np.int64)
    for k in range(K):
        idx = np.flatnonzero(z == k)
        y[idx] = kern.simulate(CategoricalComponent(table[k]), idx.size, rng) + 1
    truth = {"weights": weights.tolist(), "probabilities": [[p.tolist() for p in row] for row in table]}
    return y, z + 1, truth


def simulate_markov(n, rng, matrices=None, weights=None, length=30):
    n = _check_n(n)
    mats = markov_matrices() if matrices is None else [np.asarray(m, dtype=float) for m in matrices]
    for m in mats:
        if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.allclose(m.sum(axis=1), 1.0):
            raise ConfigError("transition matrices must be square and row-stochastic")
    K = len(mats)
    weights = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=float)
    if int(length) < 2:
        raise ConfigError("sequence length must be at least 2")
    z = _allocations(weights, n, rng)
    kern = MarkovKernel()
    seqs = np.empty((n, int(length)), dtype=np.int64)
    for k in range(K):
        idx = np.flatnonzero(z == k)
        seqs[idx] = kern.simulate(MarkovChainComponent(mats[k]), idx.size, rng, length=int(length))
    truth = {"weights": weights.tolist(), "transition_matrices": [m.tolist() for m in mats],
             "persistence": [np.diag(m).tolist() for m in mats]}
    return seqs, z + 1, truth


def load_diabetes():
    """Bundled diabetes data: (145, 3) glucose/insulin/sspg and class labels."""
    with resources.files("clipsmix.data").joinpath("diabetes.csv").open("r", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([[float(r["glucose"]), float(r["insulin"]), float(r["sspg"])] for r in rows])
    classes = np.array([r["class"] for r in rows])
    return y, classes
