"""Clustering kernels: multivariate Gaussian, latent class (categorical) and
first-order Markov chain.

Each kernel object is stateless apart from the structural dimensions it is
built with; hyperparameters are passed explicitly because the Gaussian kernel
samples its ``C0`` as part of the chain state.

Prepared data (``X``) is what the sampler works with:

* Gaussian: float array (N, r)
* categorical: integer array (N, r) of 0-based category codes
* Markov: integer array (N, L, L) of transition counts per sequence

Raw observations use 1-based categories/states as they appear in data files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .distributions import (
    draw_dirichlet, draw_inv_wishart, draw_mvn, draw_wishart, mvn_logpdf_rows,
    spd_cholesky,
)
from .errors import ConfigError, ContractViolation, DataError, InvalidParameterError


# ---------------------------------------------------------------------------
# component and hyperparameter records
# ---------------------------------------------------------------------------

@dataclass
class GaussianComponent:
    mu: np.ndarray
    sigma: np.ndarray

    def flat(self):
        iu = np.triu_indices(self.mu.size)
        return np.concatenate([self.mu, self.sigma[iu]])


@dataclass
class CategoricalComponent:
    pi: list  # one probability vector per variable

    def flat(self):
        return np.concatenate(self.pi)


@dataclass
class MarkovChainComponent:
    xi: np.ndarray  # (L, L) row-stochastic

    def flat(self):
        return self.xi.ravel()


@dataclass
class GaussianHyper:
    b0: np.ndarray
    B0: np.ndarray
    c0: float
    C0: np.ndarray
    g0: float
    G0: np.ndarray

    def __post_init__(self):
        self.b0 = np.atleast_1d(np.asarray(self.b0, dtype=float))
        self.B0 = np.atleast_2d(np.asarray(self.B0, dtype=float))
        self.C0 = np.atleast_2d(np.asarray(self.C0, dtype=float))
        self.G0 = np.atleast_2d(np.asarray(self.G0, dtype=float))
        r = self.b0.size
        for name in ("B0", "C0", "G0"):
            mat = getattr(self, name)
            if mat.shape != (r, r):
                raise InvalidParameterError(f"{name} must be {r}x{r}, got {mat.shape}")
            spd_cholesky(mat, name)
        if not self.c0 > (r - 1) / 2 or not self.g0 > (r - 1) / 2:
            raise InvalidParameterError("c0 and g0 must exceed (r-1)/2")
        self._B0_inv = linalg.inv(self.B0)

    @property
    def r(self):
        return self.b0.size

    @classmethod
    def from_data(cls, y, b0_scale="range_sq"):
        """Default prior recipe computed from the data.

        ``b0`` is the columnwise median; ``B0`` is ``diag(R_j^2)`` (or
        ``diag(R_j)`` with ``b0_scale="range"``), ``R_j`` the range of column j.
        ``C0`` starts at the prior mean of its Wishart prior.
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = y.shape[1]
        rng_ = np.ptp(y, axis=0)
        if np.any(rng_ <= 0):
            raise DataError("every data column needs a positive range")
        if b0_scale == "range_sq":
            B0 = np.diag(rng_ ** 2)
        elif b0_scale == "range":
            B0 = np.diag(rng_)
        else:
            raise ConfigError(f"unknown b0_scale {b0_scale!r}")
        c0 = 2.5 + (r - 1) / 2
        g0 = 0.5 + (r - 1) / 2
        G0 = 100.0 * g0 / c0 * np.diag(1.0 / rng_ ** 2)
        C0 = g0 * linalg.inv(G0)
        return cls(b0=np.median(y, axis=0), B0=B0, c0=c0, C0=C0, g0=g0, G0=G0)


@dataclass
class CategoricalHyper:
    n_categories: tuple
    alpha: list = field(default=None)

    def __post_init__(self):
        self.n_categories = tuple(int(d) for d in self.n_categories)
        if any(d < 2 for d in self.n_categories):
            raise InvalidParameterError("every variable needs at least two categories")
        if self.alpha is None:
            self.alpha = [np.ones(d) for d in self.n_categories]
        self.alpha = [np.asarray(a, dtype=float) for a in self.alpha]
        if [a.size for a in self.alpha] != list(self.n_categories):
            raise InvalidParameterError("prior vectors do not match category counts")


@dataclass
class MarkovHyper:
    L: int
    delta: np.ndarray = None

    def __post_init__(self):
        self.L = int(self.L)
        if self.L < 2:
            raise InvalidParameterError("a Markov chain kernel needs L >= 2 states")
        if self.delta is None:
            self.delta = zero_persistence_prior(self.L)
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.shape != (self.L, self.L) or np.any(self.delta < 0):
            raise InvalidParameterError("delta must be a nonnegative LxL array")
        if np.any(self.delta.sum(axis=1) <= 0):
            raise InvalidParameterError("every row of delta needs a positive entry")


def zero_persistence_prior(L, diagonal=0.0):
    """Dirichlet prior rows: ones everywhere except ``diagonal`` on the diagonal."""
    delta = np.ones((L, L))
    np.fill_diagonal(delta, diagonal)
    return delta


def mc_count_transitions(sequence, L: int) -> np.ndarray:
    """Transition counts ``N[j, l] = #{t : y_{t-1} = j, y_t = l}`` (1-based states)."""
    seq = np.asarray(sequence)
    if seq.ndim != 1 or seq.size < 2:
        raise DataError("a Markov sequence needs at least two observations")
    if not np.issubdtype(seq.dtype, np.integer):
        if not np.all(seq == np.round(seq)):
            raise DataError("Markov states must be integers")
        seq = seq.astype(int)
    if seq.min() < 1 or seq.max() > L:
        raise DataError(f"Markov states must lie in 1..{L}, got range {seq.min()}..{seq.max()}")
    counts = np.zeros((L, L), dtype=np.int64)
    np.add.at(counts, (seq[:-1] - 1, seq[1:] - 1), 1)
    return counts


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _regularized_cov(x, data_var):
    n = x.shape[0]
    r = data_var.size
    cov = np.cov(x, rowvar=False, ddof=1).reshape(r, r) if n > 1 else np.zeros((r, r))
    eps = 1e-6
    while True:
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + eps * np.diag(data_var)
            eps *= 10


class GaussianKernel:
    name = "gaussian"
    component_type = GaussianComponent

    def prepare(self, raw, hyper=None):
        x = np.asarray(raw, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise DataError("Gaussian data must be a non-empty (N, r) array")
        if not np.all(np.isfinite(x)):
            raise DataError("Gaussian data contains non-finite values")
        if hyper is not None and x.shape[1] != hyper.r:
            raise DataError(f"data has {x.shape[1]} columns, prior expects {hyper.r}")
        return x

    def default_hyper(self, x, **options):
        return GaussianHyper.from_data(x, **options)

    def loglik(self, y, comp):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(mvn_logpdf_rows(y[None, :], comp.mu, comp.sigma)[0])

    def loglik_matrix(self, x, comps):
        return np.column_stack([mvn_logpdf_rows(x, c.mu, c.sigma) for c in comps])

    def draw_posterior(self, x, comp, hyper, rng):
        n = x.shape[0]
        if n == 0:
            raise ContractViolation("posterior draw requested for an empty component")
        sigma_inv = linalg.inv(comp.sigma)
        B_N = linalg.inv(hyper._B0_inv + n * sigma_inv)
        B_N = 0.5 * (B_N + B_N.T)
        b_N = B_N @ (hyper._B0_inv @ hyper.b0 + sigma_inv @ x.sum(axis=0))
        mu = draw_mvn(b_N, B_N, rng)
        resid = x - mu
        C_N = hyper.C0 + 0.5 * resid.T @ resid
        sigma = draw_inv_wishart(hyper.c0 + 0.5 * n, C_N, rng)
        return GaussianComponent(mu, sigma)

    def draw_prior(self, hyper, rng):
        mu = draw_mvn(hyper.b0, hyper.B0, rng)
        sigma = draw_inv_wishart(hyper.c0, hyper.C0, rng)
        return GaussianComponent(mu, sigma)

    def update_shared_hyper(self, filled, hyper, rng):
        if len(filled) == 0:
            raise ContractViolation("shared hyperparameter update needs a filled component")
        prec = sum(linalg.inv(c.sigma) for c in filled)
        G_N = hyper.G0 + 0.5 * (prec + prec.T)
        C0 = draw_wishart(hyper.g0 + len(filled) * hyper.c0, G_N, rng)
        new = replace(hyper, C0=C0)
        return new

    def fit_component(self, x, context):
        return GaussianComponent(x.mean(axis=0), _regularized_cov(x, context))

    def init_context(self, x):
        return x.var(axis=0) + (x.var(axis=0) == 0)

    def embed(self, x):
        return x

    def simulate(self, comp, n, rng, **_):
        chol = np.linalg.cholesky(comp.sigma)
        z = rng.standard_normal((n, comp.mu.size))
        return comp.mu + z @ chol.T

    # serialisation -----------------------------------------------------
    def theta_to_json(self, comps):
        return {"kernel": self.name,
                "mu": [c.mu.tolist() for c in comps],
                "sigma": [c.sigma.tolist() for c in comps]}

    def theta_from_json(self, obj):
        return [GaussianComponent(np.asarray(m, dtype=float), np.asarray(s, dtype=float))
                for m, s in zip(obj["mu"], obj["sigma"])]

    def flat_names(self, comp):
        r = comp.mu.size
        names = [f"mu_{j + 1}" for j in range(r)]
        names += [f"sigma_{i + 1}{j + 1}" for i, j in zip(*np.triu_indices(r))]
        return names


class CategoricalKernel:
    """Latent class kernel: independent categorical variables given the class."""

    name = "categorical"
    component_type = CategoricalComponent

    def prepare(self, raw, hyper):
        y = np.asarray(raw)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] == 0:
            raise DataError("categorical data must be a non-empty (N, r) array")
        if y.shape[1] != len(hyper.n_categories):
            raise DataError(f"data has {y.shape[1]} variables, prior expects {len(hyper.n_categories)}")
        if not np.all(y == np.round(y)):
            raise DataError("categories must be integers")
        y = y.astype(np.int64)
        for j, d in enumerate(hyper.n_categories):
            if y[:, j].min() < 1 or y[:, j].max() > d:
                raise DataError(f"variable {j + 1}: categories must lie in 1..{d}")
        return y - 1

    def default_hyper(self, y, n_categories=None):
        y = np.asarray(y)
        if n_categories is None:
            n_categories = tuple(int(v) for v in np.max(y, axis=0))
        return CategoricalHyper(n_categories)

    def loglik(self, y, comp):
        y = np.atleast_1d(np.asarray(y))
        if y.size != len(comp.pi):
            raise DataError("observation length does not match the number of variables")
        total = 0.0
        for j, (v, p) in enumerate(zip(y, comp.pi)):
            if v != int(v) or not 1 <= v <= p.size:
                raise DataError(f"variable {j + 1}: category {v} outside 1..{p.size}")
            total += np.log(p[int(v) - 1])
        return float(total)

    def loglik_matrix(self, y, comps):
        ll = np.zeros((y.shape[0], len(comps)))
        with np.errstate(divide="ignore"):
            for j in range(y.shape[1]):
                logp = np.log(np.stack([c.pi[j] for c in comps]))  # (K, D_j)
                ll += logp[:, y[:, j]].T
        return ll

    def draw_posterior(self, y, comp, hyper, rng):
        if y.shape[0] == 0:
            raise ContractViolation("posterior draw requested for an empty component")
        pi = [draw_dirichlet(a + np.bincount(y[:, j], minlength=a.size), rng)
              for j, a in enumerate(hyper.alpha)]
        return CategoricalComponent(pi)

    def draw_prior(self, hyper, rng):
        return CategoricalComponent([draw_dirichlet(a, rng) for a in hyper.alpha])

    def update_shared_hyper(self, filled, hyper, rng):
        if len(filled) == 0:
            raise ContractViolation("shared hyperparameter update needs a filled component")
        return hyper

    def fit_component(self, y, hyper):
        # add-one smoothed category frequencies
        return CategoricalComponent([
            (np.bincount(y[:, j], minlength=d) + 1.0) / (y.shape[0] + d)
            for j, d in enumerate(hyper.n_categories)])

    def init_context(self, y):
        return None

    def embed(self, y, hyper):
        return np.hstack([np.eye(d)[y[:, j]] for j, d in enumerate(hyper.n_categories)])

    def simulate(self, comp, n, rng, **_):
        return np.column_stack([
            rng.choice(p.size, size=n, p=p) for p in comp.pi])

    def theta_to_json(self, comps):
        return {"kernel": self.name, "pi": [[p.tolist() for p in c.pi] for c in comps]}

    def theta_from_json(self, obj):
        return [CategoricalComponent([np.asarray(p, dtype=float) for p in c]) for c in obj["pi"]]

    def flat_names(self, comp):
        return [f"pi_{j + 1}_{l + 1}" for j, p in enumerate(comp.pi) for l in range(p.size)]


class MarkovKernel:
    """First-order time-homogeneous Markov chain kernel for categorical sequences."""

    name = "markov"
    component_type = MarkovChainComponent

    def prepare(self, raw, hyper):
        if isinstance(raw, np.ndarray) and raw.ndim == 3:
            if raw.shape[1:] != (hyper.L, hyper.L):
                raise DataError("transition count tensor does not match L")
            return raw.astype(np.int64)
        seqs = list(raw)
        if len(seqs) == 0:
            raise DataError("no sequences supplied")
        return np.stack([mc_count_transitions(s, hyper.L) for s in seqs])

    def default_hyper(self, seqs, L=None, persistence_prior=0.0):
        if L is None:
            L = int(max(np.max(s) for s in seqs))
        return MarkovHyper(L, zero_persistence_prior(L, persistence_prior))

    def loglik(self, y, comp):
        counts = mc_count_transitions(y, comp.xi.shape[0])
        return float(self.loglik_matrix(counts[None], [comp])[0, 0])

    def loglik_matrix(self, counts, comps):
        n = counts.shape[0]
        flat = counts.reshape(n, -1).astype(float)
        xi = np.stack([c.xi.ravel() for c in comps])  # (K, L*L)
        zero = xi <= 0
        with np.errstate(divide="ignore"):
            logxi = np.where(zero, 0.0, np.log(np.where(zero, 1.0, xi)))
        ll = flat @ logxi.T
        # 0 * log 0 := 0, but a transition observed under zero probability is impossible
        impossible = (flat > 0).astype(float) @ zero.T.astype(float) > 0
        ll[impossible] = -np.inf
        return ll

    def draw_posterior(self, counts, comp, hyper, rng):
        if counts.shape[0] == 0:
            raise ContractViolation("posterior draw requested for an empty component")
        total = counts.sum(axis=0)
        xi = np.stack([draw_dirichlet(hyper.delta[j] + total[j], rng) for j in range(hyper.L)])
        return MarkovChainComponent(xi)

    def draw_prior(self, hyper, rng):
        return MarkovChainComponent(
            np.stack([draw_dirichlet(hyper.delta[j], rng) for j in range(hyper.L)]))

    def update_shared_hyper(self, filled, hyper, rng):
        if len(filled) == 0:
            raise ContractViolation("shared hyperparameter update needs a filled component")
        return hyper

    def fit_component(self, counts, hyper):
        total = counts.sum(axis=0).astype(float)
        rows = total.sum(axis=1, keepdims=True)
        prior = hyper.delta / hyper.delta.sum(axis=1, keepdims=True)
        xi = np.where(rows > 0, total / np.where(rows > 0, rows, 1.0), prior)
        return MarkovChainComponent(xi)

    def init_context(self, counts):
        return None

    def embed(self, counts, hyper):
        rows = counts.sum(axis=2, keepdims=True)
        freq = counts / np.where(rows > 0, rows, 1)
        return freq.reshape(counts.shape[0], -1)

    def simulate(self, comp, n, rng, length=10, **_):
        L = comp.xi.shape[0]
        cum = np.cumsum(comp.xi, axis=1)
        seqs = np.empty((n, length), dtype=np.int64)
        seqs[:, 0] = rng.integers(0, L, size=n)
        for t in range(1, length):
            u = rng.random(n) * cum[seqs[:, t - 1], -1]
            seqs[:, t] = np.minimum((cum[seqs[:, t - 1]] <= u[:, None]).sum(axis=1), L - 1)
        return seqs + 1

    def theta_to_json(self, comps):
        return {"kernel": self.name, "xi": [c.xi.tolist() for c in comps]}

    def theta_from_json(self, obj):
        return [MarkovChainComponent(np.asarray(x, dtype=float)) for x in obj["xi"]]

    def flat_names(self, comp):
        L = comp.xi.shape[0]
        return [f"xi_{j + 1}{l + 1}" for j in range(L) for l in range(L)]


KERNELS = {
    "gaussian": GaussianKernel(),
    "categorical": CategoricalKernel(),
    "markov": MarkovKernel(),
}


def get_kernel(name):
    try:
        return KERNELS[name]
    except KeyError:
        raise ConfigError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None


def kernel_for(obj):
    """Kernel instance matching a component or hyperparameter record."""
    if isinstance(obj, (GaussianComponent, GaussianHyper)):
        return KERNELS["gaussian"]
    if isinstance(obj, (CategoricalComponent, CategoricalHyper)):
        return KERNELS["categorical"]
    if isinstance(obj, (MarkovChainComponent, MarkovHyper)):
        return KERNELS["markov"]
    raise TypeError(f"no kernel for {type(obj).__name__}")


# functional-style entry points ---------------------------------------------

def kernel_loglik(y, theta):
    """Log-likelihood of a single raw observation under one component."""
    return kernel_for(theta).loglik(y, theta)


def kernel_draw_posterior(assigned, theta, hyper, rng):
    """Conditional posterior draw given prepared data assigned to the component."""
    return kernel_for(hyper).draw_posterior(assigned, theta, hyper, rng)


def kernel_draw_prior(hyper, rng):
    return kernel_for(hyper).draw_prior(hyper, rng)


def kernel_update_shared_hyper(filled, hyper, rng):
    return kernel_for(hyper).update_shared_hyper(filled, hyper, rng)
