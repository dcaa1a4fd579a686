"""Gibbs sampling with data augmentation for finite mixtures.

Three modes for the number of components:

* ``fixed``: K known; empty components are redrawn from the prior each sweep.
* ``fixed_sparse``: same sweep with a large K and a small static gamma_K so
  superfluous components empty out.
* ``bnb``: mixture of finite mixtures with ``K - 1 ~ BNB(a, b, c)``, sampled
  with the telescoping scheme (sample K given the partition, then append
  empty components drawn from the prior).

Sweep order: classify -> weights -> components/hyper -> [K -> empties].
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, logsumexp

from .distributions import (
    bnb_log_pmf, draw_categorical, draw_categorical_rows, draw_dirichlet, make_rng,
)
from .errors import ConfigError, ContractViolation, DataError, NumericalError
from .kernels import get_kernel
from .kmeans import kmeans_fit

K_MODES = ("fixed", "fixed_sparse", "bnb")
GAMMA_RULES = ("static", "dynamic")
TRUNCATION_TAIL = 1e-10
TRUNCATION_LIMIT = 10 ** 6


@dataclass
class MixtureConfig:
    kernel: str = "gaussian"
    k_mode: str = "bnb"
    K: int = 4                      # fixed / fixed_sparse; ignored under bnb
    bnb: tuple = (1.0, 4.0, 3.0)    # K - 1 ~ BNB(a, b, c)
    gamma_rule: str = "dynamic"
    gamma: float = 0.5              # gamma_K under static, gamma under dynamic
    M0: int = 1000
    M: int = 1000
    thin: int = 1
    seed: int = 0
    init: str = "kmeans"
    init_K: int | None = None       # starting K under bnb (defaults to K)
    hyper: dict = field(default_factory=dict)
    random_permutation: bool = False

    def __post_init__(self):
        self.bnb = tuple(float(v) for v in self.bnb)
        self.validate()

    def validate(self):
        get_kernel(self.kernel)
        if self.k_mode not in K_MODES:
            raise ConfigError(f"k_mode must be one of {K_MODES}, got {self.k_mode!r}")
        if self.gamma_rule not in GAMMA_RULES:
            raise ConfigError(f"gamma_rule must be one of {GAMMA_RULES}, got {self.gamma_rule!r}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if len(self.bnb) != 3 or min(self.bnb) <= 0:
            raise ConfigError(f"bnb parameters must be three positive numbers, got {self.bnb}")
        if self.M0 < 0 or self.M < 1 or self.thin < 1:
            raise ConfigError("need M0 >= 0, M >= 1 and thin >= 1")
        if self.K < 1:
            raise ConfigError(f"K must be positive, got {self.K}")
        if self.init not in ("kmeans", "random"):
            raise ConfigError(f"init must be 'kmeans' or 'random', got {self.init!r}")
        if self.init_K is not None and self.init_K < 1:
            raise ConfigError("init_K must be positive")

    @property
    def k_prior(self):
        return KPrior(self.k_mode == "bnb", self.bnb, self.K, self.gamma_rule, self.gamma)

    def gamma_K(self, K):
        return self.k_prior.gamma_K(K)

    def log_prior_K(self, K):
        return self.k_prior.log_prior(K)

    @property
    def start_K(self):
        if self.k_mode == "bnb" and self.init_K is not None:
            return self.init_K
        return self.K

    def to_dict(self):
        d = asdict(self)
        d["bnb"] = list(self.bnb)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "bnb" in d:
            d["bnb"] = tuple(d["bnb"])
        return cls(**d)


@dataclass(frozen=True)
class KPrior:
    """Prior on K together with the Dirichlet parameter rule (hashable)."""

    bnb_mode: bool
    bnb: tuple
    K: int
    gamma_rule: str
    gamma: float

    def gamma_K(self, K):
        if self.gamma_rule == "static":
            return self.gamma + 0.0 * np.asarray(K, dtype=float)
        return self.gamma / np.asarray(K, dtype=float)

    def log_prior(self, K):
        if not self.bnb_mode:
            return np.where(np.asarray(K) == self.K, 0.0, -np.inf)
        return bnb_log_pmf(np.asarray(K) - 1, *self.bnb)


@dataclass
class ChainState:
    K: int
    eta: np.ndarray
    theta: list
    hyper: object
    alloc: np.ndarray          # 0-based allocations
    init_fallback: bool = False

    @property
    def S(self):
        return self.alloc + 1

    @property
    def Nk(self):
        return np.bincount(self.alloc, minlength=self.K)

    @property
    def K_plus(self):
        return int(np.count_nonzero(self.Nk))


@dataclass
class DrawRecord:
    m: int
    K: int
    K_plus: int
    eta: np.ndarray
    theta: list
    S: np.ndarray              # 1-based

    @property
    def Nk(self):
        return np.bincount(self.S - 1, minlength=self.K)


@dataclass
class DrawStore:
    kernel: str
    config: dict
    records: list
    schema_version: int = 1

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------------------
# data and hyperparameters
# ---------------------------------------------------------------------------

def build_hyper(kernel, raw, options=None):
    options = dict(options or {})
    if kernel.name == "gaussian":
        return kernel.default_hyper(kernel.prepare(raw), **options)
    if kernel.name == "categorical":
        n_cat = options.get("n_categories")
        return kernel.default_hyper(np.asarray(raw), n_categories=n_cat)
    return kernel.default_hyper(raw, L=options.get("L"),
                                persistence_prior=options.get("persistence_prior", 0.0))


def _embedding(kernel, x, hyper):
    if kernel.name == "gaussian":
        return kernel.embed(x)
    return kernel.embed(x, hyper)


def _fit_context(kernel, x, hyper):
    return kernel.init_context(x) if kernel.name == "gaussian" else hyper


# ---------------------------------------------------------------------------
# sweep steps
# ---------------------------------------------------------------------------

def init_chain(x, config: MixtureConfig, hyper, rng) -> ChainState:
    """Initial state from a k-means partition with empirical component fits."""
    kernel = get_kernel(config.kernel)
    n = x.shape[0]
    K = config.start_K
    fallback = False
    if config.init == "kmeans" and n >= K:
        labels = kmeans_fit(_embedding(kernel, x, hyper), K, restarts=10, rng=rng).labels - 1
    else:
        fallback = config.init == "kmeans"
        labels = rng.integers(0, K, size=n)
    ctx = _fit_context(kernel, x, hyper)
    theta = []
    for k in range(K):
        members = x[labels == k]
        if members.shape[0] > 0:
            theta.append(kernel.fit_component(members, ctx))
        else:
            theta.append(kernel.draw_prior(hyper, rng))
    return ChainState(K=K, eta=np.full(K, 1.0 / K), theta=theta, hyper=hyper,
                      alloc=labels.astype(np.int64), init_fallback=fallback)


def step_classify(state, x, kernel, rng):
    with np.errstate(divide="ignore"):
        logw = kernel.loglik_matrix(x, state.theta) + np.log(state.eta)
    dead = ~np.isfinite(logw.max(axis=1))
    if np.any(dead):
        i = int(np.flatnonzero(dead)[0])
        raise NumericalError(f"observation {i + 1} has zero posterior weight under every component")
    state.alloc = draw_categorical_rows(logw, rng)
    return state


def step_weights(state, gamma_K, rng):
    state.eta = draw_dirichlet(gamma_K + state.Nk, rng)
    return state


def step_components(state, x, kernel, rng, redraw_empty=True):
    """Posterior draws for filled components, shared hyper, then empty components."""
    Nk = state.Nk
    filled = np.flatnonzero(Nk)
    for k in filled:
        state.theta[k] = kernel.draw_posterior(x[state.alloc == k], state.theta[k], state.hyper, rng)
    state.hyper = kernel.update_shared_hyper([state.theta[k] for k in filled], state.hyper, rng)
    if redraw_empty:
        for k in np.flatnonzero(Nk == 0):
            state.theta[k] = kernel.draw_prior(state.hyper, rng)
    return state


def k_log_posterior(Ks, counts, log_prior, gamma_fn):
    """Unnormalised log p(K | partition) for each K in ``Ks``.

    ``counts`` are the sizes of the filled clusters. The partition probability
    under a symmetric Dirichlet D_K(gamma_K) gives

        log p(K) + log K!/(K-K+)! + log G(K g)/G(K g + N) + sum_k log G(N_k + g)/G(g)

    with ``g = gamma_fn(K)``.
    """
    Ks = np.asarray(Ks, dtype=float)
    counts = np.asarray(counts, dtype=float)
    kp = counts.size
    n = counts.sum()
    g = np.asarray(gamma_fn(Ks), dtype=float)
    out = (np.asarray(log_prior(Ks.astype(np.int64)), dtype=float)
           + gammaln(Ks + 1) - gammaln(Ks - kp + 1)
           + gammaln(Ks * g) - gammaln(Ks * g + n)
           + (gammaln(counts[None, :] + g[:, None]) - gammaln(g)[:, None]).sum(axis=1))
    return np.where(Ks >= kp, out, -np.inf)


def k_posterior_table(counts, log_prior, gamma_fn, tail=TRUNCATION_TAIL, limit=TRUNCATION_LIMIT):
    """Support ``K+..K_max`` and log-probabilities, truncated adaptively.

    Terms are evaluated in chunks of doubling size until the last term is
    non-increasing and ``t(K_max) * K_max`` falls below ``tail`` times the
    accumulated mass.
    """
    kp = len(counts)
    if kp < 1:
        raise ContractViolation("sampling K needs at least one filled component")
    chunks = []
    lo, size = kp, 32
    while True:
        Ks = np.arange(lo, lo + size)
        chunks.append(k_log_posterior(Ks, counts, log_prior, gamma_fn))
        lp = np.concatenate(chunks)
        total = logsumexp(lp)
        if not np.isfinite(total):
            if Ks[-1] >= limit:
                raise NumericalError("K posterior has no mass below the truncation bound")
        elif lp[-1] <= lp[-2] and lp[-1] + math.log(Ks[-1]) < total + math.log(tail):
            break
        lo += size
        size *= 2
        if lo > limit:
            raise NumericalError(f"K posterior truncation exceeded {limit}")
    support = np.arange(kp, kp + lp.size)
    return support, lp - total


@lru_cache(maxsize=4096)
def _cached_table(prior: KPrior, counts: tuple):
    support, lp = k_posterior_table(counts, prior.log_prior, prior.gamma_K)
    return support, np.exp(lp - lp.max())


def step_sample_K(counts, prior: KPrior, rng):
    """Draw K given the sizes of the filled clusters.

    The conditional depends on the partition only through the multiset of
    cluster sizes, so tables are cached on the sorted sizes.
    """
    key = tuple(sorted(int(c) for c in np.asarray(counts)))
    support, w = _cached_table(prior, key)
    return int(support[draw_categorical(w, rng) - 1])


def step_add_empty(state, new_K, kernel, gamma_K, rng):
    """Compact filled components to 1..K+, append prior-drawn empties, redraw eta."""
    Nk = state.Nk
    filled = np.flatnonzero(Nk)
    kp = filled.size
    if new_K < kp:
        raise ContractViolation(f"new K={new_K} is below K+={kp}")
    remap = np.full(state.K, -1, dtype=np.int64)
    remap[filled] = np.arange(kp)
    state.alloc = remap[state.alloc]
    state.theta = [state.theta[k] for k in filled]
    state.theta += [kernel.draw_prior(state.hyper, rng) for _ in range(new_K - kp)]
    state.K = int(new_K)
    counts = np.concatenate([Nk[filled], np.zeros(new_K - kp, dtype=np.int64)])
    state.eta = draw_dirichlet(gamma_K + counts, rng)
    return state


def permute_labels(state, rng):
    perm = rng.permutation(state.K)   # new label of old component k is perm[k]
    inv = np.argsort(perm)
    state.theta = [state.theta[j] for j in inv]
    state.eta = state.eta[inv]
    state.alloc = perm[state.alloc]
    return state


def sweep(state, x, config, kernel, rng):
    step_classify(state, x, kernel, rng)
    step_weights(state, config.gamma_K(state.K), rng)
    telescoping = config.k_mode == "bnb"
    step_components(state, x, kernel, rng, redraw_empty=not telescoping)
    if telescoping:
        Nk = state.Nk
        new_K = step_sample_K(Nk[Nk > 0], config.k_prior, rng)
        step_add_empty(state, new_K, kernel, config.gamma_K(new_K), rng)
    if config.random_permutation:
        permute_labels(state, rng)
    return state


def _record(state, m):
    return DrawRecord(m=m, K=state.K, K_plus=state.K_plus, eta=state.eta.copy(),
                      theta=list(state.theta), S=state.S.copy())


def prepare_data(raw, config: MixtureConfig):
    kernel = get_kernel(config.kernel)
    if isinstance(raw, np.ndarray) and raw.size == 0 or (not isinstance(raw, np.ndarray) and len(raw) == 0):
        raise DataError("data set is empty")
    hyper = build_hyper(kernel, raw, config.hyper)
    return kernel, kernel.prepare(raw, hyper), hyper


def run_chain(raw, config: MixtureConfig, rng=None, progress=None) -> DrawStore:
    """Run ``M0 + thin * M`` sweeps and record every ``thin``-th post burn-in state."""
    if rng is None:
        rng = make_rng(config.seed)
    kernel, x, hyper = prepare_data(raw, config)
    state = init_chain(x, config, hyper, rng)
    records = []
    total = config.M0 + config.thin * config.M
    for m in range(1, total + 1):
        sweep(state, x, config, kernel, rng)
        if m > config.M0 and (m - config.M0) % config.thin == 0:
            records.append(_record(state, m))
        if progress is not None:
            progress(m, total)
    return DrawStore(kernel=kernel.name, config=config.to_dict(), records=records)
