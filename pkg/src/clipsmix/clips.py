"""Identification of mixture posterior draws by clustering in the point-process
representation.

Pipeline: K+ posterior -> estimate K+ -> keep draws with that many filled
components -> functional of each component draw -> k-means on all component
draws -> per-iteration classification sequences -> drop non-permutations ->
relabel -> summaries and modal partition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .distributions import make_rng
from .errors import ConfigError, ContractViolation, EmptyStratumError
from .kernels import get_kernel
from .kmeans import kmeans_fit
from .sampler import DrawRecord, DrawStore

FUNCTIONALS = ("full_parameter", "gaussian_means", "markov_persistence", "custom")
DEFAULT_FUNCTIONAL = {"gaussian": "gaussian_means", "categorical": "full_parameter",
                      "markov": "markov_persistence"}


@dataclass
class FunctionalSpec:
    selector: str = "default"
    indices: tuple = ()        # 0-based positions in the flattened parameter vector
    clr: bool = False          # centred log-ratio for simplex-valued parameters

    @classmethod
    def parse(cls, text, clr=False):
        """``name`` or ``custom:i,j,...`` (0-based indices)."""
        text = (text or "default").strip()
        if text.startswith("custom"):
            _, _, rest = text.partition(":")
            try:
                idx = tuple(int(v) for v in rest.split(",") if v.strip())
            except ValueError:
                raise ConfigError(f"bad custom functional {text!r}") from None
            return cls("custom", idx, clr)
        return cls(text, (), clr)

    def resolve(self, kernel_name):
        sel = DEFAULT_FUNCTIONAL[kernel_name] if self.selector == "default" else self.selector
        if sel not in FUNCTIONALS:
            raise ConfigError(f"unknown functional {sel!r}; choose from {FUNCTIONALS}")
        if sel == "gaussian_means" and kernel_name != "gaussian":
            raise ConfigError("gaussian_means needs the gaussian kernel")
        if sel == "markov_persistence" and kernel_name != "markov":
            raise ConfigError("markov_persistence needs the markov kernel")
        if sel == "custom" and len(self.indices) == 0:
            raise ConfigError("custom functional needs at least one index")
        return sel


@dataclass
class ClassificationSequence:
    rho: np.ndarray
    is_permutation: bool


@dataclass
class ClipsResult:
    K_hat_plus: int
    kplus_posterior: dict
    nu: float
    M_strat: int
    M_nu: int
    functional: str
    identified_store: DrawStore
    summaries: list
    modal_partition: np.ndarray | None
    points: np.ndarray = field(repr=False, default=None)
    ppr_rows: np.ndarray = field(repr=False, default=None)
    group_labels: np.ndarray = field(repr=False, default=None)
    names: list = field(default_factory=list)

    def to_json(self):
        return {
            "K_hat_plus": self.K_hat_plus,
            "kplus_posterior": {str(k): v for k, v in self.kplus_posterior.items()},
            "M_strat": self.M_strat,
            "M_nu": self.M_nu,
            "nu": self.nu,
            "functional": self.functional,
            "n_identified": len(self.identified_store.records),
            "summaries": self.summaries,
        }


# ---------------------------------------------------------------------------
# K+ and stratification
# ---------------------------------------------------------------------------

def kplus_posterior(store) -> dict:
    ks = np.array([r.K_plus for r in store.records])
    if ks.size == 0:
        raise ContractViolation("empty draw store")
    vals, counts = np.unique(ks, return_counts=True)
    return {int(k): float(c) / ks.size for k, c in zip(vals, counts)}


def _mode(freq: dict) -> int:
    best = max(freq.values())
    return min(k for k, v in freq.items() if v == best)


def estimate_kplus(posterior: dict, store=None, min_fill_fraction: float = 0.0) -> int:
    """Posterior mode of K+ (ties to the smaller value).

    With ``min_fill_fraction > 0`` each draw is recounted using only components
    holding at least that fraction of the observations before taking the mode.
    """
    if not 0.0 <= min_fill_fraction < 1.0:
        raise ConfigError(f"min_fill_fraction must lie in [0, 1), got {min_fill_fraction}")
    if min_fill_fraction == 0.0:
        return _mode(posterior)
    if store is None:
        raise ContractViolation("min-fill estimate needs the draw store")
    recounted = []
    for r in store.records:
        nk = r.Nk
        recounted.append(int(np.count_nonzero(nk >= min_fill_fraction * r.S.size)))
    vals, counts = np.unique(recounted, return_counts=True)
    return _mode({int(k): int(c) for k, c in zip(vals, counts)})


def stratify(store, k_hat: int) -> DrawStore:
    """Keep draws with exactly ``k_hat`` filled components, dropping empty ones.

    Retained weights are not renormalised. Allocations are remapped to
    ``1..k_hat`` in the order of the original component labels.
    """
    if k_hat < 1:
        raise ConfigError("K+ estimate must be at least 1")
    kept = []
    for r in store.records:
        if r.K_plus != k_hat:
            continue
        filled = np.flatnonzero(r.Nk)
        remap = np.zeros(r.K + 1, dtype=np.int64)
        remap[filled + 1] = np.arange(1, k_hat + 1)
        kept.append(DrawRecord(m=r.m, K=k_hat, K_plus=k_hat, eta=r.eta[filled],
                               theta=[r.theta[k] for k in filled], S=remap[r.S]))
    if not kept:
        counts = {}
        for r in store.records:
            counts[r.K_plus] = counts.get(r.K_plus, 0) + 1
        raise EmptyStratumError(k_hat, counts)
    return DrawStore(kernel=store.kernel, config=store.config, records=kept,
                     schema_version=store.schema_version)


# ---------------------------------------------------------------------------
# functionals and clustering in the point-process representation
# ---------------------------------------------------------------------------

def _clr(p, eps=1e-12):
    lp = np.log(np.maximum(p, eps))
    return lp - lp.mean(axis=-1, keepdims=True)


def component_functional(comp, kernel_name, selector, indices=(), clr=False):
    if selector == "gaussian_means":
        return np.asarray(comp.mu, dtype=float)
    if selector == "markov_persistence":
        return np.diag(comp.xi).copy()
    if clr and kernel_name == "categorical":
        flat = np.concatenate([_clr(p) for p in comp.pi])
    elif clr and kernel_name == "markov":
        flat = _clr(comp.xi).ravel()
    else:
        flat = comp.flat()
    if selector == "full_parameter":
        return flat
    idx = np.asarray(indices, dtype=np.int64)
    if idx.min() < 0 or idx.max() >= flat.size:
        raise ConfigError(f"custom functional indices must lie in 0..{flat.size - 1}")
    return flat[idx]


def functional_names(comp, kernel_name, selector, indices=()):
    kernel = get_kernel(kernel_name)
    if selector == "gaussian_means":
        return [f"mu_{j + 1}" for j in range(comp.mu.size)]
    if selector == "markov_persistence":
        return [f"xi_{j + 1}{j + 1}" for j in range(comp.xi.shape[0])]
    names = kernel.flat_names(comp)
    if selector == "full_parameter":
        return names
    return [names[i] for i in indices]


def extract_functional(stratified, spec: FunctionalSpec):
    """(M*K+, d) matrix of functionals, iteration-major then component-minor."""
    sel = spec.resolve(stratified.kernel)
    rows = [component_functional(c, stratified.kernel, sel, spec.indices, spec.clr)
            for r in stratified.records for c in r.theta]
    return np.vstack(rows)


def cluster_ppr(points, k_hat: int, rng=None, restarts: int = 10) -> np.ndarray:
    """k-means group labels (1-based) for every component draw.

    No constraint forces draws from the same iteration into different groups.
    """
    if k_hat == 1:
        return np.ones(points.shape[0], dtype=np.int64)
    return kmeans_fit(points, k_hat, restarts=restarts, rng=rng).labels


def is_permutation(rho) -> bool:
    rho = np.asarray(rho)
    return bool(np.array_equal(np.sort(rho), np.arange(1, rho.size + 1)))


def check_permutations(labels, k_hat: int, M_strat: int):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size != k_hat * M_strat:
        raise ContractViolation(f"expected {k_hat * M_strat} labels, got {labels.size}")
    seqs = [ClassificationSequence(rho, is_permutation(rho))
            for rho in labels.reshape(M_strat, k_hat)]
    n_bad = sum(not s.is_permutation for s in seqs)
    return seqs, n_bad / M_strat


def inverse_permutation(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.int64)
    inv = np.empty_like(rho)
    inv[rho - 1] = np.arange(1, rho.size + 1)
    return inv


def relabel(stratified, sequences) -> DrawStore:
    """Reorder permutation draws: theta'_j = theta_{rho^-1(j)}, S'_i = rho(S_i)."""
    if len(sequences) != len(stratified.records):
        raise ContractViolation("classification sequences do not match the store")
    out = []
    for r, seq in zip(stratified.records, sequences):
        if not seq.is_permutation:
            continue
        rho = np.asarray(seq.rho, dtype=np.int64)
        inv = inverse_permutation(rho) - 1
        out.append(DrawRecord(m=r.m, K=r.K, K_plus=r.K_plus, eta=r.eta[inv],
                              theta=[r.theta[j] for j in inv], S=rho[r.S - 1]))
    return DrawStore(kernel=stratified.kernel, config=stratified.config, records=out,
                     schema_version=stratified.schema_version)


# ---------------------------------------------------------------------------
# summaries and partition comparison
# ---------------------------------------------------------------------------

def modal_partition(identified) -> np.ndarray:
    K = identified.records[0].K
    n = identified.records[0].S.size
    counts = np.zeros((n, K), dtype=np.int64)
    for r in identified.records:
        counts[np.arange(n), r.S - 1] += 1
    return np.argmax(counts, axis=1) + 1


def summarize(identified):
    """Per-cluster posterior mean and sd of eta and of every parameter, plus
    the modal partition."""
    if not identified.records:
        raise ContractViolation("no identified draws to summarise")
    kernel = get_kernel(identified.kernel)
    K = identified.records[0].K
    eta = np.array([r.eta for r in identified.records])
    summaries = []
    for j in range(K):
        flat = np.array([r.theta[j].flat() for r in identified.records])
        names = kernel.flat_names(identified.records[0].theta[j])
        summaries.append({
            "cluster": j + 1,
            "eta_mean": float(eta[:, j].mean()),
            "eta_sd": float(eta[:, j].std()),
            "mean": {n: float(v) for n, v in zip(names, flat.mean(axis=0))},
            "sd": {n: float(v) for n, v in zip(names, flat.std(axis=0))},
        })
    return summaries, modal_partition(identified)


def _encode(labels):
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return codes.ravel()


def confusion_matrix(partition, reference):
    a, b = _encode(partition), _encode(reference)
    cm = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(cm, (a, b), 1)
    return cm


def best_matching(cm):
    """Row->column matching maximising the matched counts; exhaustive up to 8 labels."""
    n = max(cm.shape)
    sq = np.zeros((n, n), dtype=cm.dtype)
    sq[:cm.shape[0], :cm.shape[1]] = cm
    if n <= 8:
        perms = np.array(list(itertools.permutations(range(n))))
        scores = sq[np.arange(n), perms].sum(axis=1)
        cols = perms[int(np.argmax(scores))]
    else:
        _, cols = linear_sum_assignment(-sq)
    return cols, int(sq[np.arange(n), cols].sum())


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def adjusted_rand_index(partition, reference) -> float:
    cm = confusion_matrix(partition, reference)
    n = cm.sum()
    idx = _comb2(cm).sum()
    a = _comb2(cm.sum(axis=1)).sum()
    b = _comb2(cm.sum(axis=0)).sum()
    expected = a * b / _comb2(n)
    top = 0.5 * (a + b)
    if top == expected:
        return 1.0
    return float((idx - expected) / (top - expected))


def compare_partition(partition, reference):
    """(accuracy after best label matching, adjusted Rand index)."""
    partition, reference = np.asarray(partition), np.asarray(reference)
    if partition.shape != reference.shape:
        raise ContractViolation("partitions differ in length")
    cm = confusion_matrix(partition, reference)
    _, matched = best_matching(cm)
    return matched / partition.size, adjusted_rand_index(partition, reference)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def run_clips(store, k_hat=None, min_fill_fraction=0.0, functional=None,
              restarts=10, seed=0) -> ClipsResult:
    spec = functional if isinstance(functional, FunctionalSpec) else FunctionalSpec.parse(functional)
    post = kplus_posterior(store)
    if k_hat is None:
        k_hat = estimate_kplus(post, store, min_fill_fraction)
    strat = stratify(store, int(k_hat))
    sel = spec.resolve(store.kernel)
    points = extract_functional(strat, spec)
    labels = cluster_ppr(points, k_hat, make_rng(seed), restarts=restarts)
    seqs, nu = check_permutations(labels, k_hat, len(strat.records))
    identified = relabel(strat, seqs)
    if identified.records:
        summaries, partition = summarize(identified)
    else:
        summaries, partition = [], None
    first = strat.records[0].theta[0]
    ppr_rows = np.array([(r.m, k + 1) for r in strat.records for k in range(k_hat)],
                        dtype=np.int64)
    return ClipsResult(
        K_hat_plus=int(k_hat), kplus_posterior=post, nu=float(nu),
        M_strat=len(strat.records), M_nu=len(strat.records) - len(identified.records),
        functional=sel, identified_store=identified, summaries=summaries,
        modal_partition=partition, points=points, ppr_rows=ppr_rows, group_labels=labels,
        names=functional_names(first, store.kernel, sel, spec.indices))
