"""Bayesian mixture clustering with identification of posterior draws by
clustering in the point-process representation."""

from .clips import (
    ClipsResult, FunctionalSpec, check_permutations, cluster_ppr, compare_partition,
    estimate_kplus, extract_functional, kplus_posterior, relabel, run_clips, stratify,
    summarize,
)
from .distributions import make_rng
from .errors import (
    ClipsError, ConfigError, ContractViolation, DataError, EmptyStratumError,
    InvalidParameterError, NotPositiveDefiniteError, NumericalError,
)
from .kernels import (
    CategoricalComponent, CategoricalHyper, GaussianComponent, GaussianHyper,
    MarkovChainComponent, MarkovHyper, get_kernel, mc_count_transitions,
)
from .kmeans import KMeansResult, assign, kmeans_fit
from .sampler import ChainState, DrawRecord, DrawStore, MixtureConfig, run_chain
from .store import read_store, write_store

__version__ = "0.1.0"
