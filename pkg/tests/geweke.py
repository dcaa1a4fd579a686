"""Getting-it-right checks at the mixture level.

Marginal-conditional simulator: draw (hyper, K, eta, theta, S) from the prior.
Successive-conditional simulator: alternate data generation given the
current state with one Gibbs sweep. Both target the prior, so the means of
any test statistic must agree. Standard errors for the sweep chain come from
batch means.
"""

import numpy as np

from clipsmix.distributions import draw_categorical, draw_dirichlet, draw_wishart
from clipsmix.kernels import (
    CategoricalHyper, GaussianHyper, MarkovHyper, get_kernel, zero_persistence_prior,
)
from clipsmix.sampler import ChainState, MixtureConfig, sweep

N_OBS = 10


def gaussian_hyper(r=2):
    return GaussianHyper(b0=np.zeros(r), B0=4.0 * np.eye(r), c0=2.5 + (r - 1) / 2,
                         C0=np.eye(r), g0=0.5 + (r - 1) / 2, G0=np.eye(r))


SETUPS = {
    "gaussian": dict(hyper=gaussian_hyper(2)),
    "categorical": dict(hyper=CategoricalHyper((2, 3))),
    "markov": dict(hyper=MarkovHyper(3, zero_persistence_prior(3)), length=6),
}


def _stats_gaussian(st):
    c = st.theta[0]
    s = c.sigma
    return {"mu_1": c.mu[0], "mu_2": c.mu[1], "mu_1^2": c.mu[0] ** 2,
            "log_s11": np.log(s[0, 0]), "log_s22": np.log(s[1, 1]),
            "corr": s[0, 1] / np.sqrt(s[0, 0] * s[1, 1]),
            "C0_11": st.hyper.C0[0, 0], "log_C0_22": np.log(st.hyper.C0[1, 1]),
            "eta_1": st.eta[0], "n_1": np.mean(st.alloc == 0)}


def _stats_categorical(st):
    pi = st.theta[0].pi
    return {"pi_11": pi[0][0], "pi_11^2": pi[0][0] ** 2, "pi_21": pi[1][0], "pi_22": pi[1][1],
            "pi2_21": st.theta[1].pi[1][0], "eta_1": st.eta[0], "n_1": np.mean(st.alloc == 0)}


def _stats_markov(st):
    xi = st.theta[0].xi
    return {"xi_12": xi[0, 1], "xi_12^2": xi[0, 1] ** 2, "xi_23": xi[1, 2], "xi_31": xi[2, 0],
            "xi2_21": st.theta[1].xi[1, 0], "eta_1": st.eta[0], "n_1": np.mean(st.alloc == 0)}


STATS = {"gaussian": _stats_gaussian, "categorical": _stats_categorical, "markov": _stats_markov}


def _prior_hyper(kernel_name, hyper, rng):
    if kernel_name != "gaussian":
        return hyper
    C0 = draw_wishart(hyper.g0, hyper.G0, rng)
    return GaussianHyper(hyper.b0, hyper.B0, hyper.c0, C0, hyper.g0, hyper.G0)


def prior_state(kernel_name, hyper, K, gamma, rng, n=N_OBS):
    kernel = get_kernel(kernel_name)
    h = _prior_hyper(kernel_name, hyper, rng)
    eta = draw_dirichlet(np.full(K, gamma), rng)
    theta = [kernel.draw_prior(h, rng) for _ in range(K)]
    alloc = np.array([draw_categorical(eta, rng) - 1 for _ in range(n)], dtype=np.int64)
    return ChainState(K=K, eta=eta, theta=theta, hyper=h, alloc=alloc)


def simulate_data(kernel_name, state, rng, length=6):
    kernel = get_kernel(kernel_name)
    n = state.alloc.size
    if kernel_name == "gaussian":
        x = np.empty((n, state.theta[0].mu.size))
    elif kernel_name == "categorical":
        x = np.empty((n, len(state.theta[0].pi)), dtype=np.int64)
    else:
        L = state.theta[0].xi.shape[0]
        x = np.empty((n, L, L), dtype=np.int64)
    for k in range(state.K):
        idx = np.flatnonzero(state.alloc == k)
        if idx.size == 0:
            continue
        sim = kernel.simulate(state.theta[k], idx.size, rng, length=length)
        if kernel_name == "markov":
            sim = kernel.prepare(list(sim), state.hyper)
        x[idx] = sim
    return x


def batch_se(values, batches=50):
    v = np.asarray(values)
    bm = v[: len(v) // batches * batches].reshape(batches, -1, *v.shape[1:]).mean(axis=1)
    return bm.std(axis=0, ddof=1) / np.sqrt(batches)


def geweke_zscores(kernel_name, reps=10_000, seed=0, K=2, gamma=1.0):
    """z-scores of marginal-conditional minus successive-conditional means."""
    setup = SETUPS[kernel_name]
    hyper = setup["hyper"]
    length = setup.get("length", 6)
    stats = STATS[kernel_name]
    kernel = get_kernel(kernel_name)
    cfg = MixtureConfig(kernel=kernel_name, k_mode="fixed", K=K, gamma_rule="static",
                        gamma=gamma, M0=0, M=1)
    rng = np.random.Generator(np.random.PCG64(seed))

    mc = [stats(prior_state(kernel_name, hyper, K, gamma, rng)) for _ in range(reps)]
    state = prior_state(kernel_name, hyper, K, gamma, rng)
    sc = []
    for _ in range(reps):
        x = simulate_data(kernel_name, state, rng, length)
        sweep(state, x, cfg, kernel, rng)
        sc.append(stats(state))
    names = list(mc[0])
    mc_arr = np.array([[d[n] for n in names] for d in mc])
    sc_arr = np.array([[d[n] for n in names] for d in sc])
    se = np.sqrt(mc_arr.var(axis=0, ddof=1) / reps + batch_se(sc_arr) ** 2)
    z = (mc_arr.mean(axis=0) - sc_arr.mean(axis=0)) / se
    return dict(zip(names, z))


def telescoping_zscores(reps=10_000, seed=0, gamma=0.5, bnb=(1.0, 4.0, 3.0)):
    """Same check for the full telescoping sweep (random K) with a 1-d Gaussian kernel."""
    hyper = gaussian_hyper(1)
    kernel = get_kernel("gaussian")
    cfg = MixtureConfig(kernel="gaussian", k_mode="bnb", bnb=bnb, gamma_rule="dynamic",
                        gamma=gamma, M0=0, M=1)
    ks = np.arange(1, 2000)
    pk = np.exp(cfg.log_prior_K(ks))
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw():
        K = int(ks[draw_categorical(pk, rng) - 1])
        return prior_state("gaussian", hyper, K, gamma / K, rng)

    def stats(st):
        mus = np.array([st.theta[k].mu[0] for k in st.alloc])
        logs = np.array([np.log(st.theta[k].sigma[0, 0]) for k in st.alloc])
        return [st.K, st.K_plus, float(st.K_plus == 1), np.log(st.hyper.C0[0, 0]),
                mus.mean(), logs.mean(), st.eta[st.alloc[0]]]

    names = ["K", "K_plus", "P(K_plus=1)", "log_C0", "mean_mu", "mean_log_sigma", "eta_S1"]
    mc = np.array([stats(draw()) for _ in range(reps)])
    state = draw()
    sc = []
    for _ in range(reps):
        x = simulate_data("gaussian", state, rng)
        sweep(state, x, cfg, kernel, rng)
        sc.append(stats(state))
    sc = np.array(sc)
    se = np.sqrt(mc.var(axis=0, ddof=1) / reps + batch_se(sc) ** 2)
    return dict(zip(names, (mc.mean(axis=0) - sc.mean(axis=0)) / se))
