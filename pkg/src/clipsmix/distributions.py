"""Random draws and log-densities used by the samplers.

Matrix-variate conventions follow the mixture-modelling literature rather than
the textbook degrees-of-freedom form:

* ``W(alpha, A)`` has density proportional to
  ``|X|^(alpha - (r+1)/2) exp(-tr(A X))`` and mean ``alpha * inv(A)``.
  It equals the textbook Wishart with ``df = 2*alpha`` and
  ``scale = inv(2*A)``.
* ``W^-1(alpha, A)`` is the law of ``inv(X)`` for ``X ~ W(alpha, A)``; its mean
  is ``A / (alpha - (r+1)/2)``.

Gamma distributions use the shape/rate convention.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.special import betaln, gammaln

from .errors import InvalidParameterError, NotPositiveDefiniteError

RandomSource = np.random.Generator

_SEED_LIMIT = 2 ** 64


def make_rng(seed: int) -> RandomSource:
    """Return a PCG64 generator for an unsigned 64-bit ``seed``."""
    seed = int(seed)
    if not 0 <= seed < _SEED_LIMIT:
        raise InvalidParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def spd_cholesky(a, name="matrix") -> np.ndarray:
    """Lower Cholesky factor of ``a`` after checking symmetry (atol 1e-10)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPositiveDefiniteError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError(f"{name} has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from None


def is_spd(a) -> bool:
    try:
        spd_cholesky(a)
    except NotPositiveDefiniteError:
        return False
    return True


def _symmetrize(a):
    return 0.5 * (a + a.T)


def draw_gamma(shape: float, rate: float, rng: RandomSource) -> float:
    """Gamma(shape, rate) draw; ``shape == 0`` is the point mass at zero."""
    if shape < 0 or not np.isfinite(shape):
        raise InvalidParameterError(f"gamma shape must be >= 0, got {shape}")
    if not rate > 0:
        raise InvalidParameterError(f"gamma rate must be > 0, got {rate}")
    if shape == 0:
        return 0.0
    return float(rng.standard_gamma(shape)) / rate


def _log_gamma_variates(alpha, rng):
    # Small shapes underflow to exactly 0 in double precision, so draw on the
    # log scale: G(a) = G(a + 1) * U^(1/a).
    alpha = np.asarray(alpha, dtype=float)
    out = np.full(alpha.shape, -np.inf)
    pos = alpha > 0
    a = alpha[pos]
    small = a < 1.0
    g = rng.standard_gamma(np.where(small, a + 1.0, a))
    logg = np.log(g)
    if np.any(small):
        u = rng.random(int(small.sum()))
        logg[small] += np.log(u) / a[small]
    out[pos] = logg
    return out


def draw_dirichlet(alpha, rng: RandomSource) -> np.ndarray:
    """Dirichlet draw by normalised independent gammas.

    Entries with ``alpha_j == 0`` are exactly zero in the result.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size == 0:
        raise InvalidParameterError("dirichlet parameter must be a non-empty vector")
    if np.any(alpha < 0) or not np.all(np.isfinite(alpha)):
        raise InvalidParameterError(f"dirichlet parameters must be finite and >= 0, got {alpha}")
    if not np.any(alpha > 0):
        raise InvalidParameterError("dirichlet parameter vector is all zero")
    logg = _log_gamma_variates(alpha, rng)
    w = np.exp(logg - logg.max())
    return w / w.sum()


def draw_categorical(weights, rng: RandomSource) -> int:
    """Draw an index in ``1..K`` with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if np.any(w < 0) or not total > 0 or not np.isfinite(total):
        raise InvalidParameterError(f"categorical weights must be >= 0 with positive sum, got {w}")
    u = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
    # guard against u landing on the rounding tail of the cumsum
    idx = min(idx, w.size - 1)
    while w[idx] == 0:
        idx -= 1
    return idx + 1


def draw_categorical_rows(logw, rng: RandomSource) -> np.ndarray:
    """One categorical draw per row of an (N, K) array of log-weights.

    Returns 0-based indices. Rows whose log-weights are all ``-inf`` must be
    screened by the caller.
    """
    logw = np.asarray(logw, dtype=float)
    p = np.exp(logw - logw.max(axis=1, keepdims=True))
    c = np.cumsum(p, axis=1)
    u = rng.random(logw.shape[0]) * c[:, -1]
    idx = (c <= u[:, None]).sum(axis=1)
    return np.minimum(idx, logw.shape[1] - 1)


def draw_mvn(mean, cov, rng: RandomSource) -> np.ndarray:
    """``mean + L z`` with ``L`` the lower Cholesky factor of ``cov``."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    chol = spd_cholesky(cov, "covariance")
    if chol.shape[0] != mean.size:
        raise InvalidParameterError("mean and covariance dimensions differ")
    z = rng.standard_normal(mean.size)
    return mean + chol @ z


def _bartlett_factor(alpha, r, rng):
    # Lower-triangular T with T T' ~ textbook Wishart(df=2*alpha, I_r).
    df = 2.0 * alpha
    t = np.zeros((r, r))
    t[np.diag_indices(r)] = np.sqrt(rng.chisquare(df - np.arange(r)))
    rows, cols = np.tril_indices(r, -1)
    t[rows, cols] = rng.standard_normal(rows.size)
    return t


def _check_wishart_args(alpha, scale):
    chol = spd_cholesky(scale, "Wishart scale")
    r = chol.shape[0]
    if not alpha > (r - 1) / 2.0:
        raise InvalidParameterError(f"Wishart alpha must exceed (r-1)/2 = {(r - 1) / 2}, got {alpha}")
    return chol, r


def draw_wishart(alpha: float, scale, rng: RandomSource) -> np.ndarray:
    """Draw from ``W(alpha, A)`` with mean ``alpha * inv(A)``."""
    chol_a, r = _check_wishart_args(alpha, scale)
    t = _bartlett_factor(alpha, r, rng)
    # inv(2A) = M M' with M = inv(L_A)' / sqrt(2)
    x = linalg.solve_triangular(chol_a.T, t, lower=False) / np.sqrt(2.0)
    return _symmetrize(x @ x.T)


def draw_inv_wishart(alpha: float, scale, rng: RandomSource) -> np.ndarray:
    """Draw from ``W^-1(alpha, A)`` with mean ``A / (alpha - (r+1)/2)``.

    Uses the same random stream as :func:`draw_wishart`, so with equal seeds the
    result is the inverse of the corresponding Wishart draw.
    """
    chol_a, r = _check_wishart_args(alpha, scale)
    t = _bartlett_factor(alpha, r, rng)
    z = linalg.solve_triangular(t, chol_a.T, lower=True)
    return _symmetrize(2.0 * z.T @ z)


def bnb_log_pmf(k, a: float, b: float, c: float):
    """Log pmf of the beta-negative-binomial BNB(a, b, c), mean ``a c / (b - 1)``.

    ``p(k) = Gamma(a+k) / (Gamma(a) k!) * B(a+b, k+c) / B(b, c)`` for k = 0, 1, ...
    """
    if not (a > 0 and b > 0 and c > 0):
        raise InvalidParameterError(f"BNB parameters must be positive, got {(a, b, c)}")
    k = np.asarray(k, dtype=float)
    ks = np.maximum(k, 0.0)
    out = (gammaln(a + ks) - gammaln(a) - gammaln(ks + 1.0)
           + betaln(a + b, ks + c) - betaln(b, c))
    out = np.where(k < 0, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def mvn_logpdf_rows(x, mean, cov) -> np.ndarray:
    """Multivariate normal log-density of each row of ``x``."""
    x = np.atleast_2d(x)
    chol = spd_cholesky(cov, "covariance")
    z = linalg.solve_triangular(chol, (x - mean).T, lower=True)
    r = chol.shape[0]
    return (-0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(chol)))
            - 0.5 * r * np.log(2 * np.pi))
