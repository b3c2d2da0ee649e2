"""Conjugate building blocks.

Dirichlet-multinomial predictive/marginal for words, Normal-Inverse-Gamma
posterior and Student-t predictive for time stamps, stick-breaking weights and
auxiliary-variable resampling of DP concentration parameters.

The NIG convention used throughout::

    sigma^2 ~ InvGamma(shape, scale)      density ∝ sigma^(-2(shape+1)) exp(-scale / sigma^2)
    mu | sigma^2 ~ Normal(mu0, sigma^2 / lam)

so ``lam`` acts as a pseudo-count on the mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DirichletMultinomialStats:
    """Word counts of one topic under a symmetric Dirichlet(eta) prior."""

    vocab_size: int
    eta: float = 0.5
    counts: np.ndarray = None

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.vocab_size, dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.vocab_size,):
            raise ValueError("counts must have length vocab_size")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_words(cls, words, vocab_size, eta=0.5):
        counts = np.bincount(np.asarray(words, dtype=np.int64), minlength=vocab_size)
        return cls(vocab_size, eta, counts)

    def add(self, word, n=1):
        self.counts[word] += n

    def remove(self, word, n=1):
        if self.counts[word] < n:
            raise ValueError(f"cannot remove word {word}: count {self.counts[word]}")
        self.counts[word] -= n


@dataclass(frozen=True)
class NigParams:
    mu: float
    lam: float
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.lam > 0 and self.shape > 0 and self.scale > 0):
            raise ValueError(f"invalid NIG parameters {self}")


@dataclass
class GaussianSuffStats:
    n: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0

    @classmethod
    def from_data(cls, x):
        x = np.asarray(x, dtype=np.float64)
        return cls(int(x.size), float(x.sum()), float(np.dot(x, x)))

    def add(self, t):
        self.n += 1
        self.sum += t
        self.sum_sq += t * t

    def remove(self, t):
        if self.n <= 0:
            raise ValueError("no data to remove")
        self.n -= 1
        if self.n == 0:
            self.sum = 0.0
            self.sum_sq = 0.0
        else:
            self.sum -= t
            self.sum_sq -= t * t


@dataclass
class ConcentrationParam:
    value: float = 1.0
    a: float = 0.1
    b: float = 0.1

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("concentration must be positive")


# --- Dirichlet-multinomial ---------------------------------------------------


def dm_predictive(stats: DirichletMultinomialStats, word: int) -> float:
    if not 0 <= word < stats.vocab_size:
        raise IndexError(f"word {word} outside vocabulary of size {stats.vocab_size}")
    return (stats.counts[word] + stats.eta) / (stats.total + stats.vocab_size * stats.eta)


def dm_marginal_loglik(stats: DirichletMultinomialStats) -> float:
    """Log probability of the (ordered) word sequence summarised by ``stats``."""
    eta, V = stats.eta, stats.vocab_size
    c = stats.counts[stats.counts > 0]
    n = int(c.sum())
    if n == 0:
        return 0.0
    return float(
        gammaln(V * eta) - gammaln(n + V * eta) + np.sum(gammaln(c + eta) - gammaln(eta))
    )


def dm_log_predictive_block(base_counts, base_total, add_words, add_counts, eta, V):
    """log p(block | base) for a block of words given counts already in a topic."""
    base = np.asarray(base_counts, dtype=np.float64)[add_words]
    add = np.asarray(add_counts, dtype=np.float64)
    n_add = add.sum()
    return float(
        np.sum(gammaln(base + add + eta) - gammaln(base + eta))
        + gammaln(base_total + V * eta)
        - gammaln(base_total + n_add + V * eta)
    )


# --- Normal-Inverse-Gamma ----------------------------------------------------


def nig_update(prior: NigParams, stats: GaussianSuffStats) -> NigParams:
    if stats.n == 0:
        return prior
    lam, mu, shape, scale = _nig_post(
        prior.mu, prior.lam, prior.shape, prior.scale, stats.n, stats.sum, stats.sum_sq
    )
    return NigParams(mu, lam, shape, scale)


def t_logpdf(params: NigParams, t):
    """Log posterior-predictive (Student-t) density of new time stamps."""
    nu, loc, scl, lnorm = _t_params(params.mu, params.lam, params.shape, params.scale)
    z = (np.asarray(t, dtype=np.float64) - loc) / scl
    return lnorm - 0.5 * (nu + 1.0) * np.log1p(z * z / nu)


def t_predictive(params: NigParams, t):
    return np.exp(t_logpdf(params, t))


def nig_log_marginal(prior: NigParams, stats: GaussianSuffStats) -> float:
    """Log marginal likelihood of the data summarised by ``stats``."""
    return _nig_logml(
        prior.mu, prior.lam, prior.shape, prior.scale, stats.n, stats.sum, stats.sum_sq
    )


@njit(cache=True)
def _nig_post(mu0, lam0, shape0, scale0, n, s, ss):
    if n == 0:
        return lam0, mu0, shape0, scale0
    xbar = s / n
    centered = ss - n * xbar * xbar
    if centered < 0.0:
        centered = 0.0
    lam = lam0 + n
    mu = (lam0 * mu0 + s) / lam
    shape = shape0 + 0.5 * n
    d = xbar - mu0
    scale = scale0 + 0.5 * centered + 0.5 * lam0 * n * d * d / lam
    return lam, mu, shape, scale


@njit(cache=True)
def _t_params(mu, lam, shape, scale):
    """Student-t (dof, loc, scale, log normaliser) of the NIG predictive."""
    nu = 2.0 * shape
    scl = math.sqrt(scale * (lam + 1.0) / (shape * lam))
    lnorm = (
        math.lgamma(0.5 * (nu + 1.0))
        - math.lgamma(0.5 * nu)
        - 0.5 * math.log(nu * math.pi)
        - math.log(scl)
    )
    return nu, mu, scl, lnorm


@njit(cache=True)
def _nig_logml(mu0, lam0, shape0, scale0, n, s, ss):
    if n == 0:
        return 0.0
    lam, mu, shape, scale = _nig_post(mu0, lam0, shape0, scale0, n, s, ss)
    return (
        math.lgamma(shape)
        - math.lgamma(shape0)
        + shape0 * math.log(scale0)
        - shape * math.log(scale)
        + 0.5 * (math.log(lam0) - math.log(lam))
        - 0.5 * n * 1.8378770664093453
    )


# --- stick breaking & concentrations ----------------------------------------


def gem_weights(sticks):
    """Stick-breaking weights; returns ``(weights, remainder)``."""
    v = np.asarray(sticks, dtype=np.float64)
    if np.any((v <= 0) | (v >= 1)):
        raise ValueError("sticks must lie in (0, 1)")
    left = np.concatenate(([1.0], np.cumprod(1.0 - v)))
    weights = v * left[:-1]
    return weights, float(left[-1])


def resample_concentration(param: ConcentrationParam, group_sizes, n_tables, rng, n_iter=1):
    """Auxiliary-variable update of a DP concentration under a Gamma(a, b) prior.

    ``group_sizes`` are the customer counts of each restaurant sharing the
    concentration, ``n_tables`` the total number of tables across them. ``b``
    is a rate. Returns the new value (also stored on ``param``).
    """
    n = np.asarray(group_sizes, dtype=np.float64)
    n = n[n > 0]
    if n_tables < 1:
        raise ValueError("need at least one table")
    alpha = param.value
    for _ in range(n_iter):
        w = rng.beta(alpha + 1.0, n)
        s = rng.random(n.size) < n / (n + alpha)
        shape = param.a + n_tables - s.sum()
        rate = param.b - np.log(w).sum()
        alpha = rng.gamma(shape, 1.0 / rate)
    alpha = max(float(alpha), 1e-300)
    param.value = alpha
    return alpha
