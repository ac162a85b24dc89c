"""Bayesian parameter estimation with Metropolis-Hastings.

Observations follow y_obs = y(mu) + eps with eps ~ N(0, sigma_eps^2 I), and
the prior is uniform over a box, so up to a constant

    log pi(mu | y_obs) = -|y_obs - y(mu)|^2 / (2 sigma_eps^2)   (mu in box)
                       = -inf                                    (otherwise).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

__all__ = [
    "InverseProblem",
    "McmcConfig",
    "Chain",
    "ChainSummary",
    "ForwardModelError",
    "StuckChainWarning",
    "log_posterior",
    "metropolis_hastings",
    "chain_summary",
    "acceptance_probability",
]

log = logging.getLogger(__name__)


class ForwardModelError(RuntimeError):
    """The forward model raised; ``mu`` holds the offending parameter."""

    def __init__(self, message, mu):
        super().__init__(message)
        self.mu = np.asarray(mu)


class StuckChainWarning(RuntimeWarning):
    """No proposal was accepted."""


@dataclass(frozen=True)
class InverseProblem:
    """Forward model, data, noise level and uniform prior box.

    ``noise_variance`` is sigma_eps^2 (a variance, not a standard deviation).
    """

    forward: object
    y_obs: np.ndarray
    noise_variance: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_obs", np.atleast_1d(np.asarray(self.y_obs, dtype=float)))
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if not self.noise_variance > 0.0:
            raise ValueError("noise variance must be positive")
        if self.lower.shape != self.upper.shape or np.any(~(self.lower < self.upper)):
            raise ValueError("prior box must have lower < upper in every dimension")

    @property
    def dim(self):
        return len(self.lower)

    def in_support(self, mu):
        mu = np.asarray(mu, dtype=float)
        return bool(np.all((mu >= self.lower) & (mu <= self.upper)))

    @property
    def log_prior_density(self):
        return -float(np.sum(np.log(self.upper - self.lower)))


def log_posterior(mu, problem):
    """Unnormalized log posterior; -inf outside the prior box."""
    mu = np.asarray(mu, dtype=float)
    if not problem.in_support(mu):
        return -np.inf
    try:
        y = np.atleast_1d(np.asarray(problem.forward(mu), dtype=float))
    except Exception as exc:  # annotate and re-raise any model failure
        raise ForwardModelError(f"forward model failed at mu={mu.tolist()}: {exc}", mu) from exc
    r = problem.y_obs - y
    return float(-0.5 * (r @ r) / problem.noise_variance + problem.log_prior_density)


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, post-processing and proposal.

    proposal : {"uniform", "random-walk"}
        Independence proposal uniform over the prior box, or a Gaussian
        random walk with per-dimension standard deviations ``step``.
    """

    n_mc: int = 10000
    n_burn_in: int = 500
    n_thin: int = 4
    proposal: str = "uniform"
    step: tuple | None = None
    seed: int = 0
    initial: tuple | None = None

    def __post_init__(self):
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        if not 0 <= self.n_burn_in < self.n_mc:
            raise ValueError("need 0 <= n_burn_in < n_mc")
        if self.n_thin < 1:
            raise ValueError("n_thin must be >= 1")
        if self.proposal not in ("uniform", "random-walk"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        if self.proposal == "random-walk" and self.step is None:
            raise ValueError("random-walk proposal needs a step vector")

    @property
    def n_kept(self):
        return (self.n_mc - self.n_burn_in) // self.n_thin

    def to_dict(self):
        return {
            "n_mc": self.n_mc,
            "n_burn_in": self.n_burn_in,
            "n_thin": self.n_thin,
            "proposal": self.proposal,
            "step": None if self.step is None else list(self.step),
            "seed": self.seed,
            "initial": None if self.initial is None else list(self.initial),
        }


@dataclass
class Chain:
    """Raw Markov chain and its post-processed samples.

    ``samples[j]`` is the state after iteration j (j = 0 .. n_mc - 1);
    ``accepted[j]`` tells whether that iteration moved.
    """

    samples: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    config: McmcConfig
    kept: np.ndarray = field(init=False)

    def __post_init__(self):
        c = self.config
        # keep n_kept samples: burn-in dropped, then every n_thin-th
        start = c.n_burn_in + c.n_thin - 1
        self.kept = self.samples[start : start + c.n_thin * c.n_kept : c.n_thin]

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted))

    @property
    def n_accepted(self):
        return int(np.sum(self.accepted))


def metropolis_hastings(problem, config):
    """Run one Metropolis-Hastings chain.

    Both proposals are symmetric or state-independent with a uniform
    target-support density, so the acceptance probability reduces to
    min(1, pi(mu') / pi(mu)).
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = problem.lower, problem.upper
    p = problem.dim
    if config.initial is not None:
        mu = np.asarray(config.initial, dtype=float)
        if mu.shape != (p,) or not problem.in_support(mu):
            raise ValueError("initial point must lie in the prior box")
    else:
        mu = 0.5 * (lo + hi)
    step = None if config.step is None else np.broadcast_to(np.asarray(config.step, dtype=float), (p,))
    lp = log_posterior(mu, problem)
    samples = np.empty((config.n_mc, p))
    trace = np.empty(config.n_mc)
    accepted = np.zeros(config.n_mc, dtype=bool)
    for j in range(config.n_mc):
        if config.proposal == "uniform":
            cand = lo + rng.random(p) * (hi - lo)
        else:
            cand = mu + step * rng.standard_normal(p)
        u = rng.random()
        if problem.in_support(cand):
            lp_c = log_posterior(cand, problem)
            if u < acceptance_probability(lp, lp_c):
                mu, lp = cand, lp_c
                accepted[j] = True
        samples[j] = mu
        trace[j] = lp
    if not accepted.any():
        warnings.warn(f"no proposal accepted in {config.n_mc} iterations", StuckChainWarning, stacklevel=2)
    log.info("MH chain: %d iterations, acceptance %.3f", config.n_mc, accepted.mean())
    return Chain(samples, trace, accepted, config)


def acceptance_probability(lp_current, lp_candidate):
    """min(1, exp(lp_candidate - lp_current)) with -inf handled."""
    if np.isnan(lp_candidate) or lp_candidate == -np.inf:
        return 0.0
    if lp_current == -np.inf:
        return 1.0
    return float(np.exp(min(0.0, lp_candidate - lp_current)))


@dataclass(frozen=True)
class ChainSummary:
    """Per-dimension statistics of the kept samples and KDE curves."""

    mean: np.ndarray
    std: np.ndarray
    covariance: np.ndarray
    quantiles: dict  # {0.05: array, 0.5: array, 0.95: array}
    kde_grid: list
    kde_density: list
    acceptance_rate: float


def _kde(x, lo, hi, n_grid):
    grid = np.linspace(lo, hi, n_grid)
    if np.ptp(x) == 0.0:
        # all samples equal: a unit-mass spike on the nearest grid cell
        dens = np.zeros(n_grid)
        i = int(np.argmin(np.abs(grid - x[0])))
        w = grid[1] - grid[0] if n_grid > 1 else 1.0
        dens[i] = 1.0 / w if 0 < i < n_grid - 1 else 2.0 / w
        return grid, dens
    return grid, gaussian_kde(x, bw_method="silverman")(grid)


def chain_summary(chain, n_grid=200, bounds=None):
    """Mean, std, covariance, 5/50/95% quantiles and per-dimension KDEs.

    The KDE grid spans ``bounds`` (lower, upper) if given, otherwise the
    sample range padded by three kernel bandwidths.
    """
    x = np.asarray(chain.kept)
    if len(x) == 0:
        raise ValueError("no kept samples to summarize")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros(x.shape[1])
    cov = np.atleast_2d(np.cov(x, rowvar=False)) if len(x) > 1 else np.zeros((x.shape[1],) * 2)
    qs = {q: np.quantile(x, q, axis=0) for q in (0.05, 0.5, 0.95)}
    grids, dens = [], []
    for i in range(x.shape[1]):
        xi = x[:, i]
        if bounds is not None:
            lo, hi = bounds[0][i], bounds[1][i]
        else:
            pad = 3.0 * (std[i] * len(xi) ** (-0.2) if std[i] > 0 else 1e-12 * max(1.0, abs(xi[0])))
            lo, hi = xi.min() - pad, xi.max() + pad
        g, d = _kde(xi, lo, hi, n_grid)
        grids.append(g)
        dens.append(d)
    return ChainSummary(mean, std, cov, qs, grids, dens, chain.acceptance_rate)
