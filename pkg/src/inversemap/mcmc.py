"""Adaptive random-walk Metropolis sampler targeting a problem's log joint.

The proposal is an isotropic Gaussian whose scalar scale is adapted
during burn-in only (Robbins-Monro drift of the log scale toward a
target acceptance rate) and frozen afterwards, so the kept portion of
the chain is a valid Markov chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .problems import Problem, log_joint


class ChainInitError(RuntimeError):
    """The chain's starting point has a non-finite log joint."""


@dataclass
class McmcConfig:
    n_total: int = 33000
    n_burn: int = 3000
    thin: int = 30
    init: Union[np.ndarray, str] = "prior-mean"
    target_accept: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not self.n_total > self.n_burn >= 0:
            raise ValueError("need n_total > n_burn >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class Chain:
    samples: np.ndarray  # (n_kept, d)
    acceptance_rate: float
    proposal_scale_history: np.ndarray  # (n_total,)


def rwm_sample(p: Problem, y: np.ndarray, cfg: McmcConfig) -> Chain:
    """Run one adaptive random-walk Metropolis chain for observation y.

    During burn-in the proposal adapts on two levels: a Robbins-Monro
    drift of a global scalar scale toward the target acceptance rate,
    and a periodically refreshed empirical covariance of the visited
    states (regularized toward the prior covariance) that shapes the
    proposal.  Both are frozen at the end of burn-in so the kept chain
    is a valid Markov chain.
    """
    rng = np.random.default_rng(cfg.seed)
    if isinstance(cfg.init, str):
        if cfg.init != "prior-mean":
            raise ValueError(f"unknown init {cfg.init!r}")
        x = p.prior_mean.astype(float).copy()
    else:
        x = np.asarray(cfg.init, dtype=float).copy()
    lp = float(log_joint(p, x, y))
    if not np.isfinite(lp):
        raise ChainInitError(f"log joint is {lp} at the chain start")

    d = p.d
    scale = 2.38 / np.sqrt(d)
    log_scale = np.log(scale)
    shape_chol = np.diag(p.prior_std.astype(float))
    history = np.empty(cfg.n_total)
    n_kept = (cfg.n_total - cfg.n_burn) // cfg.thin
    kept = np.empty((n_kept, d))
    burn_states = np.empty((cfg.n_burn, d))
    n_accept = 0
    k = 0
    refresh = max(200, 10 * d)
    for t in range(cfg.n_total):
        prop = x + scale * (shape_chol @ rng.standard_normal(d))
        lp_prop = float(log_joint(p, prop, y))
        log_ratio = lp_prop - lp
        if np.log(rng.random()) < log_ratio:
            x, lp = prop, lp_prop
            n_accept += 1
        if t < cfg.n_burn:
            burn_states[t] = x
            accept_prob = min(1.0, np.exp(min(log_ratio, 0.0)))
            log_scale += (t + 1) ** -0.6 * (accept_prob - cfg.target_accept)
            scale = np.exp(log_scale)
            if (t + 1) % refresh == 0:
                # shape the proposal by the visited-state covariance,
                # regularized toward the prior to stay full rank
                window = burn_states[max(0, t + 1 - 2000) : t + 1]
                cov = np.cov(window.T) + 1e-8 * np.diag(p.prior_std**2)
                shape_chol = np.linalg.cholesky(np.atleast_2d(cov))
        history[t] = scale
        if t >= cfg.n_burn and (t - cfg.n_burn) % cfg.thin == cfg.thin - 1:
            kept[k] = x
            k += 1
    assert k == n_kept
    return Chain(
        samples=kept,
        acceptance_rate=n_accept / cfg.n_total,
        proposal_scale_history=history,
    )


def _autocov(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = x - x.mean()
    n = x.size
    return np.array([np.dot(x[: n - lag], x[lag:]) / n for lag in range(max_lag + 1)])


def effective_sample_size(x: np.ndarray) -> float:
    """ESS via Geyer's initial positive sequence of paired autocovariances."""
    n = x.size
    c = _autocov(x, min(n - 1, 1000))
    if c[0] == 0.0:
        return 1.0
    rho = c / c[0]
    s = 0.0
    for k in range(1, rho.size - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        s += pair
    return n / (1.0 + 2.0 * s)


@dataclass
class ChainSummary:
    mean: np.ndarray
    std: np.ndarray
    lag1_autocorr: np.ndarray
    ess: np.ndarray


def chain_diagnostics(c: Chain) -> ChainSummary:
    """Per-dimension mean, std, lag-1 autocorrelation, and effective sample size."""
    samples = c.samples
    if samples.shape[0] < 10:
        raise ValueError("need at least 10 kept samples for diagnostics")
    mean = samples.mean(axis=0)
    std = samples.std(axis=0, ddof=1)
    lag1 = np.empty(samples.shape[1])
    ess = np.empty(samples.shape[1])
    for j in range(samples.shape[1]):
        col = samples[:, j]
        cov = _autocov(col, 1)
        # a constant column has zero variance: flag with rho = 0, ESS = 1
        lag1[j] = cov[1] / cov[0] if cov[0] > 0 else 0.0
        ess[j] = effective_sample_size(col) if cov[0] > 0 else 1.0
    return ChainSummary(mean=mean, std=std, lag1_autocorr=lag1, ess=ess)
