"""Evaluation metrics for trained inverse maps.

Two-sample Kolmogorov-Smirnov statistics per marginal dimension against
an MCMC reference, and the MCMC-free re-simulation error (mean forward
discrepancy between posterior samples and the ground truth).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .guide import AmortNet, amort_forward, guide_sample
from .mcmc import McmcConfig, rwm_sample
from .problems import Problem, sample_data_batch


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Exact sup-distance between the two empirical CDFs.

    Both ECDFs are right-continuous step functions jumping only at
    sample points, so the supremum is attained at one of the pooled
    sample points.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_statistic needs nonempty samples")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


@dataclass
class KsReport:
    """Per-dimension KS values for each evaluation observation."""

    problem: str
    ks_values: np.ndarray  # (n_y, d), NaN rows where MCMC failed
    n_y: int
    n_post: int
    failures: list[int] = field(default_factory=list)

    def median_per_dim(self) -> np.ndarray:
        return np.nanmedian(self.ks_values, axis=0)

    def write_csv(self, path) -> None:
        d = self.ks_values.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["obs"] + [f"ks_xi_{j + 1}" for j in range(d)])
            for i, row in enumerate(self.ks_values):
                w.writerow([i] + [repr(v) for v in row])

    def summary(self) -> dict:
        return {
            "problem": self.problem,
            "n_y": self.n_y,
            "n_post": self.n_post,
            "median_ks": [float(v) for v in self.median_per_dim()],
            "failed_observations": self.failures,
        }


@dataclass
class ResimReport:
    """Re-simulation error: double mean of ||f(xi_ij) - f(xi_gt,i)||_2."""

    problem: str
    estimate: float
    n_y: int
    n_samples: int
    per_observation: np.ndarray  # (n_y,)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["obs", "resim_error"])
            for i, v in enumerate(self.per_observation):
                w.writerow([i, repr(float(v))])

    def summary(self) -> dict:
        return {
            "problem": self.problem,
            "n_y": self.n_y,
            "n_samples": self.n_samples,
            "resim_error": self.estimate,
        }


def posterior_samples(net: AmortNet, y: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """n reparameterized guide draws for one observation."""
    g = amort_forward(net, y)
    return guide_sample(g, rng.standard_normal((n, net.d)))


def evaluate_ks(
    net: AmortNet,
    p: Problem,
    n_y: int = 100,
    n_post: int = 1000,
    mcmc_cfg: McmcConfig | None = None,
    seed: int = 0,
) -> KsReport:
    """Per-dimension KS between guide and MCMC posteriors over data draws.

    MCMC failures are recorded per observation (NaN row) rather than
    aborting the whole evaluation.
    """
    if mcmc_cfg is None:
        mcmc_cfg = McmcConfig()
    ss_data, ss_guide, ss_mcmc = np.random.SeedSequence(seed).spawn(3)
    rng_data = np.random.default_rng(ss_data)
    rng_guide = np.random.default_rng(ss_guide)
    mcmc_seeds = ss_mcmc.generate_state(n_y)

    _, ys = sample_data_batch(p, rng_data, n_y)
    ks = np.full((n_y, p.d), np.nan)
    failures: list[int] = []
    for i in range(n_y):
        try:
            cfg_i = McmcConfig(
                n_total=mcmc_cfg.n_total,
                n_burn=mcmc_cfg.n_burn,
                thin=mcmc_cfg.thin,
                init=mcmc_cfg.init,
                target_accept=mcmc_cfg.target_accept,
                seed=int(mcmc_seeds[i]),
            )
            chain = rwm_sample(p, ys[i], cfg_i)
        except RuntimeError:
            failures.append(i)
            continue
        guide_draws = posterior_samples(net, ys[i], n_post, rng_guide)
        for j in range(p.d):
            ks[i, j] = ks_statistic(guide_draws[:, j], chain.samples[:, j])
    return KsReport(problem=p.name, ks_values=ks, n_y=n_y, n_post=n_post, failures=failures)


def resim_error(
    net: AmortNet,
    p: Problem,
    n_y: int = 100,
    n_samples: int = 1000,
    seed: int = 0,
) -> ResimReport:
    """Mean forward-model discrepancy of guide samples from the ground truth."""
    ss_data, ss_guide = np.random.SeedSequence(seed).spawn(2)
    rng_data = np.random.default_rng(ss_data)
    rng_guide = np.random.default_rng(ss_guide)

    xi_gt, ys = sample_data_batch(p, rng_data, n_y)
    f_gt = p.forward(xi_gt)
    per_obs = np.empty(n_y)
    for i in range(n_y):
        draws = posterior_samples(net, ys[i], n_samples, rng_guide)
        per_obs[i] = np.mean(np.linalg.norm(p.forward(draws) - f_gt[i], axis=1))
    return ResimReport(
        problem=p.name,
        estimate=float(per_obs.mean()),
        n_y=n_y,
        n_samples=n_samples,
        per_observation=per_obs,
    )


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
