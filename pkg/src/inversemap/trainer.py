"""Stochastic training of the amortization network.

Implements the reparameterized single-sample objective V, its exact
gradient with respect to the network parameters, ADAM with a step-decay
learning rate, and the outer training loop (fresh data-density and
latent batches every iteration, the latent batch shared across the
observation batch).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .guide import (
    AmortNet,
    amort_grad,
    assemble_chol,
    build_amort_net,
    heads_forward,
    net_from_flat,
    net_to_flat,
)
from .nn_core import ShapeError
from .problems import Problem, log_joint, log_joint_grad, sample_data_batch

_LOG_2PI = np.log(2.0 * np.pi)


class NumericalAbort(RuntimeError):
    """Training hit a non-finite objective or gradient."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class TrainConfig:
    n_iter: int
    n_y: int
    n_z: int
    eta0: float
    alpha: float
    r: int
    seed: int
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if min(self.n_iter, self.n_y, self.n_z, self.r) < 1:
            raise ValueError("n_iter, n_y, n_z and r must all be >= 1")
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(first_moment=np.zeros(n), second_moment=np.zeros(n))


@dataclass
class TrainTrace:
    """Per-iteration diagnostics: objective sample, learning rate, grad norm."""

    iterations: list[int] = field(default_factory=list)
    v_estimates: list[float] = field(default_factory=list)
    learning_rates: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)

    def append(self, k: int, v: float, lr: float, gnorm: float) -> None:
        self.iterations.append(k)
        self.v_estimates.append(v)
        self.learning_rates.append(lr)
        self.grad_norms.append(gnorm)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "v", "lr", "grad_norm"])
            for row in zip(self.iterations, self.v_estimates, self.learning_rates, self.grad_norms):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2])), repr(float(row[3]))])


def lr_schedule(eta0: float, alpha: float, r: int, k: int) -> float:
    """Step decay: eta0 * alpha^floor(k / r)."""
    return eta0 * alpha ** (k // r)


def adam_step(
    state: AdamState,
    phi: np.ndarray,
    grad: np.ndarray,
    eta: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update in the ascent direction."""
    if phi.shape != grad.shape:
        raise ShapeError("parameter and gradient vectors differ in length")
    t = state.step_count + 1
    m = beta1 * state.first_moment + (1.0 - beta1) * grad
    v = beta2 * state.second_moment + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_phi = phi + eta * m_hat / (np.sqrt(v_hat) + eps)
    return new_phi, AdamState(first_moment=m, second_moment=v, step_count=t)


def _v_and_grad(
    net: AmortNet,
    p: Problem,
    ys: np.ndarray,
    zs: np.ndarray,
    want_grad: bool,
):
    """Shared forward pass behind estimate_V and grad_V.

    The same latent batch zs is reused across every observation in ys,
    matching the index structure of the single-sample objective.
    """
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    if ys.shape[1] != p.m:
        raise ShapeError(f"observations have length {ys.shape[1]}, problem has m={p.m}")
    if zs.shape[1] != p.d:
        raise ShapeError(f"latents have length {zs.shape[1]}, problem has d={p.d}")
    n_y, n_z, d = ys.shape[0], zs.shape[0], p.d

    mu, diag, off, _ = heads_forward(net, ys)
    chol = assemble_chol(d, diag, off)

    # xi[i, j] = mu_i + L_i z_j for every observation/latent pair
    xi = mu[:, None, :] + np.einsum("nab,jb->nja", chol, zs)
    xi_flat = xi.reshape(n_y * n_z, d)
    y_rep = np.repeat(ys, n_z, axis=0)
    logp = log_joint(p, xi_flat, y_rep).reshape(n_y, n_z)

    ent_term = np.sum(np.log(diag), axis=1)
    v = float(0.5 * d * (_LOG_2PI + 1.0) + np.mean(logp.mean(axis=1) + ent_term))
    if not want_grad:
        return v, None

    g_xi = log_joint_grad(p, xi_flat, y_rep).reshape(n_y, n_z, d)
    grad_mu = g_xi.mean(axis=1)
    grad_chol = np.einsum("nji,jb->nib", g_xi, zs) / n_z
    idx = np.arange(d)
    grad_chol[:, idx, idx] += 1.0 / diag
    # upper triangle of L is structurally zero; mask it out of the pullback
    grad_chol *= np.tril(np.ones((d, d)))

    flat_mu, flat_diag, flat_off = amort_grad(net, ys, grad_mu, grad_chol)
    scale = 1.0 / n_y
    return v, (flat_mu * scale, flat_diag * scale, flat_off * scale)


def estimate_V(net: AmortNet, p: Problem, ys: np.ndarray, zs: np.ndarray) -> float:
    """Single-sample estimate of the amortized objective.

    (d/2) log(2 pi e) + mean_i [ mean_j log p(mu_i + L_i z_j, y_i)
    + sum_r log L_rr(y_i) ].
    """
    v, _ = _v_and_grad(net, p, ys, zs, want_grad=False)
    return v


def grad_V(
    net: AmortNet, p: Problem, ys: np.ndarray, zs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradient of estimate_V at the given samples, one flat vector per head."""
    _, g = _v_and_grad(net, p, ys, zs, want_grad=True)
    return g


def train(
    p: Problem,
    hidden_sizes: list[int],
    cfg: TrainConfig,
) -> tuple[AmortNet, TrainTrace]:
    """Run the full training loop and return the trained net plus its trace.

    Per iteration: draw a fresh observation batch from the data density
    and a fresh shared latent batch, form the objective sample and its
    gradient, update the learning rate by step decay, and apply one
    ascent-form ADAM step.  Aborts on any non-finite objective or
    gradient.
    """
    ss_init, ss_data = np.random.SeedSequence(cfg.seed).spawn(2)
    net = build_amort_net(p.m, p.d, hidden_sizes, seed=int(ss_init.generate_state(1)[0]))
    rng = np.random.default_rng(ss_data)

    phi = net_to_flat(net)
    state = AdamState.zeros(phi.size)
    trace = TrainTrace()

    for k in range(cfg.n_iter):
        _, ys = sample_data_batch(p, rng, cfg.n_y)
        zs = rng.standard_normal((cfg.n_z, p.d))
        v, (g_mu, g_diag, g_off) = _v_and_grad(net, p, ys, zs, want_grad=True)
        grad = np.concatenate([g_mu, g_diag, g_off])
        if not np.isfinite(v) or not np.all(np.isfinite(grad)):
            raise NumericalAbort(
                f"non-finite objective or gradient at iteration {k}", iteration=k
            )
        eta = lr_schedule(cfg.eta0, cfg.alpha, cfg.r, k)
        phi, state = adam_step(
            state, phi, grad, eta, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        )
        net = net_from_flat(net, phi)
        trace.append(k, v, eta, float(np.linalg.norm(grad)))

    return net, trace
