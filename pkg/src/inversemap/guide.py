"""Amortized full-rank Gaussian guide.

A three-headed network maps an observation y to the parameters of a
multivariate Gaussian over the unknowns: a mean vector and the Cholesky
factor of the covariance.  Sampling goes through the reparameterization
mu + L z with z standard normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .nn_core import (
    LayerSpec,
    MlpParams,
    ShapeError,
    flatten_params,
    mlp_forward,
    mlp_init,
    mlp_vjp,
    unflatten_params,
)

# additive floor on the Cholesky diagonal; keeps the triangular solve
# well-conditioned when the softplus head drifts very negative
DIAG_FLOOR = 1e-6

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GuideParams:
    """Mean and Cholesky factor of one posterior approximation."""

    mu: np.ndarray
    chol: np.ndarray

    @property
    def d(self) -> int:
        return self.mu.shape[-1]


@dataclass
class AmortNet:
    """Three-headed amortization network.

    head_mu emits the mean (linear ending), head_diag the Cholesky
    diagonal (softplus ending), head_offdiag the strict lower triangle
    in row-major order (linear ending).
    """

    head_mu: MlpParams
    head_diag: MlpParams
    head_offdiag: MlpParams
    d: int
    m: int


def _head_spec(m: int, hidden: list[int], out_dim: int, ending: str) -> list[LayerSpec]:
    dims = [m, *hidden]
    spec = [LayerSpec(a, b, "relu") for a, b in zip(dims, dims[1:])]
    spec.append(LayerSpec(dims[-1], out_dim, ending))
    return spec


def build_amort_net(m: int, d: int, hidden: list[int], seed: int) -> AmortNet:
    """Build the three heads with independent per-head init seeds."""
    n_off = (d * d - d) // 2
    s_mu, s_diag, s_off = np.random.SeedSequence(seed).generate_state(3)
    return AmortNet(
        head_mu=mlp_init(_head_spec(m, hidden, d, "linear"), int(s_mu)),
        head_diag=mlp_init(_head_spec(m, hidden, d, "softplus"), int(s_diag)),
        head_offdiag=mlp_init(_head_spec(m, hidden, max(n_off, 1), "linear"), int(s_off))
        if n_off > 0
        else None,
        d=d,
        m=m,
    )


def heads_forward(net: AmortNet, y: np.ndarray):
    """Raw head outputs for a batch of observations.

    Returns ``(mu, diag, off)`` with shapes (n, d), (n, d), (n, n_off).
    ``diag`` already includes the positivity floor.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != net.m:
        raise ShapeError(f"observation has length {y.shape[-1]}, net expects {net.m}")
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
    mu = mlp_forward(net.head_mu, y)
    diag = mlp_forward(net.head_diag, y) + DIAG_FLOOR
    n_off = (net.d * net.d - net.d) // 2
    if n_off > 0:
        off = mlp_forward(net.head_offdiag, y)
    else:
        off = np.zeros((y.shape[0], 0))
    return mu, diag, off, squeeze


def assemble_chol(d: int, diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Place diagonal and row-major strict-lower entries into (n, d, d)."""
    n = diag.shape[0]
    chol = np.zeros((n, d, d))
    rows, cols = np.tril_indices(d, -1)
    chol[:, rows, cols] = off
    idx = np.arange(d)
    chol[:, idx, idx] = diag
    return chol


def amort_forward(net: AmortNet, y: np.ndarray) -> GuideParams:
    """Map an observation to its guide parameters."""
    mu, diag, off, squeeze = heads_forward(net, y)
    chol = assemble_chol(net.d, diag, off)
    if squeeze:
        return GuideParams(mu=mu[0], chol=chol[0])
    return GuideParams(mu=mu, chol=chol)


def guide_sample(g: GuideParams, z: np.ndarray) -> np.ndarray:
    """Reparameterized draw mu + L z; batched if z is (n, d)."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != g.d:
        raise ShapeError(f"latent has length {z.shape[-1]}, guide is {g.d}-dimensional")
    return g.mu + z @ g.chol.T


def guide_log_density(g: GuideParams, xi: np.ndarray) -> np.ndarray:
    """log N(xi | mu, L L^T) via a triangular solve; batched if xi is (n, d)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != g.d:
        raise ShapeError(f"point has length {xi.shape[-1]}, guide is {g.d}-dimensional")
    diag = np.diag(g.chol)
    if np.any(diag <= 0):
        raise ValueError("Cholesky factor has a non-positive diagonal entry")
    w = solve_triangular(g.chol, np.atleast_2d(xi - g.mu).T, lower=True)
    quad = np.sum(w * w, axis=0)
    out = -0.5 * g.d * _LOG_2PI - np.sum(np.log(diag)) - 0.5 * quad
    return out if xi.ndim == 2 else out[0]


def guide_entropy(g: GuideParams) -> float:
    """Differential entropy: (d/2) log(2 pi e) + sum log L_rr."""
    diag = np.diag(g.chol)
    if np.any(diag <= 0):
        raise ValueError("Cholesky factor has a non-positive diagonal entry")
    return 0.5 * g.d * (_LOG_2PI + 1.0) + float(np.sum(np.log(diag)))


def amort_grad(
    net: AmortNet,
    y: np.ndarray,
    grad_mu: np.ndarray,
    grad_chol: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode gradients of a scalar through the head assembly.

    ``grad_mu`` / ``grad_chol`` are gradients w.r.t. the GuideParams
    produced by :func:`amort_forward` for ``y``.  Entries of
    ``grad_chol`` strictly above the diagonal are ignored (the upper
    triangle is identically zero).  Returns flat gradients per head; a
    leading batch axis on all three inputs sums the parameter gradients
    over the batch.
    """
    y = np.asarray(y, dtype=float)
    grad_mu = np.asarray(grad_mu, dtype=float)
    grad_chol = np.asarray(grad_chol, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
        grad_mu = grad_mu[None, :]
        grad_chol = grad_chol[None, :, :]
    d = net.d
    if grad_mu.shape[-1] != d or grad_chol.shape[-2:] != (d, d):
        raise ShapeError("upstream gradient shapes do not match GuideParams")

    idx = np.arange(d)
    g_diag = grad_chol[:, idx, idx]
    rows, cols = np.tril_indices(d, -1)
    g_off = grad_chol[:, rows, cols]

    flat_mu, _ = mlp_vjp(net.head_mu, y, grad_mu)
    flat_diag, _ = mlp_vjp(net.head_diag, y, g_diag)
    n_off = (d * d - d) // 2
    if n_off > 0:
        flat_off, _ = mlp_vjp(net.head_offdiag, y, g_off)
    else:
        flat_off = np.zeros(0)
    return flat_mu, flat_diag, flat_off


def net_to_flat(net: AmortNet) -> np.ndarray:
    """All head parameters as one flat vector: mu head, diag head, off head."""
    parts = [flatten_params(net.head_mu), flatten_params(net.head_diag)]
    if net.head_offdiag is not None:
        parts.append(flatten_params(net.head_offdiag))
    return np.concatenate(parts)


def net_from_flat(net: AmortNet, flat: np.ndarray) -> AmortNet:
    """Rebuild an AmortNet with the same architecture from a flat vector."""
    n_mu = net.head_mu.n_params
    n_diag = net.head_diag.n_params
    head_mu = unflatten_params(net.head_mu.spec, flat[:n_mu])
    head_diag = unflatten_params(net.head_diag.spec, flat[n_mu : n_mu + n_diag])
    head_off = net.head_offdiag
    if head_off is not None:
        head_off = unflatten_params(net.head_offdiag.spec, flat[n_mu + n_diag :])
    return AmortNet(head_mu=head_mu, head_diag=head_diag, head_offdiag=head_off, d=net.d, m=net.m)
