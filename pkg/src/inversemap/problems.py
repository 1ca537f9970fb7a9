"""Inverse-problem definitions: priors, likelihoods, and forward models.

Each problem bundles a diagonal Gaussian prior, a Gaussian likelihood
with noise scale gamma, and a forward map f: R^d -> R^m.  Forward maps
accept a single parameter vector or a batch (leading axis) and are pure.
The registry at the bottom exposes the built-in benchmarks by name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .nn_core import ShapeError

_LOG_2PI = np.log(2.0 * np.pi)

# finite-difference step for forward-model Jacobians when no analytic
# Jacobian is attached
FD_JACOBIAN_H = 1e-6


class ForwardEvalError(RuntimeError):
    """Forward model produced a non-finite value; carries the offending input."""

    def __init__(self, message: str, xi: np.ndarray):
        super().__init__(message)
        self.xi = np.asarray(xi)


@dataclass(frozen=True)
class Problem:
    """An inverse problem: prior, noise scale, and forward map."""

    name: str
    d: int
    m: int
    prior_mean: np.ndarray
    prior_std: np.ndarray
    noise_scale: float
    forward: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if np.any(np.asarray(self.prior_std) <= 0):
            raise ValueError("prior_std must be positive elementwise")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")


@dataclass(frozen=True)
class DataDraw:
    """A ground-truth parameter vector and the observation it generated."""

    xi_gt: np.ndarray
    y: np.ndarray


def _eval_forward(p: Problem, xi: np.ndarray) -> np.ndarray:
    fx = p.forward(xi)
    if not np.all(np.isfinite(fx)):
        raise ForwardEvalError(f"forward model {p.name!r} returned non-finite values", xi)
    return fx


def _gauss_logpdf_iso(x: np.ndarray, mean: np.ndarray, scale: float) -> np.ndarray:
    r = (x - mean) / scale
    m = x.shape[-1]
    return -0.5 * m * _LOG_2PI - m * np.log(scale) - 0.5 * np.sum(r * r, axis=-1)


def _gauss_logpdf_diag(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    r = (x - mean) / std
    return -0.5 * x.shape[-1] * _LOG_2PI - np.sum(np.log(std)) - 0.5 * np.sum(r * r, axis=-1)


def log_prior(p: Problem, xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != p.d:
        raise ShapeError(f"parameter vector has length {xi.shape[-1]}, expected {p.d}")
    return _gauss_logpdf_diag(xi, p.prior_mean, p.prior_std)


def log_joint(p: Problem, xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log p(y | xi) + log p(xi); batched when xi is (n, d) and y is (n, m)."""
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    if xi.shape[-1] != p.d:
        raise ShapeError(f"parameter vector has length {xi.shape[-1]}, expected {p.d}")
    if y.shape[-1] != p.m:
        raise ShapeError(f"observation has length {y.shape[-1]}, expected {p.m}")
    fx = _eval_forward(p, xi)
    return _gauss_logpdf_iso(y, fx, p.noise_scale) + log_prior(p, xi)


def forward_jacobian(p: Problem, xi: np.ndarray) -> np.ndarray:
    """Jacobian of the forward map, shape (..., m, d).

    Analytic when the problem attaches one; otherwise central finite
    differences with step FD_JACOBIAN_H, batched into a single forward
    call.
    """
    xi = np.asarray(xi, dtype=float)
    if p.jacobian is not None:
        return p.jacobian(xi)
    squeeze = xi.ndim == 1
    X = np.atleast_2d(xi)
    n = X.shape[0]
    eye = np.eye(p.d)
    # rows: for each sample, +h and -h perturbations of every coordinate
    pert = np.concatenate(
        [X[:, None, :] + FD_JACOBIAN_H * eye, X[:, None, :] - FD_JACOBIAN_H * eye], axis=1
    ).reshape(n * 2 * p.d, p.d)
    F = _eval_forward(p, pert).reshape(n, 2, p.d, p.m)
    J = (F[:, 0] - F[:, 1]).transpose(0, 2, 1) / (2.0 * FD_JACOBIAN_H)
    return J[0] if squeeze else J


def log_joint_grad(p: Problem, xi: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of log_joint w.r.t. xi: J^T (y - f) / gamma^2 - (xi - m0) / s0^2."""
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    fx = _eval_forward(p, xi)
    J = forward_jacobian(p, xi)
    resid = (y - fx) / p.noise_scale**2
    like = np.einsum("...md,...m->...d", J, resid)
    return like - (xi - p.prior_mean) / p.prior_std**2


def sample_data(p: Problem, rng: np.random.Generator) -> DataDraw:
    """One ancestral draw from the data density: xi ~ prior, y = f(xi) + noise."""
    xi, y = sample_data_batch(p, rng, 1)
    return DataDraw(xi_gt=xi[0], y=y[0])


def sample_data_batch(
    p: Problem, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """n ancestral draws; returns (xi (n, d), y (n, m))."""
    xi = p.prior_mean + p.prior_std * rng.standard_normal((n, p.d))
    y = _eval_forward(p, xi) + p.noise_scale * rng.standard_normal((n, p.m))
    return xi, y


# ---------------------------------------------------------------------------
# inverse kinematics: 2-D articulated arm on a vertical slider

IK_ARM_LENGTHS = (0.5, 0.5, 1.0)
IK_PRIOR_STD = np.array([0.25, 0.5, 0.5, 0.5])
IK_NOISE_SCALE = 0.01


def ik_forward(xi: np.ndarray) -> np.ndarray:
    """End-point coordinates of the three-segment arm; xi = (height, 3 angles)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != 4:
        raise ShapeError(f"ik_forward expects 4 parameters, got {xi.shape[-1]}")
    l1, l2, l3 = IK_ARM_LENGTHS
    a1 = xi[..., 1]
    a2 = a1 + xi[..., 2]
    a3 = a2 + xi[..., 3]
    f1 = l1 * np.cos(a1) + l2 * np.cos(a2) + l3 * np.cos(a3)
    f2 = xi[..., 0] + l1 * np.sin(a1) + l2 * np.sin(a2) + l3 * np.sin(a3)
    return np.stack([f1, f2], axis=-1)


def ik_jacobian(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    l1, l2, l3 = IK_ARM_LENGTHS
    a1 = xi[..., 1]
    a2 = a1 + xi[..., 2]
    a3 = a2 + xi[..., 3]
    s1, s2, s3 = l1 * np.sin(a1), l2 * np.sin(a2), l3 * np.sin(a3)
    c1, c2, c3 = l1 * np.cos(a1), l2 * np.cos(a2), l3 * np.cos(a3)
    zero = np.zeros_like(a1)
    one = np.ones_like(a1)
    row1 = np.stack([zero, -(s1 + s2 + s3), -(s2 + s3), -s3], axis=-1)
    row2 = np.stack([one, c1 + c2 + c3, c2 + c3, c3], axis=-1)
    return np.stack([row1, row2], axis=-2)


def ik_problem() -> Problem:
    return Problem(
        name="ik",
        d=4,
        m=2,
        prior_mean=np.zeros(4),
        prior_std=IK_PRIOR_STD.copy(),
        noise_scale=IK_NOISE_SCALE,
        forward=ik_forward,
        jacobian=ik_jacobian,
    )


# ---------------------------------------------------------------------------
# 1-D elliptic PDE: steady-state heat conduction with a log-sinusoidal
# conductivity field; solved exactly via quadrature of 1/a

ELLIPTIC_SIGMA = 1.5
ELLIPTIC_D = 5
ELLIPTIC_NOISE_SCALE = 0.015
ELLIPTIC_N_QUAD = 2001  # Simpson nodes on [0, 1]
ELLIPTIC_SENSORS = np.linspace(0.15, 0.85, 9)

_ell_modes = np.arange(1, ELLIPTIC_D + 1)
_ell_freq = (_ell_modes - 0.5) * np.pi
_ell_coef = np.sqrt(2.0) * ELLIPTIC_SIGMA / _ell_freq
_ell_grid = np.linspace(0.0, 1.0, ELLIPTIC_N_QUAD)
# basis matrix: row i is coef_i * sin(freq_i * x) on the quadrature grid
_ell_basis = _ell_coef[:, None] * np.sin(_ell_freq[:, None] * _ell_grid[None, :])


def elliptic_conductivity(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Conductivity a(x, xi) = exp(sum_i xi_i c_i sin((i - 1/2) pi x))."""
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.asarray(xi, dtype=float)
    basis = _ell_coef[:, None] * np.sin(_ell_freq[:, None] * x[None, :])
    out = np.exp(np.einsum("...i,ix->...x", xi, basis))
    return out[..., 0] if scalar else out


def _simpson_node_weights(node: int) -> np.ndarray:
    """Quadrature weights w with w . f = int_0^{x_node} f under the
    composite-Simpson quadratic model (half-panel rule at odd nodes)."""
    h = _ell_grid[1] - _ell_grid[0]
    w = np.zeros(ELLIPTIC_N_QUAD)
    even = node if node % 2 == 0 else node - 1
    if even > 0:
        w[0] = w[even] = h / 3.0
        w[1:even:2] = 4.0 * h / 3.0
        w[2:even:2] = 2.0 * h / 3.0
    if node % 2 == 1:
        # integral over the first half of panel [node-1, node+1] of the
        # quadratic through its three nodes
        w[node - 1] += 5.0 * h / 12.0
        w[node] += 8.0 * h / 12.0
        w[node + 1] += -h / 12.0
    return w


def _quadrature_columns(sensor_xs: np.ndarray) -> np.ndarray:
    """Weight matrix (n_grid, k) with column j integrating 1/a up to
    sensor j; off-node sensors blend the two neighboring node columns."""
    pos = sensor_xs * (ELLIPTIC_N_QUAD - 1)
    i0 = np.clip(pos.astype(int), 0, ELLIPTIC_N_QUAD - 2)
    frac = pos - i0
    cols = []
    for j in range(sensor_xs.size):
        w = (1.0 - frac[j]) * _simpson_node_weights(i0[j])
        if frac[j] > 0:
            w = w + frac[j] * _simpson_node_weights(i0[j] + 1)
        cols.append(w)
    return np.stack(cols, axis=1)


_ell_w_full = _simpson_node_weights(ELLIPTIC_N_QUAD - 1)  # integral over [0, 1]
_ell_w_sensors = _quadrature_columns(ELLIPTIC_SENSORS)


def elliptic_solve(xi: np.ndarray, sensor_xs: np.ndarray = None) -> np.ndarray:
    """Temperature u at the sensor locations for conductivity parameters xi.

    Uses the closed-form reduction u(x) = 1 - F(x)/F(1) with
    F(x) = int_0^x 1/a, evaluated by composite Simpson on a fixed
    2001-node grid.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != ELLIPTIC_D:
        raise ShapeError(f"elliptic_solve expects {ELLIPTIC_D} parameters, got {xi.shape[-1]}")
    if sensor_xs is None:
        W = _ell_w_sensors
    else:
        W = _quadrature_columns(np.asarray(sensor_xs, dtype=float))
    inv_a = np.exp(-(xi @ _ell_basis))  # (..., n_grid)
    F_at = inv_a @ W
    F_one = inv_a @ _ell_w_full
    return 1.0 - F_at / F_one[..., None]


def elliptic_jacobian(xi: np.ndarray) -> np.ndarray:
    """Exact Jacobian of the discrete elliptic forward map, shape (..., m, d).

    Differentiates the quadrature formula itself: with
    H_i(x) = int_0^x B_i e^{-g} under the same Simpson weights,
    du/dxi_i = (H_i(x) F(1) - F(x) H_i(1)) / F(1)^2.
    """
    xi = np.asarray(xi, dtype=float)
    inv_a = np.exp(-(xi @ _ell_basis))  # (..., n_grid)
    F_at = inv_a @ _ell_w_sensors  # (..., m)
    F_one = inv_a @ _ell_w_full  # (...,)
    weighted = inv_a[..., None, :] * _ell_basis  # (..., d, n_grid)
    H_at = weighted @ _ell_w_sensors  # (..., d, m)
    H_one = weighted @ _ell_w_full  # (..., d)
    num = H_at * F_one[..., None, None] - F_at[..., None, :] * H_one[..., None]
    J = num / F_one[..., None, None] ** 2
    return np.swapaxes(J, -1, -2)


def elliptic_problem() -> Problem:
    return Problem(
        name="elliptic",
        d=ELLIPTIC_D,
        m=len(ELLIPTIC_SENSORS),
        prior_mean=np.zeros(ELLIPTIC_D),
        prior_std=np.ones(ELLIPTIC_D),
        noise_scale=ELLIPTIC_NOISE_SCALE,
        forward=elliptic_solve,
        jacobian=elliptic_jacobian,
    )


# ---------------------------------------------------------------------------
# linear-Gaussian conjugate problem (analytic posterior and evidence)

DEFAULT_LINGAUSS_A = np.array([[1.0, 0.4], [-0.3, 1.1]])
DEFAULT_LINGAUSS_GAMMA = 0.5


def linear_gaussian_problem(
    A: np.ndarray,
    gamma: float,
    prior_mean: np.ndarray,
    prior_std: np.ndarray,
) -> Problem:
    """Forward map f(xi) = A xi with Gaussian prior and noise."""
    A = np.asarray(A, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_std = np.asarray(prior_std, dtype=float)
    m, d = A.shape
    if prior_mean.shape != (d,) or prior_std.shape != (d,):
        raise ShapeError("prior dimensions do not match A")

    def fwd(xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != d:
            raise ShapeError(f"parameter vector has length {xi.shape[-1]}, expected {d}")
        return xi @ A.T

    def jac(xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            return A.copy()
        return np.broadcast_to(A, xi.shape[:-1] + A.shape).copy()

    return Problem(
        name="lingauss",
        d=d,
        m=m,
        prior_mean=prior_mean,
        prior_std=prior_std,
        noise_scale=float(gamma),
        forward=fwd,
        jacobian=jac,
    )


def linear_gaussian_posterior(
    A: np.ndarray,
    gamma: float,
    prior_mean: np.ndarray,
    prior_std: np.ndarray,
    y: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Exact conjugate posterior (mu*, Sigma*) and the log evidence."""
    A = np.asarray(A, dtype=float)
    prior_mean = np.asarray(prior_mean, dtype=float)
    prior_std = np.asarray(prior_std, dtype=float)
    y = np.asarray(y, dtype=float)
    m, d = A.shape
    prior_prec = np.diag(1.0 / prior_std**2)
    post_prec = A.T @ A / gamma**2 + prior_prec
    sigma_star = np.linalg.inv(post_prec)
    mu_star = sigma_star @ (A.T @ y / gamma**2 + prior_prec @ prior_mean)
    # evidence: y ~ N(A m0, A S0 A^T + gamma^2 I)
    cov_y = A @ np.diag(prior_std**2) @ A.T + gamma**2 * np.eye(m)
    r = y - A @ prior_mean
    sign, logdet = np.linalg.slogdet(cov_y)
    log_evidence = float(
        -0.5 * m * _LOG_2PI - 0.5 * logdet - 0.5 * r @ np.linalg.solve(cov_y, r)
    )
    return mu_star, sigma_star, log_evidence


def default_lingauss_problem() -> Problem:
    return linear_gaussian_problem(
        DEFAULT_LINGAUSS_A, DEFAULT_LINGAUSS_GAMMA, np.zeros(2), np.ones(2)
    )


_REGISTRY: dict[str, Callable[[], Problem]] = {
    "ik": ik_problem,
    "elliptic": elliptic_problem,
    "lingauss": default_lingauss_problem,
}


def problem_names() -> list[str]:
    return sorted(_REGISTRY)


def get_problem(name: str) -> Problem:
    """Look up a built-in problem by its registry name."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; available: {', '.join(problem_names())}"
        ) from None
    return factory()
