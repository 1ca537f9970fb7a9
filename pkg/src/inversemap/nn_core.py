"""Minimal dense feed-forward networks with hand-rolled reverse-mode gradients.

Everything here is pure numpy and pure-functional: parameters are plain
arrays, forward/backward passes allocate fresh outputs, and nothing is
mutated in place.  The canonical flat parameter ordering (used by
:func:`flatten_params` and all gradient carriers) is layer by layer,
weight matrix in row-major order followed by the bias vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "softplus", "linear")

# softplus switches to the identity above this threshold; the relative
# error of the approximation there is below 1e-13.
_SOFTPLUS_CUTOFF = 30.0


class ShapeError(ValueError):
    """Raised when array shapes do not match a layer specification."""


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: an affine map followed by an activation."""

    input_dim: int
    output_dim: int
    activation: str

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ShapeError(
                f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}"
            )


@dataclass
class MlpParams:
    """Weights and biases for a stack of dense layers.

    ``layers[i]`` is a ``(W, b)`` pair with ``W`` of shape
    ``(output_dim, input_dim)`` and ``b`` of shape ``(output_dim,)``.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    spec: list[LayerSpec]

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    @property
    def input_dim(self) -> int:
        return self.spec[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.spec[-1].output_dim


def check_chainable(spec: Sequence[LayerSpec]) -> None:
    if not spec:
        raise ShapeError("empty layer spec")
    for a, b in zip(spec, spec[1:]):
        if a.output_dim != b.input_dim:
            raise ShapeError(
                f"layers do not chain: {a.output_dim} != {b.input_dim}"
            )


def mlp_init(spec: Sequence[LayerSpec], seed: int) -> MlpParams:
    """He-style initialization: N(0, 1/input_dim) weights, zero biases."""
    check_chainable(spec)
    rng = np.random.default_rng(seed)
    layers = []
    for ls in spec:
        W = rng.normal(0.0, 1.0 / np.sqrt(ls.input_dim), (ls.output_dim, ls.input_dim))
        b = np.zeros(ls.output_dim)
        layers.append((W, b))
    return MlpParams(layers=layers, spec=list(spec))


def softplus(t: np.ndarray) -> np.ndarray:
    """Overflow-safe log(1 + e^t); linear for t above the cutoff."""
    t = np.asarray(t, dtype=float)
    return np.where(t > _SOFTPLUS_CUTOFF, t, np.log1p(np.exp(np.minimum(t, _SOFTPLUS_CUTOFF))))


def softplus_grad(t: np.ndarray) -> np.ndarray:
    """Sigmoid, computed without overflow on either tail."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _activate(name: str, t: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(t, 0.0)
    if name == "softplus":
        return softplus(t)
    return t


def _activate_grad(name: str, t: np.ndarray) -> np.ndarray:
    # relu subgradient at exactly 0 is taken to be 0
    if name == "relu":
        return (t > 0).astype(float)
    if name == "softplus":
        return softplus_grad(t)
    return np.ones_like(t)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on ``x``; batched if ``x`` is 2-D (batch first)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.input_dim:
        raise ShapeError(
            f"input has length {x.shape[-1]}, network expects {params.input_dim}"
        )
    h = x
    for (W, b), ls in zip(params.layers, params.spec):
        h = _activate(ls.activation, h @ W.T + b)
    return h


def mlp_vjp(
    params: MlpParams, x: np.ndarray, out_grad: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian products of the network output.

    Returns ``(flat_grad, input_grad)`` where ``flat_grad`` is
    ``out_grad^T (d out / d params)`` in the canonical flat order and
    ``input_grad`` is ``out_grad^T (d out / d x)``.  When ``x`` and
    ``out_grad`` carry a leading batch axis, the parameter gradient is
    summed over the batch and ``input_grad`` stays per-sample.
    """
    x = np.asarray(x, dtype=float)
    out_grad = np.asarray(out_grad, dtype=float)
    if x.shape[-1] != params.input_dim:
        raise ShapeError(
            f"input has length {x.shape[-1]}, network expects {params.input_dim}"
        )
    if out_grad.shape[-1] != params.output_dim:
        raise ShapeError(
            f"out_grad has length {out_grad.shape[-1]}, network emits {params.output_dim}"
        )
    if x.ndim != out_grad.ndim:
        raise ShapeError("x and out_grad must both be batched or both unbatched")

    batched = x.ndim == 2
    if not batched:
        x = x[None, :]
        out_grad = out_grad[None, :]

    # forward pass, caching layer inputs and pre-activations
    inputs, preacts = [], []
    h = x
    for (W, b), ls in zip(params.layers, params.spec):
        inputs.append(h)
        t = h @ W.T + b
        preacts.append(t)
        h = _activate(ls.activation, t)

    grads: list[np.ndarray] = []
    g = out_grad
    for (W, b), ls, h_in, t in zip(
        reversed(params.layers), reversed(params.spec), reversed(inputs), reversed(preacts)
    ):
        gt = g * _activate_grad(ls.activation, t)
        gW = gt.T @ h_in
        gb = gt.sum(axis=0)
        g = gt @ W
        grads.append(np.concatenate([gW.ravel(), gb]))
    flat = np.concatenate(grads[::-1])
    return flat, (g if batched else g[0])


def flatten_params(params: MlpParams) -> np.ndarray:
    """Canonical flat vector: per layer, W row-major then b."""
    return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in params.layers])


def unflatten_params(spec: Sequence[LayerSpec], flat: np.ndarray) -> MlpParams:
    flat = np.asarray(flat, dtype=float)
    expected = sum(ls.output_dim * ls.input_dim + ls.output_dim for ls in spec)
    if flat.shape != (expected,):
        raise ShapeError(f"flat vector has {flat.size} entries, spec needs {expected}")
    layers = []
    pos = 0
    for ls in spec:
        nw = ls.output_dim * ls.input_dim
        W = flat[pos : pos + nw].reshape(ls.output_dim, ls.input_dim).copy()
        pos += nw
        b = flat[pos : pos + ls.output_dim].copy()
        pos += ls.output_dim
        layers.append((W, b))
    return MlpParams(layers=layers, spec=list(spec))


def finite_diff(f: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences of a scalar function, one column at a time."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g
