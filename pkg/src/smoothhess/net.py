"""Minimal feed-forward network engine.

Networks are immutable values: a tuple of dense layers plus a *head* selecting
the scalar ``f: R^d -> R`` under explanation.  Every derivative is computed
analytically by hand-written reverse mode (gradients) and forward-over-reverse
(Hessians of smooth activations).

All oracle-path products go through :func:`numpy.einsum` rather than BLAS so
that each row of a batched evaluation is bit-identical to evaluating that row
on its own.  Training (see :mod:`smoothhess.experiments.training`) uses BLAS.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from .errors import DimensionError, NonFiniteError, UnsupportedActivationError

ACTIVATIONS = ("relu", "softplus", "swish", "identity")
SMOOTH_ACTIVATIONS = ("softplus", "swish", "identity")

Head = Union[int, tuple[int, int], None]


def _sigmoid(u: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def activate(name: str, z: np.ndarray, beta: float = 1.0) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "softplus":
        return np.logaddexp(0.0, beta * z) / beta
    if name == "swish":
        return z * _sigmoid(beta * z)
    raise UnsupportedActivationError(f"unknown activation {name!r}")


def activate_d1(name: str, z: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """First derivative; ReLU'(0) is taken to be 0."""
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "identity":
        return np.ones_like(z)
    s = _sigmoid(beta * z)
    if name == "softplus":
        return s
    if name == "swish":
        return s + beta * z * s * (1.0 - s)
    raise UnsupportedActivationError(f"unknown activation {name!r}")


def activate_d2(name: str, z: np.ndarray, beta: float = 1.0) -> np.ndarray:
    if name == "relu":
        raise UnsupportedActivationError(
            "ReLU has zero second derivative almost everywhere; use a smooth clone or the estimator"
        )
    if name == "identity":
        return np.zeros_like(z)
    s = _sigmoid(beta * z)
    ds = s * (1.0 - s)
    if name == "softplus":
        return beta * ds
    if name == "swish":
        return 2.0 * beta * ds + beta * beta * z * ds * (1.0 - 2.0 * s)
    raise UnsupportedActivationError(f"unknown activation {name!r}")


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    beta: float = 1.0

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise DimensionError(f"layer weight must be 2-D, got shape {w.shape}")
        if w.shape[0] != b.shape[0]:
            raise DimensionError(
                f"layer weight has {w.shape[0]} rows but bias has length {b.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise UnsupportedActivationError(f"unknown activation {self.activation!r}")
        if self.activation in ("softplus", "swish") and not self.beta > 0:
            raise ValueError(f"beta must be positive for {self.activation}, got {self.beta}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NonFiniteError("layer parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class Network:
    """Dense feed-forward network with a scalar head.

    ``output_index`` selects the scalar:

    * ``None`` or an ``int`` ``i`` -- neuron ``i`` of the final layer, after its
      activation (``None`` means neuron 0).
    * ``(layer, index)`` -- an internal neuron.  The network is truncated at
      ``layer``; the value is the neuron's pre-activation unless ``layer`` is
      the final layer, in which case the activation is applied as above.
    """

    input_dim: int
    layers: tuple[Layer, ...]
    output_index: Head = None
    _head: tuple[int, int, bool] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise DimensionError("input_dim must be positive")
        if not layers:
            raise DimensionError("network needs at least one layer")
        width = self.input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != width:
                raise DimensionError(
                    f"layer {i} expects input width {layer.in_dim} but receives {width}"
                )
            width = layer.out_dim
        head = self.output_index
        last = len(layers) - 1
        if head is None:
            resolved = (last, 0, True)
        elif isinstance(head, (int, np.integer)):
            resolved = (last, int(head), True)
        else:
            li, ni = (int(v) for v in head)
            if not -len(layers) <= li < len(layers):
                raise DimensionError(f"head layer {li} out of range for {len(layers)} layers")
            li %= len(layers)
            resolved = (li, ni, li == last)
        li, ni, _ = resolved
        if not 0 <= ni < layers[li].out_dim:
            raise DimensionError(
                f"head index {ni} out of range for layer {li} of width {layers[li].out_dim}"
            )
        object.__setattr__(self, "_head", resolved)

    # -- structure -------------------------------------------------------

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def activations(self) -> tuple[str, ...]:
        return tuple(layer.activation for layer in self.layers)

    def with_head(self, output_index: Head) -> Network:
        return replace(self, output_index=output_index)

    def softplus_clone(self, beta: float) -> Network:
        """Copy of the network with every ReLU (and SoftPlus) set to SoftPlus(beta)."""
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        layers = tuple(
            replace(layer, activation="softplus", beta=beta)
            if layer.activation in ("relu", "softplus")
            else layer
            for layer in self.layers
        )
        return replace(self, layers=layers)

    # -- evaluation ------------------------------------------------------

    def _check_batch(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.input_dim:
            raise DimensionError(
                f"layer 0 expects inputs of width {self.input_dim}, got array of shape {xs.shape}"
            )
        return xs

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.input_dim:
            raise DimensionError(
                f"layer 0 expects a vector of length {self.input_dim}, got shape {x.shape}"
            )
        return x

    def _trace(self, xs: np.ndarray, stop: int, last_activated: bool):
        """Forward pass up to layer ``stop``; returns pre-activations and final output."""
        pre = []
        a = xs
        for li in range(stop + 1):
            layer = self.layers[li]
            z = np.einsum("nk,jk->nj", a, layer.weight) + layer.bias
            pre.append(z)
            if li < stop or last_activated:
                a = activate(layer.activation, z, layer.beta)
            else:
                a = z
        return pre, a

    def _pullback(self, pre, cotangent: np.ndarray, stop: int, last_activated: bool):
        g = cotangent
        for li in range(stop, -1, -1):
            layer = self.layers[li]
            if li < stop or last_activated:
                g = g * activate_d1(layer.activation, pre[li], layer.beta)
            g = np.einsum("nj,jk->nk", g, layer.weight)
        return g

    def batch_forward(self, xs) -> np.ndarray:
        xs = self._check_batch(xs)
        li, ni, act = self._head
        _, out = self._trace(xs, li, act)
        return out[:, ni].copy()

    def forward(self, x) -> float:
        x = self._check_point(x)
        return float(self.batch_forward(x[None, :])[0])

    __call__ = forward

    def outputs(self, xs) -> np.ndarray:
        """All final-layer outputs (e.g. class logits), shape (n, output_dim)."""
        xs = self._check_batch(xs)
        return self._trace(xs, len(self.layers) - 1, True)[1]

    def batch_gradient(self, xs) -> np.ndarray:
        xs = self._check_batch(xs)
        li, ni, act = self._head
        pre, _ = self._trace(xs, li, act)
        seed = np.zeros((xs.shape[0], self.layers[li].out_dim))
        seed[:, ni] = 1.0
        return self._pullback(pre, seed, li, act)

    def gradient(self, x) -> np.ndarray:
        x = self._check_point(x)
        return self.batch_gradient(x[None, :])[0]

    def batch_vjp(self, xs, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """Full final-layer outputs and the input-space pullback of ``cotangent``."""
        xs = self._check_batch(xs)
        last = len(self.layers) - 1
        pre, out = self._trace(xs, last, True)
        cot = cotangent(out) if callable(cotangent) else np.asarray(cotangent, dtype=np.float64)
        return out, self._pullback(pre, cot, last, True)

    # -- second order ----------------------------------------------------

    def _hessian_raw(self, x) -> np.ndarray:
        x = self._check_point(x)
        li_head, ni, act = self._head
        for li in range(li_head + 1):
            name = self.layers[li].activation
            if name not in SMOOTH_ACTIVATIONS and (li < li_head or act):
                raise UnsupportedActivationError(
                    f"layer {li} uses {name!r}; hessian_smooth needs softplus/swish/identity"
                )
        d = self.input_dim
        # forward with d tangent directions (identity seeds)
        a = x[None, :]
        adot = np.eye(d)
        pre, predot = [], []
        for li in range(li_head + 1):
            layer = self.layers[li]
            z = np.einsum("nk,jk->nj", a, layer.weight) + layer.bias
            zdot = np.einsum("nk,jk->nj", adot, layer.weight)
            pre.append(z)
            predot.append(zdot)
            if li < li_head or act:
                a = activate(layer.activation, z, layer.beta)
                adot = activate_d1(layer.activation, z, layer.beta) * zdot
            else:
                a, adot = z, zdot
        g = np.zeros((1, self.layers[li_head].out_dim))
        g[0, ni] = 1.0
        gdot = np.zeros((d, g.shape[1]))
        for li in range(li_head, -1, -1):
            layer = self.layers[li]
            if li < li_head or act:
                s1 = activate_d1(layer.activation, pre[li], layer.beta)
                s2 = activate_d2(layer.activation, pre[li], layer.beta)
                gdot = s2 * predot[li] * g + s1 * gdot
                g = g * s1
            g = np.einsum("nj,jk->nk", g, layer.weight)
            gdot = np.einsum("nj,jk->nk", gdot, layer.weight)
        # row i is the Hessian-vector product with e_i
        return gdot.T

    def hessian_smooth(self, x) -> np.ndarray:
        """Exact Hessian of the head for networks without ReLU, symmetrized."""
        h = self._hessian_raw(x)
        return 0.5 * (h + h.T)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        layers = []
        for layer in self.layers:
            entry = {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            if layer.activation in ("softplus", "swish"):
                entry["beta"] = layer.beta
            layers.append(entry)
        head = self.output_index
        if head is None:
            head_json: Any = 0
        elif isinstance(head, (int, np.integer)):
            head_json = int(head)
        else:
            head_json = {"layer": int(head[0]), "index": int(head[1])}
        return {"input_dim": self.input_dim, "layers": layers, "output_index": head_json}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Network:
        try:
            layers = tuple(
                Layer(
                    weight=np.asarray(entry["weight"], dtype=np.float64),
                    bias=np.asarray(entry["bias"], dtype=np.float64),
                    activation=entry["activation"],
                    beta=entry.get("beta", 1.0),
                )
                for entry in data["layers"]
            )
            head = data.get("output_index", 0)
            if isinstance(head, dict):
                head = (int(head["layer"]), int(head["index"]))
            return cls(input_dim=int(data["input_dim"]), layers=layers, output_index=head)
        except KeyError as exc:
            raise ValueError(f"model JSON missing field {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> Network:
        return cls.from_dict(loads_finite(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> Network:
        return cls.from_json(Path(path).read_text())


def _reject_constant(token: str):
    raise NonFiniteError(f"non-finite number {token!r} in JSON input")


def loads_finite(text: str) -> Any:
    """``json.loads`` that rejects NaN and +-Infinity."""
    return json.loads(text, parse_constant=_reject_constant)


@dataclass(frozen=True)
class SoftmaxHead:
    """Scalar function: softmax probability of ``class_index`` of a multi-output network."""

    net: Network
    class_index: int

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @staticmethod
    def _softmax(logits: np.ndarray) -> np.ndarray:
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def batch_forward(self, xs) -> np.ndarray:
        return self._softmax(self.net.outputs(xs))[:, self.class_index]

    def forward(self, x) -> float:
        return float(self.batch_forward(np.asarray(x, dtype=np.float64)[None, :])[0])

    __call__ = forward

    def batch_gradient(self, xs) -> np.ndarray:
        c = self.class_index

        def cot(logits):
            p = self._softmax(logits)
            onehot = np.zeros_like(p)
            onehot[:, c] = 1.0
            return p[:, c : c + 1] * (onehot - p)

        return self.net.batch_vjp(xs, cot)[1]

    def gradient(self, x) -> np.ndarray:
        return self.batch_gradient(np.asarray(x, dtype=np.float64)[None, :])[0]


def init_mlp(
    widths: Sequence[int],
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    output_index: Head = None,
) -> Network:
    """Randomly initialised MLP; ``widths`` runs from input to output.

    Weights and biases are uniform on +-1/sqrt(fan_in).
    """
    rng = np.random.default_rng(seed)
    layers = []
    n = len(widths) - 1
    for i in range(n):
        fan_in, fan_out = widths[i], widths[i + 1]
        bound = 1.0 / math.sqrt(fan_in)
        layers.append(
            Layer(
                weight=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                bias=rng.uniform(-bound, bound, size=fan_out),
                activation=hidden_activation if i < n - 1 else output_activation,
            )
        )
    return Network(input_dim=widths[0], layers=tuple(layers), output_index=output_index)
