"""Mini-batch training of small MLPs (MSE regression or softmax classification)."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from ..errors import TrainingDivergedError
from ..net import Network, activate, activate_d1

log = logging.getLogger(__name__)

RMSPROP_DECAY = 0.99
RMSPROP_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "rmsprop"
    lr: float = 1e-3
    lr_decay_iters: tuple[int, ...] = (5000, 10000, 20000)
    lr_decay_factor: float = 0.1
    iters: int = 40000
    batch: int = 128
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        object.__setattr__(self, "lr_decay_iters", tuple(int(i) for i in self.lr_decay_iters))
        if self.optimizer not in ("rmsprop", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("mse", "xent"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if list(self.lr_decay_iters) != sorted(self.lr_decay_iters):
            raise ValueError("lr_decay_iters must be ascending")
        if self.iters < 0 or self.batch < 1:
            raise ValueError("iters must be >= 0 and batch >= 1")

    def metadata(self) -> dict:
        meta = asdict(self)
        meta["lr_decay_iters"] = list(self.lr_decay_iters)
        meta["rmsprop_decay"] = RMSPROP_DECAY
        meta["rmsprop_eps"] = RMSPROP_EPS
        return meta


# hidden widths of the 6-layer toy regressors (5 hidden layers)
TOY_HIDDEN = (128, 128, 128, 128, 128)

# FOUR_QUADRANT_SCHEDULE mirrors the published recipe; NESTED_SCHEDULE likewise.
FOUR_QUADRANT_SCHEDULE = TrainConfig()
NESTED_SCHEDULE = TrainConfig(
    lr_decay_iters=(40000, 80000, 120000, 160000), iters=200000, batch=64
)


def _forward(params, activations, betas, xs):
    pre, post = [], [xs]
    a = xs
    for (w, b), act, beta in zip(params, activations, betas):
        z = a @ w.T + b
        pre.append(z)
        a = activate(act, z, beta)
        post.append(a)
    return pre, post


def _backward(params, activations, betas, pre, post, gout):
    grads = []
    g = gout
    for li in range(len(params) - 1, -1, -1):
        w, _ = params[li]
        gz = g * activate_d1(activations[li], pre[li], betas[li])
        grads.append((gz.T @ post[li], gz.sum(axis=0)))
        g = gz @ w
    return grads[::-1]


def _loss_and_grad(kind, out, y):
    n = out.shape[0]
    if kind == "mse":
        r = out[:, 0] - y
        return float(np.mean(r * r)), (2.0 / n) * r[:, None]
    z = out - out.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    idx = np.arange(n), y.astype(np.intp)
    p = np.exp(logp)
    p[idx] -= 1.0
    return float(-logp[idx].mean()), p / n


def evaluate_loss(net: Network, xs: np.ndarray, ys: np.ndarray, loss: str = "mse") -> float:
    params = [(l.weight, l.bias) for l in net.layers]
    acts = [l.activation for l in net.layers]
    betas = [l.beta for l in net.layers]
    total, count = 0.0, 0
    for start in range(0, xs.shape[0], 65536):
        xb, yb = xs[start : start + 65536], ys[start : start + 65536]
        _, post = _forward(params, acts, betas, xb)
        value, _ = _loss_and_grad(loss, post[-1], yb)
        total += value * xb.shape[0]
        count += xb.shape[0]
    return total / count


def train(
    net: Network, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig
) -> tuple[Network, float]:
    """Fit ``net`` to (inputs, targets); returns the trained net and final full-data loss.

    Deterministic given ``cfg.seed``.  Raises TrainingDivergedError on a non-finite loss.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.input_dim:
        raise ValueError(f"inputs must have shape (N, {net.input_dim})")
    rng = np.random.default_rng(cfg.seed)
    params = [(l.weight.copy(), l.bias.copy()) for l in net.layers]
    acts = [l.activation for l in net.layers]
    betas = [l.beta for l in net.layers]
    sq = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    decay_at = set(cfg.lr_decay_iters)
    lr = cfg.lr
    n = inputs.shape[0]
    for it in range(cfg.iters):
        if it in decay_at:
            lr *= cfg.lr_decay_factor
        idx = rng.integers(0, n, size=cfg.batch)
        pre, post = _forward(params, acts, betas, inputs[idx])
        loss, gout = _loss_and_grad(cfg.loss, post[-1], targets[idx])
        if not np.isfinite(loss):
            raise TrainingDivergedError(it, loss)
        grads = _backward(params, acts, betas, pre, post, gout)
        for li, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
            if cfg.optimizer == "rmsprop":
                vw, vb = sq[li]
                vw *= RMSPROP_DECAY
                vw += (1 - RMSPROP_DECAY) * gw * gw
                vb *= RMSPROP_DECAY
                vb += (1 - RMSPROP_DECAY) * gb * gb
                w -= lr * gw / (np.sqrt(vw) + RMSPROP_EPS)
                b -= lr * gb / (np.sqrt(vb) + RMSPROP_EPS)
            else:
                w -= lr * gw
                b -= lr * gb
        if it % 10000 == 0:
            log.debug("iter %d loss %.3e lr %.1e", it, loss, lr)
    layers = tuple(
        replace(layer, weight=w, bias=b) for layer, (w, b) in zip(net.layers, params)
    )
    trained = replace(net, layers=layers)
    final = evaluate_loss(trained, inputs, targets, cfg.loss)
    if not np.isfinite(final):
        raise TrainingDivergedError(cfg.iters, final)
    return trained, final
