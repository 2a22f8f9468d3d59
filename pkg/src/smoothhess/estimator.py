"""Joint Monte-Carlo estimation of SmoothHess and SmoothGrad from gradient calls.

For ``delta_i ~ N(0, Sigma)`` the estimator averages
``Sigma^{-1} delta_i grad f(x0 + delta_i)^T`` and symmetrizes the result; the
gradients drawn along the way are averaged into SmoothGrad for free.

``f`` may be any object exposing ``input_dim`` and ``batch_gradient(xs)``
(a :class:`~smoothhess.net.Network`, a :class:`~smoothhess.net.SoftmaxHead`,
or a test function from :mod:`smoothhess.oracles`).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError
from .sampling import CovarianceModel, PerturbationStream


@dataclass(frozen=True)
class EstimatorConfig:
    batch_size: int = 1000
    n_batches: int = 100
    antithetic: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.n_batches < 1:
            raise ValueError("batch_size and n_batches must be positive")
        if self.antithetic and self.batch_size % 2:
            raise ValueError("antithetic sampling needs an even batch_size")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    @property
    def n_samples(self) -> int:
        return self.batch_size * self.n_batches

    @classmethod
    def for_samples(cls, n: int, batch_size: int = 1000, **kw) -> EstimatorConfig:
        batch_size = min(batch_size, n)
        if n % batch_size:
            raise ValueError(f"n={n} is not a multiple of batch_size={batch_size}")
        return cls(batch_size=batch_size, n_batches=n // batch_size, **kw)


@dataclass(frozen=True, eq=False)
class InteractionEstimate:
    hessian: np.ndarray
    grad: np.ndarray
    n_samples: int
    covariance: CovarianceModel
    seed: int
    point: np.ndarray
    stderr_hessian: np.ndarray
    stderr_grad: np.ndarray
    hessian_raw: np.ndarray = field(repr=False, default=None)

    @property
    def stderr_hessian_max(self) -> float:
        return float(np.max(self.stderr_hessian))

    @property
    def stderr_hessian_norm(self) -> float:
        """Frobenius norm of the elementwise standard errors (bounds the spectral-norm error scale)."""
        return float(np.linalg.norm(self.stderr_hessian))

    @property
    def stderr_grad_norm(self) -> float:
        return float(np.linalg.norm(self.stderr_grad))

    def to_dict(self) -> dict[str, Any]:
        return {
            "point": self.point.tolist(),
            "hessian": self.hessian.tolist(),
            "grad": self.grad.tolist(),
            "n": int(self.n_samples),
            "seed": int(self.seed),
            "covariance": self.covariance.to_spec(),
            "stderr_hessian_max": self.stderr_hessian_max,
        }


@dataclass
class _BatchTerms:
    grad_sum: np.ndarray
    outer: np.ndarray | None  # Sigma^{-1} sum_i delta_i g_i^T
    deltas: np.ndarray
    grads: np.ndarray


def _check_inputs(f, x0, cov: CovarianceModel) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    d = getattr(f, "input_dim", x0.shape[0])
    if x0.shape[0] != d:
        raise DimensionError(f"point has length {x0.shape[0]} but the function expects {d}")
    if cov.dim != d:
        raise DimensionError(f"covariance has dimension {cov.dim} but the function expects {d}")
    return x0


def _batch(f, x0, stream: PerturbationStream, b: int, with_hessian: bool) -> _BatchTerms:
    delta = stream.sample_batch(b)
    grads = np.asarray(f.batch_gradient(x0 + delta), dtype=np.float64)
    if not np.isfinite(grads).all():
        raise NonFiniteError(f"non-finite gradient in batch {b}")
    gsum = grads.sum(axis=0)
    outer = None
    if with_hessian:
        outer = stream.covariance.solve(np.einsum("ni,nj->ij", delta, grads))
    return _BatchTerms(gsum, outer, delta, grads)


def _ordered_batches(
    f, x0, stream: PerturbationStream, n_batches: int, with_hessian: bool, threads: int
) -> Iterator[_BatchTerms]:
    if threads <= 1:
        for b in range(n_batches):
            yield _batch(f, x0, stream, b, with_hessian)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        window = 4 * threads
        pending = []
        nxt = 0
        while nxt < n_batches or pending:
            while nxt < n_batches and len(pending) < window:
                pending.append(pool.submit(_batch, f, x0, stream, nxt, with_hessian))
                nxt += 1
            yield pending.pop(0).result()


class _Accumulator:
    """Running sums in extended precision, merged strictly in batch order."""

    def __init__(self, d: int, with_hessian: bool):
        self.count = 0
        self.batches = 0
        self.g = np.zeros(d, dtype=np.longdouble)
        self.g2 = np.zeros(d, dtype=np.longdouble)
        self.h = np.zeros((d, d), dtype=np.longdouble) if with_hessian else None
        self.h2 = np.zeros((d, d), dtype=np.longdouble) if with_hessian else None

    def add(self, terms: _BatchTerms, size: int):
        self.count += size
        self.batches += 1
        self.g += terms.grad_sum
        mg = terms.grad_sum / size
        self.g2 += mg.astype(np.longdouble) ** 2
        if self.h is not None:
            self.h += terms.outer
            mh = terms.outer / size
            mh = 0.5 * (mh + mh.T)
            self.h2 += mh.astype(np.longdouble) ** 2

    def snapshot(self, partial: _BatchTerms | None = None, extra: int = 0):
        """Current means (optionally including a partial batch that is not merged)."""
        count = self.count + extra
        g = self.g
        h = self.h
        if partial is not None:
            g = g + partial.grad_sum
            if h is not None:
                h = h + partial.outer
        grad = np.asarray(g / count, dtype=np.float64)
        hraw = None if h is None else np.asarray(h / count, dtype=np.float64)
        se_g, se_h = self._stderr()
        return grad, hraw, se_g, se_h

    def _stderr(self):
        k = self.batches
        if k < 2:
            return np.full(self.g.shape, np.nan), (
                None if self.h is None else np.full(self.h.shape, np.nan)
            )
        # batches all have equal size, so the batch means are i.i.d.
        mean_g = self.g / self.count
        var_g = (self.g2 / k - mean_g**2) * k / (k - 1)
        se_g = np.sqrt(np.maximum(np.asarray(var_g, dtype=np.float64), 0.0) / k)
        se_h = None
        if self.h is not None:
            mean_h = self.h / self.count
            mean_h = 0.5 * (mean_h + mean_h.T)
            var_h = (self.h2 / k - mean_h**2) * k / (k - 1)
            se_h = np.sqrt(np.maximum(np.asarray(var_h, dtype=np.float64), 0.0) / k)
        return se_g, se_h


def _make_estimate(acc: _Accumulator, cov, cfg, x0, extra=None, extra_n=0) -> InteractionEstimate:
    grad, hraw, se_g, se_h = acc.snapshot(extra, extra_n)
    hess = 0.5 * (hraw + hraw.T)
    return InteractionEstimate(
        hessian=hess,
        grad=grad,
        n_samples=acc.count + extra_n,
        covariance=cov,
        seed=cfg.seed,
        point=x0.copy(),
        stderr_hessian=se_h,
        stderr_grad=se_g,
        hessian_raw=hraw,
    )


def estimate_streaming(
    f,
    x0,
    cov: CovarianceModel,
    cfg: EstimatorConfig,
    checkpoints: Sequence[int],
    threads: int = 1,
) -> list[InteractionEstimate]:
    """Estimates at each checkpoint sample count, all taken from one pass over the stream."""
    checkpoints = [int(c) for c in checkpoints]
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly ascending")
    if checkpoints[0] < 1 or checkpoints[-1] > cfg.n_samples:
        raise ValueError(f"checkpoints must lie in [1, {cfg.n_samples}]")
    x0 = _check_inputs(f, x0, cov)
    stream = PerturbationStream(cfg.seed, cfg.batch_size, cov, cfg.antithetic)
    n1 = cfg.batch_size
    n_batches = -(-checkpoints[-1] // n1)
    acc = _Accumulator(x0.shape[0], True)
    out: list[InteractionEstimate] = []
    ci = 0
    for terms in _ordered_batches(f, x0, stream, n_batches, True, threads):
        # checkpoints strictly inside this batch use its leading rows, unmerged
        while ci < len(checkpoints) and checkpoints[ci] < acc.count + n1:
            r = checkpoints[ci] - acc.count
            part = _BatchTerms(
                terms.grads[:r].sum(axis=0),
                cov.solve(np.einsum("ni,nj->ij", terms.deltas[:r], terms.grads[:r])),
                terms.deltas[:r],
                terms.grads[:r],
            )
            out.append(_make_estimate(acc, cov, cfg, x0, part, r))
            ci += 1
        acc.add(terms, n1)
        while ci < len(checkpoints) and checkpoints[ci] == acc.count:
            out.append(_make_estimate(acc, cov, cfg, x0))
            ci += 1
    return out


def estimate(
    f, x0, cov: CovarianceModel, cfg: EstimatorConfig, threads: int = 1
) -> InteractionEstimate:
    """SmoothHess and SmoothGrad at ``x0`` from ``cfg.n_samples`` gradient calls."""
    x0 = _check_inputs(f, x0, cov)
    stream = PerturbationStream(cfg.seed, cfg.batch_size, cov, cfg.antithetic)
    acc = _Accumulator(x0.shape[0], True)
    for terms in _ordered_batches(f, x0, stream, cfg.n_batches, True, threads):
        acc.add(terms, cfg.batch_size)
    return _make_estimate(acc, cov, cfg, x0)


def smoothgrad(
    f, x0, cov: CovarianceModel, cfg: EstimatorConfig, threads: int = 1, return_stderr: bool = False
):
    """Mean gradient under N(0, Sigma) input noise; no outer products are formed."""
    x0 = _check_inputs(f, x0, cov)
    stream = PerturbationStream(cfg.seed, cfg.batch_size, cov, cfg.antithetic)
    acc = _Accumulator(x0.shape[0], False)
    for terms in _ordered_batches(f, x0, stream, cfg.n_batches, False, threads):
        acc.add(terms, cfg.batch_size)
    grad, _, se_g, _ = acc.snapshot()
    return (grad, se_g) if return_stderr else grad
