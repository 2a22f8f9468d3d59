"""Closed-form and brute-force references for checking the estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DegenerateCovarianceError, DimensionError
from .sampling import CovarianceModel, PerturbationStream

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(t: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * t * t)


@dataclass(frozen=True)
class QuadraticFunction:
    """f(x) = 1/2 x^T A x + b^T x + c, with the same oracle surface as a Network."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if a.shape != (b.shape[0], b.shape[0]):
            raise DimensionError("A must be d x d with d = len(b)")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "b", b)

    @property
    def input_dim(self) -> int:
        return self.b.shape[0]

    def batch_forward(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        return 0.5 * np.einsum("ni,ij,nj->n", xs, self.A, xs) + xs @ self.b + self.c

    def forward(self, x) -> float:
        return float(self.batch_forward(np.asarray(x, dtype=np.float64)[None, :])[0])

    __call__ = forward

    def batch_gradient(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        sym = 0.5 * (self.A + self.A.T)
        return np.einsum("nk,jk->nj", xs, sym) + self.b

    def gradient(self, x) -> np.ndarray:
        return self.batch_gradient(np.asarray(x, dtype=np.float64)[None, :])[0]


def quadratic_smooth_hess(A, b=None) -> np.ndarray:
    """SmoothHess of 1/2 x^T A x + b^T x: (A + A^T)/2 for every covariance and point."""
    a = np.asarray(A, dtype=np.float64)
    return 0.5 * (a + a.T)


def relu_neuron_smooth(w, b: float, x0, cov: CovarianceModel):
    """Gaussian-smoothed value, gradient and Hessian of max(0, w^T x + b) at ``x0``.

    With z = w^T x0 + b and s^2 = w^T Sigma w the pre-activation under noise is
    N(z, s^2), giving value z*Phi(z/s) + s*phi(z/s), gradient w*Phi(z/s) and
    Hessian w w^T phi(z/s)/s.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if w.shape != x0.shape or cov.dim != w.shape[0]:
        raise DimensionError("w, x0 and the covariance must share one dimension")
    s2 = float(w @ cov.matrix @ w)
    if s2 < 1e-14:
        raise DegenerateCovarianceError(f"w^T Sigma w = {s2:.3e} is too small")
    s = math.sqrt(s2)
    z = float(w @ x0 + b)
    t = z / s
    cdf = float(ndtr(t))
    pdf = _phi(t)
    value = z * cdf + s * pdf
    return value, w * cdf, np.outer(w, w) * (pdf / s)


def relu_neuron_network(w, b: float):
    """The single neuron max(0, w^T x + b) as a Network."""
    from .net import Layer, Network

    w = np.asarray(w, dtype=np.float64).reshape(1, -1)
    return Network(w.shape[1], (Layer(w, np.array([float(b)]), "relu"),), 0)


def smoothed_value_mc(f, x0, cov: CovarianceModel, n: int, seed: int, return_stderr: bool = False):
    """Zeroth-order estimate of E[f(x0 + delta)], delta ~ N(0, Sigma)."""
    if n < 1:
        raise ValueError("n must be positive")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    batch = min(n, 65536)
    stream = PerturbationStream(seed, batch, cov)
    total = 0.0
    total2 = 0.0
    done = 0
    b = 0
    while done < n:
        delta = stream.sample_batch(b)[: n - done]
        vals = np.asarray(f.batch_forward(x0 + delta), dtype=np.float64)
        total += math.fsum(vals)
        total2 += math.fsum(vals * vals)
        done += delta.shape[0]
        b += 1
    mean = total / n
    if not return_stderr:
        return mean
    var = max(total2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def fd_smoothed_hessian(f, x0, cov: CovarianceModel, n: int, seed: int, h: float) -> np.ndarray:
    """Finite-difference Hessian of the MC-smoothed value (d <= 3).

    Every evaluation reuses the same perturbations (common random numbers), so
    the difference quotient sees only the smoothing of f, not fresh MC noise.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    d = x0.shape[0]
    if d > 3:
        raise DimensionError("the finite-difference oracle is limited to d <= 3")
    eye = np.eye(d)

    def hval(p):
        return smoothed_value_mc(f, p, cov, n, seed)

    H = np.empty((d, d))
    f0 = hval(x0)
    for i in range(d):
        H[i, i] = (hval(x0 + h * eye[i]) - 2 * f0 + hval(x0 - h * eye[i])) / (h * h)
        for j in range(i + 1, d):
            pp = hval(x0 + h * (eye[i] + eye[j]))
            pm = hval(x0 + h * (eye[i] - eye[j]))
            mp = hval(x0 - h * (eye[i] - eye[j]))
            mm = hval(x0 - h * (eye[i] + eye[j]))
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h * h)
    return H


def rank1_symmetrized_eigs(x, y) -> tuple[float, float]:
    """Extreme eigenvalues of x y^T + y x^T: x.y +- |x||y| (all others are zero)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    dot = float(x @ y)
    norms = float(np.linalg.norm(x) * np.linalg.norm(y))
    # Cauchy-Schwarz can fail by an ulp in floating point
    lam_plus = max(dot + norms, 0.0)
    lam_minus = min(dot - norms, 0.0)
    return lam_plus, lam_minus
