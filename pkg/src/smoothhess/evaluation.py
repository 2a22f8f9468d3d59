"""Taylor-like surrogates, perturbation MSE and second-order adversarial attacks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NoDescentDirectionError
from .sampling import substream

JACOBI_MAX_DIM = 64
JACOBI_TOL = 1e-12
ROOT_TOL = 1e-10
HARD_CASE_TOL = 1e-12

REPORT_COLUMNS = (
    "point_id",
    "method",
    "epsilon",
    "sigma2_or_beta",
    "value",
    "stderr",
    "k_used",
    "flipped",
)


@dataclass(frozen=True, eq=False)
class TaylorSurrogate:
    """Local quadratic model f(x0) + G^T (x - x0) + 1/2 (x - x0)^T H (x - x0)."""

    x0: np.ndarray
    f_x0: float
    grad: np.ndarray
    hess: np.ndarray | None = None

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        g = np.asarray(self.grad, dtype=np.float64).reshape(-1)
        d = x0.shape[0]
        h = np.zeros((d, d)) if self.hess is None else np.asarray(self.hess, dtype=np.float64)
        if g.shape != (d,) or h.shape != (d, d):
            raise DimensionError("surrogate gradient/Hessian do not match the point dimension")
        if not math.isfinite(self.f_x0):
            raise ValueError("f_x0 must be finite")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "grad", g)
        object.__setattr__(self, "hess", 0.5 * (h + h.T))
        object.__setattr__(self, "f_x0", float(self.f_x0))

    @classmethod
    def from_estimate(cls, f, est, second_order: bool = True) -> TaylorSurrogate:
        """Surrogate anchored at the true value f(x0) with the estimate's derivatives."""
        return cls(est.point, f.forward(est.point), est.grad, est.hessian if second_order else None)

    def __call__(self, x) -> float:
        return surrogate_eval(self, x)

    def batch_eval(self, xs: np.ndarray) -> np.ndarray:
        dx = np.asarray(xs, dtype=np.float64) - self.x0
        return self.f_x0 + dx @ self.grad + 0.5 * np.einsum("ni,ij,nj->n", dx, self.hess, dx)


def surrogate_eval(s: TaylorSurrogate, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != s.x0.shape:
        raise DimensionError(f"point has length {x.shape[0]}, surrogate expects {s.x0.shape[0]}")
    dx = x - s.x0
    return float(s.f_x0 + s.grad @ dx + 0.5 * dx @ s.hess @ dx)


def uniform_ball(n: int, d: int, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the radius-epsilon ball at the origin."""
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = epsilon * rng.random(n) ** (1.0 / d)
    return z * r[:, None]


def pmse(f, s: TaylorSurrogate, epsilon: float, n: int, seed: int) -> tuple[float, float]:
    """Ball-averaged squared error of ``s`` against ``f``; returns (mean, standard error)."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if n < 2:
        raise ValueError("n must be at least 2")
    d = s.x0.shape[0]
    chunk = 65536
    sq = []
    for b, start in enumerate(range(0, n, chunk)):
        m = min(chunk, n - start)
        xs = s.x0 + uniform_ball(m, d, epsilon, substream(seed, b))
        err = s.batch_eval(xs) - np.asarray(f.batch_forward(xs), dtype=np.float64)
        sq.append(err * err)
    sq = np.concatenate(sq)
    mean = math.fsum(sq) / n
    var = math.fsum((sq - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


# -- eigendecomposition ------------------------------------------------------


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = a.copy()
    d = a.shape[0]
    v = np.eye(d)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(d), v
    tol = JACOBI_TOL * scale
    for _ in range(100):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))  # direct sum; no cancellation
        if off <= tol:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = float(a[p, q])
                if apq == 0.0:
                    continue
                gap = float(a[q, q] - a[p, p])
                if abs(gap) > 1e150 * abs(apq):
                    t = apq / gap  # rotation angle ~ apq/gap; avoids overflow in tau^2
                else:
                    tau = gap / (2.0 * apq)
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - sn * cq
                a[:, q] = sn * cp + c * cq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    return np.diag(a).copy(), v


def eigendecompose_symmetric(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix sorted by |eigenvalue|, largest first.

    Cyclic Jacobi for d <= 64; LAPACK ``eigh`` above that.
    """
    h = np.asarray(H, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {h.shape}")
    if not np.allclose(h, h.T, rtol=0.0, atol=1e-8 * max(1.0, np.abs(h).max())):
        raise ValueError("matrix is not symmetric")
    h = 0.5 * (h + h.T)
    if h.shape[0] <= JACOBI_MAX_DIM:
        vals, vecs = _jacobi(h)
    else:
        vals, vecs = np.linalg.eigh(h)
    order = np.lexsort((-vals, -np.abs(vals)))
    return vals[order], vecs[:, order]


def truncate_rank(values, vectors, T: float):
    """Smallest k whose leading |eigenvalues| reach a fraction T of the total."""
    if not 0 < T <= 1:
        raise ValueError(f"threshold T must lie in (0, 1], got {T}")
    values = np.asarray(values, dtype=np.float64)
    mags = np.abs(values)
    total = mags.sum()
    if total == 0.0:
        return 0, values[:0], vectors[:, :0]
    csum = np.cumsum(mags)
    # the full sum may differ from csum[-1] by rounding; compare against csum[-1]
    k = int(np.searchsorted(csum, T * csum[-1] * (1 - 1e-15), side="left")) + 1
    k = min(k, int(np.count_nonzero(mags)))
    return k, values[:k], vectors[:, :k]


# -- trust-region attack -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class AttackResult:
    delta_star: np.ndarray
    epsilon: float
    k_used: int
    objective_value: float
    flipped: bool | None = None
    eigenvalues: np.ndarray | None = None


def _solve_trs_diag(g: np.ndarray, lam: np.ndarray, eps: float) -> np.ndarray:
    """argmin g^T x + 1/2 sum lam_i x_i^2 subject to |x| <= eps (diagonal model)."""
    k = g.shape[0]
    lam_min = float(lam.min())
    gnorm = float(np.linalg.norm(g))
    if lam_min > 0:
        x = -g / lam
        if np.linalg.norm(x) <= eps:
            return x
    if gnorm == 0.0:
        if lam_min >= 0:
            return np.zeros(k)
        x = np.zeros(k)
        x[int(np.argmin(lam))] = eps
        return x
    lo = max(0.0, -lam_min)
    lam_scale = max(1.0, float(np.abs(lam).max()))
    at_min = np.abs(lam - lam_min) <= 1e-14 * lam_scale
    if lam_min <= 0 and np.all(np.abs(g[at_min]) < HARD_CASE_TOL * gnorm):
        # hard case candidate: boundary not reachable through mu > -lam_min
        x = np.zeros(k)
        rest = ~at_min
        x[rest] = -g[rest] / (lam[rest] + lo)
        r = float(np.linalg.norm(x))
        if r <= eps:
            i = int(np.flatnonzero(at_min)[0])
            tau = math.sqrt(max(eps * eps - r * r, 0.0))
            x[i] = -tau if g[i] > 0 else tau
            return x

    hi = lo + gnorm / eps
    a, b = lo, hi
    mu = hi
    # safeguarded Newton on the secular equation 1/eps - 1/|x(mu)| = 0
    for _ in range(200):
        denom = lam + mu
        if np.any(denom <= 0):
            mu = 0.5 * (a + b)
            continue
        x = -g / denom
        r = float(np.linalg.norm(x))
        if abs(r - eps) <= ROOT_TOL * eps:
            break
        if r > eps:
            a = mu
        else:
            b = mu
        # d|x|/dmu = -(x^T (x / denom)) / |x|
        dr = -float(x @ (x / denom)) / r
        step = (eps - r) * r / (eps * dr) if dr != 0 else 0.0
        nxt = mu + step
        if not (a < nxt < b) or step == 0.0:
            nxt = 0.5 * (a + b)
        if nxt == mu:
            break
        mu = nxt
    return -g / (lam + mu)


def trust_region_attack(G, H, epsilon: float, T: float = 1.0) -> AttackResult:
    """Minimise G^T d + 1/2 d^T H d over |d| <= epsilon in H's leading eigen-subspace.

    The Hessian is truncated to the k eigenpairs chosen by ``truncate_rank``;
    the reduced problem is solved exactly and lifted back.  With no curvature
    left (H = 0 or k = 0) this is the first-order attack -epsilon G/|G|.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    G = np.asarray(G, dtype=np.float64).reshape(-1)
    d = G.shape[0]
    H = np.zeros((d, d)) if H is None else np.asarray(H, dtype=np.float64)
    if H.shape != (d, d):
        raise DimensionError("H must be d x d")
    H = 0.5 * (H + H.T)
    values, vectors = eigendecompose_symmetric(H)
    k, lam, Q = truncate_rank(values, vectors, T)
    gnorm = float(np.linalg.norm(G))
    if k == 0:
        if gnorm == 0.0:
            raise NoDescentDirectionError("gradient and Hessian are both zero")
        delta = -epsilon * G / gnorm
    else:
        x = _solve_trs_diag(Q.T @ G, lam, epsilon)
        delta = Q @ x
    norm = float(np.linalg.norm(delta))
    if norm > epsilon:
        delta *= epsilon / norm
    obj = float(G @ delta + 0.5 * delta @ H @ delta)
    return AttackResult(delta, float(epsilon), k, obj, None, lam.copy())


def first_order_attack(G, epsilon: float) -> AttackResult:
    G = np.asarray(G, dtype=np.float64).reshape(-1)
    gnorm = float(np.linalg.norm(G))
    if gnorm == 0.0:
        raise NoDescentDirectionError("gradient is zero")
    delta = -epsilon * G / gnorm
    return AttackResult(delta, float(epsilon), 0, float(G @ delta))


def random_attack(d: int, epsilon: float, rng: np.random.Generator) -> AttackResult:
    z = rng.standard_normal(d)
    delta = epsilon * z / np.linalg.norm(z)
    return AttackResult(delta, float(epsilon), 0, float("nan"))


def predicted_class(net, xs) -> np.ndarray:
    return np.argmax(net.outputs(np.atleast_2d(xs)), axis=1)


def with_flip(net, x0, result: AttackResult) -> AttackResult:
    """Copy of ``result`` with ``flipped`` set from the classifier's argmax."""
    before, after = predicted_class(net, np.stack([x0, x0 + result.delta_star]))
    return AttackResult(
        result.delta_star,
        result.epsilon,
        result.k_used,
        result.objective_value,
        bool(before != after),
        result.eigenvalues,
    )


def post_hoc_accuracy(net_multiclass, points, attacks: Sequence) -> float:
    """Fraction of points whose predicted class survives its attack (lower = stronger attack)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(attacks) != points.shape[0]:
        raise DimensionError(f"{points.shape[0]} points but {len(attacks)} attacks")
    deltas = np.stack(
        [a.delta_star if isinstance(a, AttackResult) else np.asarray(a, float) for a in attacks]
    )
    before = predicted_class(net_multiclass, points)
    after = predicted_class(net_multiclass, points + deltas)
    return float(np.mean(before == after))


def write_report_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _fmt(row.get(c, "")) for c in REPORT_COLUMNS})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return v
