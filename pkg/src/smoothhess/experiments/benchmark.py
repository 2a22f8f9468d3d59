"""Desk-scale P_MSE and adversarial-attack benchmarks.

Hyperparameters (Gaussian sigma, SoftPlus beta) are picked per epsilon on a
validation set of points disjoint from the test points, then every method is
scored on the test points.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
import numpy as np

from ..errors import NoDescentDirectionError
from ..estimator import EstimatorConfig, estimate
from ..evaluation import (
    AttackResult,
    TaylorSurrogate,
    first_order_attack,
    pmse,
    post_hoc_accuracy,
    random_attack,
    trust_region_attack,
    with_flip,
)
from ..net import Network, SoftmaxHead
from ..sampling import CovarianceModel, derive_seed, sigma_for_radius, substream

log = logging.getLogger(__name__)

PMSE_METHODS = ("SH+SG", "SG", "SP(H+G)", "SP G", "G")
ATTACK_METHODS = ("SH+SG", "SG", "random")


def default_beta_grid(num: int = 20) -> list[float]:
    return [float(v) for v in np.logspace(-1, 4, num)]


@dataclass(frozen=True)
class PmseConfig:
    epsilons: tuple[float, ...] = (0.25, 0.5, 1.0)
    methods: tuple[str, ...] = PMSE_METHODS
    sigma_factors: tuple[float, ...] = (0.5, 0.75, 1.0)
    beta_grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_beta_grid()))
    n_test: int = 16
    n_val: int = 8
    n_estimate: int = 8000
    batch_size: int = 1000
    antithetic: bool = True
    pmse_samples: int = 2000
    point_box: float = 1.5
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.methods) - set(PMSE_METHODS)
        if unknown:
            raise ValueError(f"unknown P_MSE methods {sorted(unknown)}; choose from {PMSE_METHODS}")
        if not self.epsilons or min(self.epsilons) <= 0:
            raise ValueError("epsilons must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> PmseConfig:
        names = set(cls.__dataclass_fields__)
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items() if k in names}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def pick_points(inputs: np.ndarray, n: int, seed: int, box: float) -> np.ndarray:
    pool = inputs[np.all(np.abs(inputs) <= box, axis=1)]
    idx = substream(seed, 0).choice(pool.shape[0], size=n, replace=False)
    return pool[idx]


def split_points(inputs, n_val, n_test, seed, box=np.inf):
    pts = pick_points(inputs, n_val + n_test, seed, box)
    return pts[:n_val], pts[n_val:]


class _EstimateCache:
    """SmoothHess/SmoothGrad estimates keyed by (point index, sigma)."""

    def __init__(self, f, points, cfg: EstimatorConfig, seed: int, threads: int):
        self.f, self.points, self.cfg, self.seed, self.threads = f, points, cfg, seed, threads
        self._cache: dict = {}

    def get(self, p: int, sigma: float):
        key = (p, float(sigma))
        if key not in self._cache:
            d = self.points.shape[1]
            cov = CovarianceModel.isotropic(sigma * sigma, d)
            s_key = int(round(sigma * 1e9))
            cfg = EstimatorConfig(
                self.cfg.batch_size,
                self.cfg.n_batches,
                self.cfg.antithetic,
                derive_seed(self.seed, p, s_key),
            )
            self._cache[key] = estimate(self.f, self.points[p], cov, cfg, threads=self.threads)
        return self._cache[key]


def _surrogate(method, f, x0, f_x0, hp, cache: _EstimateCache, p):
    if method == "G":
        return TaylorSurrogate(x0, f_x0, f.gradient(x0))
    if method in ("SG", "SH+SG"):
        est = cache.get(p, hp)
        return TaylorSurrogate(x0, f_x0, est.grad, est.hessian if method == "SH+SG" else None)
    sp = f.softplus_clone(hp)
    g = sp.gradient(x0)
    h = sp.hessian_smooth(x0) if method == "SP(H+G)" else None
    return TaylorSurrogate(x0, f_x0, g, h)


def _hyper_grid(method, eps, d, cfg: PmseConfig):
    if method == "G":
        return [None]
    if method in ("SG", "SH+SG"):
        return [fct * sigma_for_radius(eps, d) for fct in cfg.sigma_factors]
    return list(cfg.beta_grid)


def run_pmse_benchmark(
    net: Network, inputs: np.ndarray, cfg: PmseConfig, threads: int = 1
) -> tuple[list[dict], list[dict]]:
    """Returns (summary rows per method and epsilon, per-test-point report rows)."""
    d = net.input_dim
    val_pts, test_pts = split_points(inputs, cfg.n_val, cfg.n_test, cfg.seed, cfg.point_box)
    est_cfg = EstimatorConfig.for_samples(cfg.n_estimate, cfg.batch_size, antithetic=cfg.antithetic)
    caches = {
        "val": _EstimateCache(net, val_pts, est_cfg, derive_seed(cfg.seed, 1), threads),
        "test": _EstimateCache(net, test_pts, est_cfg, derive_seed(cfg.seed, 2), threads),
    }
    pts = {"val": val_pts, "test": test_pts}
    fvals = {k: net.batch_forward(v) for k, v in pts.items()}

    def score(split, method, eps_i, eps, hp, p):
        x0 = pts[split][p]
        s = _surrogate(method, net, x0, float(fvals[split][p]), hp, caches[split], p)
        seed = derive_seed(cfg.seed, 3 if split == "val" else 4, p, eps_i)
        return pmse(net, s, eps, cfg.pmse_samples, seed)

    summary, report = [], []
    for eps_i, eps in enumerate(cfg.epsilons):
        for method in cfg.methods:
            grid = _hyper_grid(method, eps, d, cfg)
            best, best_val = grid[0], math.inf
            if len(grid) > 1:
                for hp in grid:
                    v = float(np.mean([score("val", method, eps_i, eps, hp, p)[0] for p in range(cfg.n_val)]))
                    if v < best_val:
                        best, best_val = hp, v
            vals = []
            for p in range(cfg.n_test):
                m, se = score("test", method, eps_i, eps, best, p)
                vals.append(m)
                hp_out = "" if best is None else (best * best if method in ("SG", "SH+SG") else best)
                report.append(
                    {
                        "point_id": p,
                        "method": method,
                        "epsilon": eps,
                        "sigma2_or_beta": hp_out,
                        "value": m,
                        "stderr": se,
                    }
                )
            vals = np.asarray(vals)
            summary.append(
                {
                    "method": method,
                    "epsilon": eps,
                    "sigma2_or_beta": "" if best is None else (best * best if method in ("SG", "SH+SG") else best),
                    "value": float(vals.mean()),
                    "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan"),
                }
            )
            log.info("P_MSE %s eps=%g: %.4g", method, eps, vals.mean())
    return summary, report


SUMMARY_COLUMNS = ("method", "epsilon", "sigma2_or_beta", "value", "stderr")


# -- attacks -----------------------------------------------------------------


@dataclass(frozen=True)
class AttackConfig:
    epsilons: tuple[float, ...] = (0.25, 0.5, 0.75)
    methods: tuple[str, ...] = ATTACK_METHODS
    sigma_factors: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    threshold: float = 1.0
    n_estimate: int = 2000
    batch_size: int = 1000
    antithetic: bool = True
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.methods) - set(ATTACK_METHODS)
        if unknown:
            raise ValueError(f"unknown attack methods {sorted(unknown)}; choose from {ATTACK_METHODS}")

    @classmethod
    def from_dict(cls, data: dict) -> AttackConfig:
        names = set(cls.__dataclass_fields__)
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items() if k in names}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def attack_point(
    net: Network, x0, method: str, eps: float, est=None, threshold: float = 1.0, rng=None
) -> AttackResult:
    """Attack one point with a given method; ``est`` supplies SmoothGrad/SmoothHess."""
    x0 = np.asarray(x0, dtype=np.float64)
    try:
        if method == "random":
            res = random_attack(x0.shape[0], eps, rng)
        elif method == "SG":
            res = first_order_attack(est.grad, eps)
        elif method == "SH+SG":
            res = trust_region_attack(est.grad, est.hessian, eps, threshold)
        else:
            raise ValueError(f"unknown attack method {method!r}")
    except NoDescentDirectionError:
        res = AttackResult(np.zeros_like(x0), float(eps), 0, 0.0)
    return with_flip(net, x0, res)


def run_attack_benchmark(
    net: Network,
    val_points: np.ndarray,
    test_points: np.ndarray,
    cfg: AttackConfig,
    threads: int = 1,
) -> tuple[list[dict], list[dict]]:
    """Post-hoc accuracy per (method, epsilon) on the predicted-class SoftMax probability.

    Returns (summary rows, per-point report rows).
    """
    d = net.input_dim
    est_cfg = EstimatorConfig.for_samples(cfg.n_estimate, cfg.batch_size, antithetic=cfg.antithetic)
    pts = {"val": np.asarray(val_points, float), "test": np.asarray(test_points, float)}
    caches = {}
    for split, x in pts.items():
        cls = np.argmax(net.outputs(x), axis=1)
        caches[split] = [
            _EstimateCache(
                SoftmaxHead(net, int(c)), x, est_cfg, derive_seed(cfg.seed, 10 if split == "val" else 11), threads
            )
            for c in cls
        ]

    def run(split, method, eps_i, eps, sigma):
        out = []
        for p, x0 in enumerate(pts[split]):
            est = None if method == "random" else caches[split][p].get(p, sigma)
            rng = substream(derive_seed(cfg.seed, 12 if split == "val" else 13, eps_i), p)
            out.append(attack_point(net, x0, method, eps, est, cfg.threshold, rng))
        return out

    summary, report = [], []
    for eps_i, eps in enumerate(cfg.epsilons):
        for method in cfg.methods:
            sigma = None
            if method != "random":
                grid = [f * sigma_for_radius(eps, d) for f in cfg.sigma_factors]
                accs = [post_hoc_accuracy(net, pts["val"], run("val", method, eps_i, eps, s)) for s in grid]
                sigma = grid[int(np.argmin(accs))]
            results = run("test", method, eps_i, eps, sigma)
            acc = post_hoc_accuracy(net, pts["test"], results)
            hp = "" if sigma is None else sigma * sigma
            for p, r in enumerate(results):
                report.append(
                    {
                        "point_id": p,
                        "method": method,
                        "epsilon": eps,
                        "sigma2_or_beta": hp,
                        "value": r.objective_value,
                        "stderr": "",
                        "k_used": r.k_used,
                        "flipped": r.flipped,
                    }
                )
            summary.append({"method": method, "epsilon": eps, "sigma2_or_beta": hp, "value": acc, "stderr": ""})
            log.info("attack %s eps=%g: post-hoc accuracy %.3f", method, eps, acc)
    return summary, report
