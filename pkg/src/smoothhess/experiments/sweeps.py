"""Hessian-entry sweeps over the smoothing level (Gaussian sigma^2 or SoftPlus beta)."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from ..estimator import EstimatorConfig, estimate
from ..sampling import CovarianceModel, derive_seed


def _entry_key(i: int, j: int) -> str:
    return f"{i}_{j}"


def sweep_sigma(
    net,
    x0,
    sigma2_grid: Sequence[float],
    cfg: EstimatorConfig,
    entries: Sequence[tuple[int, int]],
    threads: int = 1,
) -> list[dict]:
    """SmoothHess entries at ``x0`` for each isotropic sigma^2.

    Grid point ``g`` uses the derived seed ``derive_seed(cfg.seed, g)``.
    """
    if len(sigma2_grid) == 0:
        raise ValueError("sigma2 grid is empty")
    x0 = np.asarray(x0, dtype=np.float64)
    rows = []
    for g, s2 in enumerate(sigma2_grid):
        cov = CovarianceModel.isotropic(float(s2), x0.shape[0])
        est = estimate(net, x0, cov, replace(cfg, seed=derive_seed(cfg.seed, g)), threads=threads)
        row = {"grid_index": g, "sigma2": float(s2), "log10_sigma2": math.log10(s2)}
        for i, j in entries:
            row["h_" + _entry_key(i, j)] = float(est.hessian[i, j])
            row["se_" + _entry_key(i, j)] = float(est.stderr_hessian[i, j])
        rows.append(row)
    return rows


def sweep_sigma_columns(entries) -> list[str]:
    cols = ["grid_index", "sigma2", "log10_sigma2"]
    for i, j in entries:
        cols += ["h_" + _entry_key(i, j), "se_" + _entry_key(i, j)]
    return cols


def sweep_beta(net, x0, beta_grid: Sequence[float], entries: Sequence[tuple[int, int]]) -> list[dict]:
    """Hessian entries of the SoftPlus clone of ``net`` at ``x0`` for each beta."""
    if len(beta_grid) == 0:
        raise ValueError("beta grid is empty")
    rows = []
    for g, beta in enumerate(beta_grid):
        h = net.softplus_clone(float(beta)).hessian_smooth(x0)
        row = {"grid_index": g, "beta": float(beta), "log10_beta": math.log10(beta)}
        for i, j in entries:
            row["h_" + _entry_key(i, j)] = float(h[i, j])
        rows.append(row)
    return rows


def sweep_beta_columns(entries) -> list[str]:
    return ["grid_index", "beta", "log10_beta"] + ["h_" + _entry_key(i, j) for i, j in entries]


def log_grid(lo_exp: float, hi_exp: float, num: int) -> list[float]:
    """``num`` values 10**e for e evenly spaced in [lo_exp, hi_exp]."""
    return [float(10.0**e) for e in np.linspace(lo_exp, hi_exp, num)]
