"""Cross-validation of the estimator against independent references (``oracle-check``)."""

from __future__ import annotations

import numpy as np

from .estimator import EstimatorConfig, estimate
from .oracles import (
    QuadraticFunction,
    fd_smoothed_hessian,
    quadratic_smooth_hess,
    rank1_symmetrized_eigs,
    relu_neuron_network,
    relu_neuron_smooth,
)
from .sampling import CovarianceModel, covariance_from_directions, derive_seed, substream

Z = 5.0  # standard errors allowed


def _random_spd(rng, d):
    m = rng.standard_normal((d, d))
    return m @ m.T / d + 0.5 * np.eye(d)


def bias_near_kink(rng, w, x0, cov, margin: float = 2.5) -> float:
    """Bias putting the kink within ``margin`` noise standard deviations of x0.

    Far from the kink the gradient is almost never or almost always switched on;
    with a handful of switches in n draws the batch-means standard error is
    itself unreliable and a z-test on it is meaningless.
    """
    s = float(np.sqrt(w @ cov.matrix @ w))
    return float(rng.uniform(-margin, margin) * s - w @ x0)


def check_quadratic(seed: int, threads: int = 1, cases: int = 5, n: int = 100_000):
    worst = 0.0
    for c in range(cases):
        rng = substream(seed, c)
        d = int(rng.integers(2, 6))
        f = QuadraticFunction(rng.standard_normal((d, d)), rng.standard_normal(d))
        covs = [CovarianceModel.isotropic(float(rng.uniform(0.1, 2.0)), d), CovarianceModel.full(_random_spd(rng, d))]
        truth = quadratic_smooth_hess(f.A, f.b)
        for k, cov in enumerate(covs):
            cfg = EstimatorConfig(1000, n // 1000, False, derive_seed(seed, c, k))
            est = estimate(f, rng.standard_normal(d), cov, cfg, threads=threads)
            worst = max(worst, np.linalg.norm(est.hessian - truth, 2) / est.stderr_hessian_norm)
    return worst <= Z, f"max |H-H*|_2 / se = {worst:.2f}"


def check_relu_neuron(seed: int, threads: int = 1, cases: int = 5, n: int = 100_000):
    worst = 0.0
    for c in range(cases):
        rng = substream(seed, 100 + c)
        d = int(rng.integers(1, 9))
        w, x0 = rng.standard_normal(d), rng.standard_normal(d) * 0.5
        cov = CovarianceModel.full(_random_spd(rng, d))
        b = bias_near_kink(rng, w, x0, cov)
        _, g_true, h_true = relu_neuron_smooth(w, b, x0, cov)
        cfg = EstimatorConfig(1000, n // 1000, False, derive_seed(seed, 100 + c))
        est = estimate(relu_neuron_network(w, b), x0, cov, cfg, threads=threads)
        worst = max(
            worst,
            np.linalg.norm(est.hessian - h_true, 2) / est.stderr_hessian_norm,
            np.linalg.norm(est.grad - g_true) / est.stderr_grad_norm,
        )
    return worst <= Z, f"max error / se = {worst:.2f}"


def check_rank1(seed: int, cases: int = 200):
    worst = 0.0
    for c in range(cases):
        rng = substream(seed, 200 + c)
        d = int(rng.integers(2, 17))
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        lp, lm = rank1_symmetrized_eigs(x, y)
        ev = np.linalg.eigvalsh(np.outer(x, y) + np.outer(y, x))
        if not (lp >= 0 >= lm):
            return False, f"sign violated at case {c}"
        worst = max(worst, abs(lp - ev[-1]), abs(lm - ev[0]))
    return worst <= 1e-10, f"max eigenvalue error = {worst:.1e}"


def check_zeroth_order(seed: int, n: int = 1_000_000):
    """Finite differences of the zeroth-order smoothed value against the closed forms."""
    rng = substream(seed, 300)
    a = rng.standard_normal((2, 2))
    f = QuadraticFunction(a, rng.standard_normal(2))
    cov = covariance_from_directions([[1.0, 1.0]], [0.4], fill_variance=0.2)
    h_q = fd_smoothed_hessian(f, [0.3, -0.2], cov, n, derive_seed(seed, 301), h=0.05)
    err_q = np.abs(h_q - quadratic_smooth_hess(a)).max()
    w, b, x0 = np.array([1.0, -0.5]), 0.1, np.array([0.2, 0.1])
    h_n = fd_smoothed_hessian(relu_neuron_network(w, b), x0, cov, n, derive_seed(seed, 302), h=0.05)
    err_n = np.abs(h_n - relu_neuron_smooth(w, b, x0, cov)[2]).max()
    err = max(err_q, err_n)
    return err <= 1e-2, f"max |FD - closed form| = {err:.1e}"


def run_all(seed: int = 0, threads: int = 1):
    suites = [
        ("quadratic-smoothhess", lambda: check_quadratic(seed, threads)),
        ("relu-neuron-closed-form", lambda: check_relu_neuron(seed, threads)),
        ("rank1-symmetrized-eigs", lambda: check_rank1(seed)),
        ("zeroth-order-finite-difference", lambda: check_zeroth_order(seed)),
    ]
    out = []
    for name, fn in suites:
        passed, detail = fn()
        out.append((name, bool(passed), detail))
    return out
