"""Reference computations shared by several test modules."""

import numpy as np


def grid_min_2d(G, H, eps, n_side=1000, n_circle=1_000_000):
    """Brute-force minimum of G.d + d.H.d/2 over the disk: interior grid plus a dense boundary."""
    t = np.linspace(-eps, eps, n_side)
    xx, yy = np.meshgrid(t, t)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    pts = pts[np.einsum("ij,ij->i", pts, pts) <= eps * eps]
    ang = np.linspace(0, 2 * np.pi, n_circle, endpoint=False)
    pts = np.vstack([pts, eps * np.stack([np.cos(ang), np.sin(ang)], axis=1)])
    vals = pts @ G + 0.5 * np.einsum("ni,ij,nj->n", pts, H, pts)
    return float(vals.min())


def random_sym(rng, d, scale=1.0):
    m = rng.standard_normal((d, d)) * scale
    return 0.5 * (m + m.T)
