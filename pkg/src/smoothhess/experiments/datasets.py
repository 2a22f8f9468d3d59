"""Synthetic 2-D regression datasets with known local interactions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# interaction constant per quadrant (Q1..Q4, counter-clockwise from x1>0, x2>0)
QUADRANT_K = (5.0, 3.0, 12.0, -10.0)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    name: str
    grid_spacing: float

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.targets).all()):
            raise ValueError("dataset values must be finite")

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def grid(spacing: float, low: float = -2.0, high: float = 2.0) -> np.ndarray:
    """Square grid with inclusive endpoints, flattened to (m*m, 2), x1-major."""
    if not 0 < spacing <= 1:
        raise ValueError(f"spacing must lie in (0, 1], got {spacing}")
    m = int(round((high - low) / spacing)) + 1
    axis = np.linspace(low, high, m)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([x1.ravel(), x2.ravel()])


def quadrant_constant(x: np.ndarray) -> np.ndarray:
    """Per-point K; axis points take the first quadrant (in Q1..Q4 order) whose closure holds them."""
    x = np.atleast_2d(x)
    x1, x2 = x[:, 0], x[:, 1]
    k = np.empty(x.shape[0])
    q4 = (x1 >= 0) & (x2 <= 0)
    q3 = (x1 <= 0) & (x2 <= 0)
    q2 = (x1 <= 0) & (x2 >= 0)
    q1 = (x1 >= 0) & (x2 >= 0)
    # later assignments win, so apply lowest priority first
    k[q4] = QUADRANT_K[3]
    k[q3] = QUADRANT_K[2]
    k[q2] = QUADRANT_K[1]
    k[q1] = QUADRANT_K[0]
    return k


def four_quadrant_label(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return quadrant_constant(x) * x[:, 0] * x[:, 1]


def nested_label(x: np.ndarray) -> np.ndarray:
    """Nested interactions: closed balls of radius 0.6 and 1.2 around the origin."""
    x = np.atleast_2d(x)
    x1, x2 = x[:, 0], x[:, 1]
    r = np.hypot(x1, x2)
    return np.where(
        r <= 0.6, 0.5 * x1 * x1 + x1 * x2, np.where(r <= 1.2, x1 * x2, -5.0 * x1 * x2)
    )


def gen_four_quadrant(spacing: float = 0.008) -> Dataset:
    xs = grid(spacing)
    return Dataset(xs, four_quadrant_label(xs), "four-quadrant", spacing)


def gen_nested_interactions(spacing: float = 0.008) -> Dataset:
    xs = grid(spacing)
    return Dataset(xs, nested_label(xs), "nested", spacing)


def gen_blobs(
    n_per_class: int,
    seed: int,
    centers=((-1.0, -0.6), (1.0, -0.6), (0.0, 1.0)),
    scale: float = 0.45,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs for a small multi-class classifier; returns (inputs, integer labels)."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    xs = np.concatenate([c + scale * rng.standard_normal((n_per_class, 2)) for c in centers])
    ys = np.repeat(np.arange(len(centers)), n_per_class)
    return xs, ys


GENERATORS = {
    "four-quadrant": gen_four_quadrant,
    "nested": gen_nested_interactions,
}
