"""Gaussian covariance models and reproducible perturbation streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import DegenerateCovarianceError, DimensionError

PD_RELATIVE_PIVOT = 1e-12
GS_PIVOT = 1e-10


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Positive-definite covariance in one of three representations.

    ``kind`` is ``"isotropic"`` (``sigma2`` scalar, ``dim`` required),
    ``"diagonal"`` (``variances``) or ``"full"`` (``matrix``).  The Cholesky
    factor and inverse are computed once at construction.
    """

    kind: str
    dim: int
    sigma2: float | None = None
    variances: np.ndarray | None = None
    matrix_: np.ndarray | None = None
    # eigenbasis, when the model was built from directions
    eigvecs: np.ndarray | None = None
    eigvals: np.ndarray | None = None
    _factor: np.ndarray = field(init=False, repr=False)
    _inverse: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.dim
        if self.kind == "isotropic":
            if self.sigma2 is None or not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
                raise DegenerateCovarianceError(f"sigma2 must be positive, got {self.sigma2}")
            sigma = math.sqrt(self.sigma2)
            factor = np.eye(d) * sigma
            inverse = np.eye(d) / self.sigma2
        elif self.kind == "diagonal":
            v = np.asarray(self.variances, dtype=np.float64).reshape(-1)
            if v.shape[0] != d:
                raise DimensionError(f"expected {d} variances, got {v.shape[0]}")
            if not (np.isfinite(v).all() and (v > 0).all()):
                raise DegenerateCovarianceError("variances must be positive and finite")
            object.__setattr__(self, "variances", v)
            factor = np.diag(np.sqrt(v))
            inverse = np.diag(1.0 / v)
        elif self.kind == "full":
            m = np.asarray(self.matrix_, dtype=np.float64)
            if m.shape != (d, d):
                raise DimensionError(f"covariance must be {d}x{d}, got {m.shape}")
            if not np.isfinite(m).all():
                raise DegenerateCovarianceError("covariance must be finite")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise DegenerateCovarianceError("covariance must be symmetric")
            m = 0.5 * (m + m.T)
            tol = PD_RELATIVE_PIVOT * np.trace(m) / d
            try:
                factor = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise DegenerateCovarianceError("covariance is not positive definite") from None
            if not (np.diag(factor) ** 2 > tol).all():
                raise DegenerateCovarianceError("covariance is numerically singular")
            object.__setattr__(self, "matrix_", m)
            inverse = cho_solve((factor, True), np.eye(d))
            inverse = 0.5 * (inverse + inverse.T)
        else:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        factor.flags.writeable = False
        inverse.flags.writeable = False
        object.__setattr__(self, "_factor", factor)
        object.__setattr__(self, "_inverse", inverse)

    # -- constructors ----------------------------------------------------

    @classmethod
    def isotropic(cls, sigma2: float, dim: int) -> CovarianceModel:
        return cls("isotropic", dim, sigma2=float(sigma2))

    @classmethod
    def diagonal(cls, variances: Sequence[float]) -> CovarianceModel:
        v = np.asarray(variances, dtype=np.float64).reshape(-1)
        return cls("diagonal", v.shape[0], variances=v)

    @classmethod
    def full(cls, matrix) -> CovarianceModel:
        m = np.asarray(matrix, dtype=np.float64)
        return cls("full", m.shape[0], matrix_=m)

    # -- views -----------------------------------------------------------

    @property
    def matrix(self) -> np.ndarray:
        if self.kind == "isotropic":
            return np.eye(self.dim) * self.sigma2
        if self.kind == "diagonal":
            return np.diag(self.variances)
        return self.matrix_.copy()

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular L with L L^T = Sigma."""
        return self._factor

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard-normal rows ``z`` to N(0, Sigma) rows."""
        if self.kind == "isotropic":
            return z * math.sqrt(self.sigma2)
        if self.kind == "diagonal":
            return z * np.sqrt(self.variances)
        return np.einsum("nk,jk->nj", z, self._factor)

    def solve(self, m: np.ndarray) -> np.ndarray:
        """Sigma^{-1} @ m for a vector or a (d, k) matrix."""
        if self.kind == "isotropic":
            return m / self.sigma2
        if self.kind == "diagonal":
            v = self.variances
            return m / (v if m.ndim == 1 else v[:, None])
        y = solve_triangular(self._factor, m, lower=True)
        return solve_triangular(self._factor, y, lower=True, trans="T")

    def mahalanobis(self, v: np.ndarray) -> np.ndarray:
        """v^T Sigma^{-1} v for a vector or for each row of a matrix."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            return float(v @ self.solve(v))
        return np.einsum("nk,kn->n", v, self.solve(v.T))

    def log_density(self, v: np.ndarray):
        """Log of the N(0, Sigma) density at v (vector or rows)."""
        logdet = 2.0 * np.log(np.diag(self._factor)).sum()
        return -0.5 * (self.dim * math.log(2 * math.pi) + logdet + self.mahalanobis(v))

    def density(self, v: np.ndarray):
        return np.exp(self.log_density(v))

    # -- serialization ---------------------------------------------------

    def to_spec(self) -> dict[str, Any]:
        if self.kind == "isotropic":
            return {"kind": "isotropic", "sigma2": self.sigma2}
        if self.kind == "diagonal":
            return {"kind": "diagonal", "variances": self.variances.tolist()}
        return {"kind": "full", "matrix": self.matrix_.tolist()}

    @classmethod
    def from_spec(cls, spec: dict[str, Any], dim: int | None = None) -> CovarianceModel:
        kind = spec.get("kind")
        if kind == "isotropic":
            if dim is None:
                raise DimensionError("isotropic covariance spec needs the input dimension")
            return cls.isotropic(float(spec["sigma2"]), dim)
        if kind == "diagonal":
            model = cls.diagonal(spec["variances"])
        elif kind == "full":
            model = cls.full(spec["matrix"])
        elif kind == "directions":
            model = covariance_from_directions(
                spec["directions"], spec["variances"], float(spec["fill_variance"])
            )
        else:
            raise ValueError(f"unknown covariance kind {kind!r}")
        if dim is not None and model.dim != dim:
            raise DimensionError(f"covariance has dimension {model.dim}, expected {dim}")
        return model

    def __eq__(self, other):
        if not isinstance(other, CovarianceModel):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


def sigma_for_radius(epsilon: float, d: int) -> float:
    """Isotropic standard deviation whose Gaussian shell sits near radius ``epsilon``."""
    return epsilon / math.sqrt(d)


def covariance_from_directions(
    directions: Sequence[Sequence[float]],
    variances: Sequence[float],
    fill_variance: float,
) -> CovarianceModel:
    """Covariance with prescribed variances along user directions.

    The directions are orthonormalised with modified Gram-Schmidt, completed
    to a basis from the standard basis vectors, and every completing direction
    receives ``fill_variance``.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    variances = np.asarray(variances, dtype=np.float64).reshape(-1)
    k, d = dirs.shape
    if variances.shape[0] != k:
        raise DimensionError(f"{k} directions but {variances.shape[0]} variances")
    if k > d:
        raise DegenerateCovarianceError(f"{k} directions exceed dimension {d}")
    if not ((variances > 0).all() and fill_variance > 0):
        raise DegenerateCovarianceError("variances must be positive")
    basis: list[np.ndarray] = []
    for i, v in enumerate(dirs):
        norm = np.linalg.norm(v)
        if not norm > 0:
            raise DegenerateCovarianceError(f"direction {i} is zero")
        u = v / norm
        for q in basis:
            u = u - (q @ u) * q
        r = np.linalg.norm(u)
        if r < GS_PIVOT:
            raise DegenerateCovarianceError(f"direction {i} is linearly dependent on earlier ones")
        basis.append(u / r)
    # complete with the standard basis vector of largest residual each time
    while len(basis) < d:
        cands = np.eye(d)
        for q in basis:
            cands = cands - np.outer(cands @ q, q)
        j = int(np.argmax(np.linalg.norm(cands, axis=1)))
        u = cands[j]
        for q in basis:  # second pass for orthogonality
            u = u - (q @ u) * q
        basis.append(u / np.linalg.norm(u))
    q = np.column_stack(basis)
    vals = np.concatenate([variances, np.full(d - k, float(fill_variance))])
    sigma = (q * vals) @ q.T
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceModel("full", d, matrix_=sigma, eigvecs=q, eigvals=vals)


def substream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, index), independent of call order."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *indices: int) -> int:
    """Deterministic 64-bit child seed (hash of the parent seed and indices)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class PerturbationStream:
    seed: int
    batch_size: int
    covariance: CovarianceModel
    antithetic: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.antithetic and self.batch_size % 2:
            raise ValueError("antithetic sampling needs an even batch_size")

    def sample_batch(self, batch_index: int) -> np.ndarray:
        """Batch ``batch_index`` of N(0, Sigma) draws; a pure function of (seed, index).

        With antithetic sampling rows come in adjacent pairs (delta, -delta), so
        any even-length prefix of the batch is itself balanced and its column
        sums are exactly zero.
        """
        if batch_index < 0:
            raise ValueError("batch_index must be non-negative")
        rng = substream(self.seed, batch_index)
        d = self.covariance.dim
        if self.antithetic:
            half = self.covariance.sample(rng.standard_normal((self.batch_size // 2, d)))
            out = np.empty((self.batch_size, d))
            out[0::2] = half
            out[1::2] = -half
            return out
        return self.covariance.sample(rng.standard_normal((self.batch_size, d)))


def sample_batch(stream: PerturbationStream, batch_index: int) -> np.ndarray:
    return stream.sample_batch(batch_index)
