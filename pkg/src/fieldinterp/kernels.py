"""Covariance kernels for locally stationary random fields on [0, 1]^d.

Points are arrays whose last axis holds the d coordinates; all kernel
methods broadcast over the leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

#: Increment variances below ``-NEG_TOL`` indicate an invalid kernel.
NEG_TOL = 1e-10


class DimensionError(ValueError):
    """Point dimension does not match the model or decomposition."""


class NonPSDKernelError(ValueError):
    """A kernel produced a clearly negative variance."""


@dataclass(frozen=True)
class Decomposition:
    """Partition of the d coordinates into k consecutive blocks of sizes ``l``."""

    l: tuple[int, ...]

    def __init__(self, l: Sequence[int]):
        l = tuple(int(x) for x in np.atleast_1d(l))
        if len(l) == 0 or any(x < 1 for x in l):
            raise ValueError(f"component sizes must be positive integers, got {l}")
        object.__setattr__(self, "l", l)

    @property
    def d(self) -> int:
        return sum(self.l)

    @property
    def k(self) -> int:
        return len(self.l)

    @property
    def bounds(self) -> tuple[int, ...]:
        """Cumulative sums L_0 = 0, ..., L_k = d."""
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.l)]))

    def slices(self) -> list[slice]:
        b = self.bounds
        return [slice(b[j], b[j + 1]) for j in range(self.k)]

    def component_of(self, i: int) -> int:
        """Component holding coordinate ``i`` (0-based in both)."""
        if not 0 <= i < self.d:
            raise IndexError(i)
        return int(np.searchsorted(self.bounds, i, side="right")) - 1

    def expand(self, values: Sequence[float]) -> np.ndarray:
        """Repeat a per-component vector into a per-coordinate vector."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.k,):
            raise DimensionError(f"expected {self.k} component values, got shape {values.shape}")
        return np.repeat(values, self.l)


@dataclass(frozen=True)
class Smoothness:
    """Per-component Hoelder exponents, each in (0, 2)."""

    alpha: tuple[float, ...]

    def __init__(self, alpha: Sequence[float]):
        alpha = tuple(float(a) for a in np.atleast_1d(alpha))
        if len(alpha) == 0 or any(not 0 < a < 2 for a in alpha):
            raise ValueError(f"smoothness exponents must lie in (0, 2), got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    def alpha_star(self, decomposition: Decomposition) -> np.ndarray:
        if len(self.alpha) != decomposition.k:
            raise DimensionError("smoothness and decomposition disagree on k")
        return decomposition.expand(self.alpha)


def _check_dim(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != d:
        raise DimensionError(f"expected points of dimension {d}, got shape {x.shape}")
    return x


def alpha_norm(s, decomposition: Decomposition, smoothness: Smoothness) -> np.ndarray:
    """Anisotropic quasi-norm sum_j ||s^j||^alpha_j with Euclidean block norms."""
    s = _check_dim(s, decomposition.d)
    if len(smoothness.alpha) != decomposition.k:
        raise DimensionError("smoothness and decomposition disagree on k")
    out = np.zeros(s.shape[:-1])
    for sl, a in zip(decomposition.slices(), smoothness.alpha):
        out = out + np.linalg.norm(s[..., sl], axis=-1) ** a
    return out


class CovarianceModel:
    """Base class for covariance models.

    Subclasses implement :meth:`cov`. Models that know their local
    stationarity structure set ``decomposition``, ``smoothness`` and
    implement :meth:`local_scale`.
    """

    dim: int
    decomposition: Optional[Decomposition] = None
    smoothness: Optional[Smoothness] = None
    name: str = "custom"

    def cov(self, t, s) -> np.ndarray:
        raise NotImplementedError

    def variogram(self, t, s) -> np.ndarray:
        """E(X(t) - X(s))^2 without clamping."""
        return self.cov(t, t) + self.cov(s, s) - 2.0 * self.cov(t, s)

    def local_scale(self, t) -> Optional[np.ndarray]:
        """Local stationarity functions c_1..c_k at t, shape (..., k), or None."""
        return None

    @property
    def alpha_star(self) -> Optional[np.ndarray]:
        if self.decomposition is None or self.smoothness is None:
            return None
        return self.smoothness.alpha_star(self.decomposition)

    def to_dict(self) -> dict:
        return {"type": self.name}


class DecomposedFBF(CovarianceModel):
    """Fractional Brownian field with anisotropic variogram ||t - s||_alpha."""

    name = "fbf"

    def __init__(self, decomposition: Decomposition, smoothness: Smoothness):
        if len(smoothness.alpha) != decomposition.k:
            raise DimensionError("smoothness and decomposition disagree on k")
        self.decomposition = decomposition
        self.smoothness = smoothness
        self.dim = decomposition.d

    @classmethod
    def isotropic(cls, beta: float, m: int) -> "DecomposedFBF":
        return cls(Decomposition([m]), Smoothness([beta]))

    def _norm(self, x):
        return alpha_norm(x, self.decomposition, self.smoothness)

    def cov(self, t, s):
        t = _check_dim(t, self.dim)
        s = _check_dim(s, self.dim)
        return 0.5 * (self._norm(t) + self._norm(s) - self._norm(t - s))

    def variogram(self, t, s):
        t = _check_dim(t, self.dim)
        s = _check_dim(s, self.dim)
        return self._norm(t - s)

    def local_scale(self, t):
        t = _check_dim(t, self.dim)
        return np.ones(t.shape[:-1] + (self.decomposition.k,))

    def to_dict(self):
        return {"type": self.name, "l": list(self.decomposition.l), "alpha": list(self.smoothness.alpha)}


class Example5Kernel(CovarianceModel):
    """Nonstationary isotropic field on [0, 1]^2.

    r(t, s) = f(t) f(s) exp(-||t - s||) with f(t) = 1 / (||t||^2 + 0.1); the
    field is locally stationary with alpha = 1, one component of size 2 and
    c(t) = 2 / (||t||^2 + 0.1)^2.
    """

    name = "example5"
    dim = 2

    def __init__(self):
        self.decomposition = Decomposition([2])
        self.smoothness = Smoothness([1.0])

    @staticmethod
    def _f(t):
        return 1.0 / (np.sum(t * t, axis=-1) + 0.1)

    def cov(self, t, s):
        t = _check_dim(t, 2)
        s = _check_dim(s, 2)
        return self._f(t) * self._f(s) * np.exp(-np.linalg.norm(t - s, axis=-1))

    def variogram(self, t, s):
        # (f(t) - f(s))^2 + 2 f(t) f(s) (1 - exp(-|t - s|)), cancellation free
        t = _check_dim(t, 2)
        s = _check_dim(s, 2)
        ft, fs = self._f(t), self._f(s)
        return (ft - fs) ** 2 - 2.0 * ft * fs * np.expm1(-np.linalg.norm(t - s, axis=-1))

    def local_scale(self, t):
        t = _check_dim(t, 2)
        return (2.0 * self._f(t) ** 2)[..., None]


class CustomKernel(CovarianceModel):
    """User-supplied covariance.

    Parameters
    ----------
    func : callable
        ``func(t, s)`` returning covariances; must broadcast over leading axes.
    dim : int
        Field dimension d.
    decomposition, smoothness : optional
        Declared local stationarity structure.
    local_scale : callable, optional
        ``c(t)`` returning an array of shape (..., k).
    variogram : callable, optional
        Exact increment variance, if available in closed form.
    """

    def __init__(
        self,
        func: Callable,
        dim: int,
        decomposition: Optional[Decomposition] = None,
        smoothness: Optional[Smoothness] = None,
        local_scale: Optional[Callable] = None,
        variogram: Optional[Callable] = None,
        name: str = "custom",
    ):
        if decomposition is not None and decomposition.d != dim:
            raise DimensionError("decomposition does not cover the field dimension")
        self.func = func
        self.dim = int(dim)
        self.decomposition = decomposition
        self.smoothness = smoothness
        self._c = local_scale
        self._gamma = variogram
        self.name = name

    def cov(self, t, s):
        t = _check_dim(t, self.dim)
        s = _check_dim(s, self.dim)
        out = np.asarray(self.func(t, s), dtype=float)
        return np.broadcast_to(out, np.broadcast_shapes(t.shape[:-1], s.shape[:-1]))

    def variogram(self, t, s):
        if self._gamma is None:
            return super().variogram(t, s)
        t = _check_dim(t, self.dim)
        s = _check_dim(s, self.dim)
        return np.asarray(self._gamma(t, s), dtype=float)

    def local_scale(self, t):
        if self._c is None:
            return None
        t = _check_dim(t, self.dim)
        return np.asarray(self._c(t), dtype=float)


def zero_kernel(dim: int) -> CustomKernel:
    """Degenerate field X = 0."""
    return CustomKernel(lambda t, s: np.zeros(np.broadcast_shapes(t.shape[:-1], s.shape[:-1])), dim, name="zero")


def covariance(model: CovarianceModel, t, s) -> np.ndarray:
    return model.cov(t, s)


def clamp_variance(v, tol: float = NEG_TOL):
    """Zero out round-off negatives; raise on anything below ``-tol``."""
    v = np.asarray(v, dtype=float)
    if np.any(v < -tol):
        raise NonPSDKernelError(f"negative variance {float(np.min(v)):.3e}; kernel is not positive semidefinite")
    return np.maximum(v, 0.0)


def increment_variance(model: CovarianceModel, t, s) -> np.ndarray:
    """E(X(t) - X(s))^2, clamped at zero for round-off."""
    return clamp_variance(model.variogram(t, s))


def gram_min_eigen_ratio(model: CovarianceModel, points) -> float:
    """Smallest over largest eigenvalue of the Gram matrix at ``points``."""
    points = _check_dim(points, model.dim)
    K = model.cov(points[:, None, :], points[None, :, :])
    ev = np.linalg.eigvalsh(0.5 * (K + K.T))
    top = max(abs(ev[-1]), np.finfo(float).tiny)
    return float(ev[0] / top)


def local_stationarity_ratio(model: CovarianceModel, t, h: float = 1e-4, directions: int = 8, seed: int = 0) -> np.ndarray:
    """Ratios gamma(t, t + s) / sum_j c_j(t) ||s^j||^alpha_j at ||s|| = h.

    Offsets point inward so that t + s stays in the unit cube. Returns an
    array of shape (len(t), directions); values near 1 support the declared
    local structure.
    """
    if model.decomposition is None or model.smoothness is None or model.local_scale(np.zeros(model.dim)) is None:
        raise ValueError("model declares no local stationarity structure")
    t = np.atleast_2d(_check_dim(t, model.dim))
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(directions, model.dim))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    sign = np.where(t[:, None, :] > 0.5, -1.0, 1.0)
    s = h * np.abs(u)[None, :, :] * sign
    tt = np.broadcast_to(t[:, None, :], s.shape)
    num = model.variogram(tt, tt + s)
    c = model.local_scale(tt)
    den = np.zeros(s.shape[:-1])
    for j, (sl, a) in enumerate(zip(model.decomposition.slices(), model.smoothness.alpha)):
        den = den + c[..., j] * np.linalg.norm(s[..., sl], axis=-1) ** a
    return num / den


def permutation_invariance_error(model: CovarianceModel, samples: int = 64, seed: int = 0) -> float:
    """Max |c_j(t) - c_j(perm t)| over random points and within-component permutations."""
    if model.decomposition is None or model.local_scale(np.zeros(model.dim)) is None:
        raise ValueError("model declares no local stationarity structure")
    rng = np.random.default_rng(seed)
    t = rng.random((samples, model.dim))
    c0 = model.local_scale(t)
    worst = 0.0
    for sl in model.decomposition.slices():
        perm = np.arange(model.dim)
        perm[sl] = rng.permutation(perm[sl])
        worst = max(worst, float(np.max(np.abs(model.local_scale(t[:, perm]) - c0))))
    return worst
