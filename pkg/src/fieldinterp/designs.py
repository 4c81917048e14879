"""Cross-regular sampling designs and intercomponent knot allocations.

Every coordinate of a design gets knots at the i/n quantiles of a positive
density on [0, 1]. Coordinates in the same component share one density and
one grid size, so their knot vectors are the same array.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.interpolate import CubicSpline

from .kernels import Decomposition, DimensionError, Smoothness
from .quadrature import composite_rule, gauss_legendre

TABULATED_FLOOR = 1e-9
MIN_TABULATED = 64
CDF_GRID = 4096
CDF_TOL = 1e-12


class DensityError(ValueError):
    """Invalid density or failed CDF inversion."""


class AllocationError(ValueError):
    """Requested sample count cannot support the allocation."""


class Density:
    """Positive probability density on [0, 1]."""

    kind = "abstract"

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def min_value(self) -> float:
        raise NotImplementedError

    def tabulate(self, size: int = CDF_GRID + 1) -> tuple[np.ndarray, np.ndarray]:
        x = np.linspace(0.0, 1.0, size)
        return x, np.asarray(self.pdf(x), dtype=float)

    def to_dict(self) -> dict:
        x, v = self.tabulate()
        return {"kind": "tabulated", "source": self.kind, "abscissa": x.tolist(), "values": v.tolist()}


class UniformDensity(Density):
    kind = "uniform"

    def pdf(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def ppf(self, u):
        return np.clip(np.asarray(u, dtype=float), 0.0, 1.0)

    def min_value(self):
        return 1.0

    def to_dict(self):
        return {"kind": "uniform"}


class TabulatedDensity(Density):
    """Piecewise-linear density through values on a uniform grid of [0, 1].

    Values are floored at ``TABULATED_FLOOR`` and rescaled so the piecewise
    linear interpolant integrates to one; its CDF is then exact and
    piecewise quadratic.
    """

    kind = "tabulated"

    def __init__(self, values: Sequence[float]):
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size < MIN_TABULATED:
            raise DensityError(f"tabulated density needs >= {MIN_TABULATED} values")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DensityError("tabulated density values must be finite and nonnegative")
        v = np.maximum(v, TABULATED_FLOOR)
        self.x = np.linspace(0.0, 1.0, v.size)
        self.dx = 1.0 / (v.size - 1)
        seg = 0.5 * self.dx * (v[:-1] + v[1:])
        self.values = v / seg.sum()
        seg = 0.5 * self.dx * (self.values[:-1] + self.values[1:])
        self._F = np.concatenate([[0.0], np.cumsum(seg)])
        self._F[-1] = 1.0

    def pdf(self, x):
        return np.interp(x, self.x, self.values)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        k = np.clip((x / self.dx).astype(int), 0, self.values.size - 2)
        u = x / self.dx - k
        v0, v1 = self.values[k], self.values[k + 1]
        return self._F[k] + self.dx * (v0 * u + 0.5 * (v1 - v0) * u * u)

    def ppf(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        k = np.clip(np.searchsorted(self._F, u, side="right") - 1, 0, self.values.size - 2)
        v0, v1 = self.values[k], self.values[k + 1]
        # dx*(v0*w + (v1-v0)*w^2/2) = u - F_k, solved in the cancellation-free form
        a = 0.5 * (v1 - v0) * self.dx
        b = v0 * self.dx
        c = u - self._F[k]
        w = 2.0 * c / (b + np.sqrt(np.maximum(b * b + 4.0 * a * c, 0.0)))
        return np.clip((k + np.clip(w, 0.0, 1.0)) * self.dx, 0.0, 1.0)

    def min_value(self):
        return float(self.values.min())

    def tabulate(self, size: int = 0):
        return self.x.copy(), self.values.copy()


class AnalyticDensity(Density):
    """Density given by a vectorized pdf, optionally with its CDF.

    Without a CDF, the distribution function is accumulated with
    Gauss-Legendre panels on a ``CDF_GRID`` grid and inverted by root
    finding to ``CDF_TOL``. The pdf is renormalized to unit mass.
    """

    kind = "analytic"

    def __init__(self, pdf: Callable, cdf: Optional[Callable] = None, check_points: int = CDF_GRID):
        self._pdf = pdf
        xm = (np.arange(check_points) + 0.5) / check_points
        vals = np.asarray(pdf(xm), dtype=float)
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise DensityError("density must be positive on (0, 1)")
        self._min = float(min(vals.min(), *np.atleast_1d(np.asarray(pdf(np.array([0.0, 1.0])), dtype=float))))
        if self._min < 0:
            raise DensityError("density must be nonnegative on [0, 1]")
        self._cdf = cdf
        if cdf is not None:
            lo, hi = float(cdf(0.0)), float(cdf(1.0))
            if not hi > lo:
                raise DensityError("cdf must increase on [0, 1]")
            self._lo, self._scale = lo, hi - lo
        else:
            self._grid = np.linspace(0.0, 1.0, CDF_GRID + 1)
            x, w = composite_rule(8, self._grid)
            mass = (np.asarray(pdf(x), dtype=float) * w).reshape(CDF_GRID, 8).sum(axis=1)
            F = np.concatenate([[0.0], np.cumsum(mass)])
            self._scale = F[-1]
            self._F = F / F[-1]
            self._F[-1] = 1.0

    def pdf(self, x):
        return np.asarray(self._pdf(np.asarray(x, dtype=float)), dtype=float) / self._scale

    def _cdf_scalar(self, x: float) -> float:
        if self._cdf is not None:
            return (float(self._cdf(x)) - self._lo) / self._scale
        k = min(int(x * CDF_GRID), CDF_GRID - 1)
        a = self._grid[k]
        if x <= a:
            return float(self._F[k])
        xg, wg = gauss_legendre(16)
        pts = a + (x - a) * xg
        return float(self._F[k] + (x - a) * np.dot(wg, self.pdf(pts)))

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return np.vectorize(self._cdf_scalar, otypes=[float])(x)

    def _ppf_scalar(self, u: float) -> float:
        if u <= 0.0:
            return 0.0
        if u >= 1.0:
            return 1.0
        if self._cdf is None:
            k = int(np.clip(np.searchsorted(self._F, u, side="right") - 1, 0, CDF_GRID - 1))
            lo, hi = self._grid[k], self._grid[k + 1]
        else:
            lo, hi = 0.0, 1.0
        try:
            return optimize.brentq(lambda t: self._cdf_scalar(t) - u, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        except ValueError as exc:
            raise DensityError(f"CDF inversion failed at u={u}") from exc

    def ppf(self, u):
        return np.vectorize(self._ppf_scalar, otypes=[float])(np.asarray(u, dtype=float))

    def min_value(self):
        return self._min / self._scale


def density_from_dict(data: dict) -> Density:
    kind = data.get("kind")
    if kind == "uniform":
        return UniformDensity()
    if kind == "tabulated":
        if "abscissa" in data:
            x = np.asarray(data["abscissa"], dtype=float)
            if not np.allclose(x, np.linspace(0.0, 1.0, x.size), atol=1e-12):
                raise DensityError("tabulated abscissa must be the uniform grid on [0, 1]")
        return TabulatedDensity(data["values"])
    raise DensityError(f"unknown density kind {kind!r}")


def knots_from_density(h: Density, n: int) -> np.ndarray:
    """Quantile knots t_i with integral_0^{t_i} h = i/n, i = 0..n."""
    if int(n) != n or n < 1:
        raise ValueError(f"grid size must be a positive integer, got {n}")
    n = int(n)
    t = np.asarray(h.ppf(np.arange(n + 1) / n), dtype=float)
    t[0], t[-1] = 0.0, 1.0
    if np.any(np.diff(t) <= 0):
        raise DensityError("knots are not strictly increasing; density too concentrated for this n")
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class Allocation:
    """Per-component grid sizes n_j; each axis of component j has n_j + 1 knots."""

    n: tuple[int, ...]
    decomposition: Decomposition
    N_target: Optional[float] = None
    strategy: str = "explicit"
    continuous: Optional[tuple[float, ...]] = None
    exponents: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        n = tuple(int(x) for x in self.n)
        if len(n) != self.decomposition.k:
            raise DimensionError(f"allocation has {len(n)} sizes for {self.decomposition.k} components")
        if any(x < 1 for x in n):
            raise AllocationError(f"grid sizes must be >= 1, got {n}")
        object.__setattr__(self, "n", n)

    @property
    def N_actual(self) -> int:
        return math.prod((nj + 1) ** lj for nj, lj in zip(self.n, self.decomposition.l))

    @property
    def cells(self) -> int:
        return math.prod(nj**lj for nj, lj in zip(self.n, self.decomposition.l))

    def to_dict(self) -> dict:
        out = {"n": list(self.n), "l": list(self.decomposition.l), "N_actual": self.N_actual, "cells": self.cells, "strategy": self.strategy}
        if self.N_target is not None:
            out["N_target"] = self.N_target
        if self.continuous is not None:
            out["continuous"] = list(self.continuous)
        if self.exponents is not None:
            out["exponents"] = list(self.exponents)
        return out


def _check_budget(N, decomposition):
    if N < 2 ** decomposition.d:
        raise AllocationError(f"N={N} is below the 2^d = {2 ** decomposition.d} knots of a single cell")


def uniform_allocation(decomposition: Decomposition, N: float) -> Allocation:
    """Equal grid size on every axis with prod (n + 1) close to N."""
    _check_budget(N, decomposition)
    n = max(1, round(N ** (1.0 / decomposition.d)) - 1)
    return Allocation((n,) * decomposition.k, decomposition, N_target=N, strategy="uniform")


def optimal_allocation(v: Sequence[float], smoothness: Smoothness, decomposition: Decomposition, N: float) -> Allocation:
    """Rate-optimal split of N knots between components.

    The continuous sizes are N^(rho/a_j) v_j^(1/a_j) / kappa^(rho/a_j) with
    rho = (sum l_i/a_i)^-1 and kappa = prod v_j^(l_j/a_j); the returned sizes
    are their ceilings. A single component gets the largest uniform grid
    with (n + 1)^l closest to N.
    """
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(smoothness.alpha, dtype=float)
    l = np.asarray(decomposition.l, dtype=float)
    if v.shape != alpha.shape or alpha.shape != l.shape:
        raise DimensionError("v, smoothness and decomposition must have k entries each")
    if np.any(v <= 0):
        raise ValueError("asymptotic constants v_j must be positive")
    _check_budget(N, decomposition)
    rho = 1.0 / np.sum(l / alpha)
    log_kappa = np.sum(l / alpha * np.log(v))
    cont = np.exp(rho / alpha * np.log(N) + np.log(v) / alpha - rho / alpha * log_kappa)
    if decomposition.k == 1:
        n = (max(1, round(N ** (1.0 / decomposition.d)) - 1),)
    else:
        n = tuple(max(1, int(math.ceil(c))) for c in cont)
    return Allocation(n, decomposition, N_target=N, strategy="optimal", continuous=tuple(float(c) for c in cont), exponents=tuple(float(e) for e in rho / alpha))


def holder_exponents(smoothness: Smoothness, decomposition: Decomposition, order: int) -> np.ndarray:
    """Growth exponents of n_j in N for the Hoelder-class rate allocations."""
    alpha = np.asarray(smoothness.alpha, dtype=float)
    l = np.asarray(decomposition.l, dtype=float)
    if order == 0:
        return (1.0 / np.sum(l / alpha)) / alpha
    if order == 1:
        return (1.0 / np.sum(l / (2.0 + alpha))) / (2.0 + alpha)
    raise ValueError("order must be 0 or 1")


def holder_allocation(smoothness: Smoothness, decomposition: Decomposition, N: float, order: int = 0) -> Allocation:
    """n_j = round(N^e_j) with the order-0 or order-1 exponents e_j."""
    _check_budget(N, decomposition)
    e = holder_exponents(smoothness, decomposition, order)
    cont = N**e
    if decomposition.k == 1:
        n = (max(1, round(N ** (1.0 / decomposition.d)) - 1),)
    else:
        n = tuple(max(1, int(round(c))) for c in cont)
    return Allocation(n, decomposition, N_target=N, strategy=f"holder{order}", continuous=tuple(float(c) for c in cont), exponents=tuple(float(x) for x in e))


def density_from_C(C: Union[Callable, Sequence[float], "TabulatedFunction"], alpha: float) -> Density:
    """Density proportional to C^(1/(1 + alpha)).

    ``C`` may be a vectorized callable on [0, 1] or values on a uniform
    grid (a :class:`TabulatedFunction` or plain sequence); tabulated input
    gives a :class:`TabulatedDensity`.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    gamma = 1.0 / (1.0 + alpha)
    if isinstance(C, TabulatedFunction):
        C = C.values
    if callable(C):
        xm = (np.arange(CDF_GRID) + 0.5) / CDF_GRID
        if np.any(np.asarray(C(xm), dtype=float) <= 0):
            raise DensityError("C must be positive")
        return AnalyticDensity(lambda x: np.asarray(C(x), dtype=float) ** gamma)
    vals = np.asarray(C, dtype=float)
    if np.any(vals <= 0):
        raise DensityError("C must be positive")
    return TabulatedDensity(vals**gamma)


@dataclass(frozen=True)
class TabulatedFunction:
    """Function values on the uniform grid of [0, 1].

    Evaluation uses a not-a-knot cubic spline through the values (linear
    interpolation below four points), so smooth functions are reproduced
    to O(dx^4) between grid points.
    """

    values: np.ndarray
    x: np.ndarray = field(init=False)
    _spline: Optional[CubicSpline] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "x", np.linspace(0.0, 1.0, v.size))
        object.__setattr__(self, "_spline", CubicSpline(self.x, v) if v.size >= 4 else None)

    def __call__(self, t):
        if self._spline is None:
            return np.interp(t, self.x, self.values)
        return self._spline(np.clip(t, 0.0, 1.0))


class Design:
    """Full tensor grid of knots on [0, 1]^d.

    Cells are enumerated in C order over their lower-corner indices. The
    design is immutable after construction.
    """

    def __init__(self, knots: Sequence[np.ndarray], decomposition: Decomposition, n: Optional[Sequence[int]] = None):
        if len(knots) != decomposition.d:
            raise DimensionError(f"need {decomposition.d} knot vectors, got {len(knots)}")
        ks = []
        for t in knots:
            t = np.asarray(t, dtype=float)
            if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
                raise ValueError("knot vectors must increase strictly from 0 to 1")
            if t.flags.writeable:
                t = t.copy()
                t.setflags(write=False)
            ks.append(t)
        self.knots = tuple(ks)
        self.decomposition = decomposition
        if n is None:
            n = [self.knots[b].size - 1 for b in decomposition.bounds[:-1]]
        self.n = tuple(int(x) for x in n)

    @property
    def dim(self) -> int:
        return self.decomposition.d

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return tuple(t.size for t in self.knots)

    @property
    def N_actual(self) -> int:
        return math.prod(self.grid_shape)

    @property
    def n_cells(self) -> int:
        return math.prod(s - 1 for s in self.grid_shape)

    def cell_shape(self) -> tuple[int, ...]:
        return tuple(s - 1 for s in self.grid_shape)

    def cells(self, start: int = 0, stop: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Lower corners and diagonals of cells ``start:stop`` in C order."""
        stop = self.n_cells if stop is None else min(stop, self.n_cells)
        idx = np.unravel_index(np.arange(start, stop), self.cell_shape())
        lower = np.stack([t[i] for t, i in zip(self.knots, idx)], axis=-1)
        width = np.stack([t[i + 1] - t[i] for t, i in zip(self.knots, idx)], axis=-1)
        return lower, width

    def grid_points(self) -> np.ndarray:
        grids = np.meshgrid(*self.knots, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def to_dict(self) -> dict:
        return {
            "l": list(self.decomposition.l),
            "n": list(self.n),
            "N_actual": self.N_actual,
            "knots": [t.tolist() for t in self.knots],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Design":
        return cls([np.asarray(t, dtype=float) for t in data["knots"]], Decomposition(data["l"]), data.get("n"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_design(densities: Sequence[Density], allocation: Allocation, decomposition: Optional[Decomposition] = None) -> Design:
    """Cross-regular design with component j's axes knotted by ``densities[j]``."""
    decomposition = decomposition or allocation.decomposition
    if len(densities) != decomposition.k or len(allocation.n) != decomposition.k:
        raise DimensionError("densities, allocation and decomposition must have k entries")
    knots = []
    for h, nj, lj in zip(densities, allocation.n, decomposition.l):
        t = knots_from_density(h, nj)
        knots.extend(itertools.repeat(t, lj))
    return Design(knots, decomposition, allocation.n)
