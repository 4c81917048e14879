"""Asymptotic constants for the interpolation error of locally stationary fields.

The squared IMSE behaves like sum_j v_j / n_j^alpha_j for large grids, where
each v_j integrates the local scale c_j against the single-cell error
b_{alpha_j, l_j} of a fractional Brownian field.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .designs import Allocation, Density, TabulatedDensity, TabulatedFunction, UniformDensity
from .error import cell_mse_mean
from .kernels import Decomposition, DecomposedFBF, Smoothness
from .quadrature import QuadratureSpec, composite_rule, tensor_rule

C_GRID = 257
B_CACHE_POINTS = 33
NORM_FLOOR = 1e-12


def a_beta(beta: float) -> float:
    """2 / ((beta + 1)(beta + 2)) - 1/6, the 1-d single-cell constant."""
    if not 0 < beta < 2:
        raise ValueError(f"beta must lie in (0, 2), got {beta}")
    return 2.0 / ((beta + 1.0) * (beta + 2.0)) - 1.0 / 6.0


def default_b_quadrature(m: int) -> QuadratureSpec:
    """Quadrature for the single-cell constant; vertex singularities need grading."""
    if m == 1:
        return QuadratureSpec(order=24, subdivision=10)
    if m == 2:
        return QuadratureSpec(order=24, subdivision=6)
    if m == 3:
        return QuadratureSpec(order=12, subdivision=3)
    return QuadratureSpec(order=8, subdivision=1)


def b_const(beta: float, m: int, u: Optional[Sequence[float]] = None, quad: Optional[QuadratureSpec] = None) -> float:
    """Squared IMSE of an m-dim fractional Brownian field over the box [0, u].

    Interpolation uses the 2^m box corners; the error is averaged over the
    reference cell, i.e. integrated over s in [0, 1]^m at the point u * s.
    """
    if not 0 < beta < 2:
        raise ValueError(f"beta must lie in (0, 2), got {beta}")
    if m < 1:
        raise ValueError("m must be >= 1")
    u = np.ones(m) if u is None else np.asarray(u, dtype=float)
    if u.shape != (m,) or np.any(u <= 0):
        raise ValueError("u must be a positive vector of length m")
    quad = quad or default_b_quadrature(m)
    model = DecomposedFBF.isotropic(beta, m)
    return cell_mse_mean(model, np.zeros(m), u, quad)


@lru_cache(maxsize=256)
def _b_tilde(beta: float, m: int) -> float:
    return b_const(beta, m)


def _c_callable(c_j) -> Callable:
    if isinstance(c_j, (int, float)):
        value = float(c_j)
        return lambda t: np.full(np.shape(t)[:-1], value)
    return c_j


def integrated_C(
    c_j: Union[Callable, float],
    j: int,
    decomposition: Decomposition,
    order: int = 24,
    panels: int = 4,
    size: int = C_GRID,
) -> TabulatedFunction:
    """Tabulate C_j(x) = integral of c_j over every coordinate except the last of component j.

    ``c_j`` maps points (..., d) to values (...); ``j`` is 0-based. The
    integral over the other d - 1 coordinates uses a tensor Gauss-Legendre
    rule with ``panels`` uniform panels of ``order`` nodes per axis.
    """
    c = _c_callable(c_j)
    d = decomposition.d
    axis = decomposition.bounds[j + 1] - 1
    x = np.linspace(0.0, 1.0, size)
    if d == 1:
        return TabulatedFunction(np.asarray(c(x[:, None]), dtype=float))
    rule = composite_rule(order, np.linspace(0.0, 1.0, panels + 1))
    pts, wts = tensor_rule([rule] * (d - 1))
    vals = np.empty(size)
    for i, xi in enumerate(x):
        full = np.insert(pts, axis, xi, axis=1)
        vals[i] = float(np.dot(wts, c(full)))
    return TabulatedFunction(vals)


def _integrate_01(f: Callable, breakpoints: Optional[np.ndarray] = None, order: int = 16, panels: int = 64) -> float:
    b = np.linspace(0.0, 1.0, panels + 1) if breakpoints is None else breakpoints
    x, w = composite_rule(order, b)
    return float(np.dot(w, f(x)))


def _breaks(*fs) -> Optional[np.ndarray]:
    grids = [f.x for f in fs if isinstance(f, (TabulatedFunction, TabulatedDensity))]
    if not grids:
        return None
    return np.unique(np.concatenate(grids + [np.linspace(0.0, 1.0, 65)]))


def gamma_norm(C: Callable, gamma: float) -> float:
    """(integral_0^1 C^gamma)^(1/gamma), with C floored at 1e-12."""
    return _integrate_01(lambda x: np.maximum(C(x), NORM_FLOOR) ** gamma, _breaks(C)) ** (1.0 / gamma)


def v_one_dim(C: Callable, h: Density, alpha: float, l: int = 1) -> float:
    """a_alpha * integral_0^1 C(t) h(t)^-alpha dt for a one-dimensional component."""
    if l != 1:
        raise ValueError("the closed form holds only for components of size 1")
    return a_beta(alpha) * _integrate_01(lambda x: C(x) * h.pdf(x) ** (-alpha), _breaks(C, h))


def v_one_dim_optimal(C: Callable, alpha: float) -> float:
    """Minimal constant a_alpha ||C||_gamma with gamma = 1/(1 + alpha)."""
    return a_beta(alpha) * gamma_norm(C, 1.0 / (1.0 + alpha))


def w_const(C: Callable, h: Density, alpha: float, l: int) -> float:
    """Upper-bound constant l^(1 + alpha/2) (a_alpha + 1/6) integral C h^-alpha."""
    integral = _integrate_01(lambda x: C(x) * h.pdf(x) ** (-alpha), _breaks(C, h))
    return l ** (1.0 + alpha / 2.0) * (a_beta(alpha) + 1.0 / 6.0) * integral


def _cache_quadrature(m: int) -> QuadratureSpec:
    return QuadratureSpec(order=12, subdivision=4) if m == 2 else QuadratureSpec(order=8, subdivision=2)


class _BCache:
    """b_{beta,m} on H-space by homogeneity: b(u) = max(u)^beta b(u / max(u)).

    The normalized argument has one coordinate equal to 1; b is symmetric,
    so the remaining m - 1 coordinates are tabulated on a grid over
    [min ratio, 1] and multilinearly interpolated.
    """

    def __init__(self, beta: float, m: int, ratio_min: float, points: int = B_CACHE_POINTS):
        self.beta, self.m = beta, m
        if m == 1:
            self.b1 = _b_tilde(beta, 1)
            return
        ratio_min = min(ratio_min, 1.0 - 1e-9)
        axis = np.linspace(ratio_min, 1.0, points)
        vals = np.empty((points,) * (m - 1))
        # symmetric in its arguments: compute sorted tuples once
        memo = {}
        for idx in itertools.product(range(points), repeat=m - 1):
            key = tuple(sorted(idx))
            if key not in memo:
                memo[key] = b_const(beta, m, np.concatenate([[1.0], axis[list(key)]]), _cache_quadrature(m))
            vals[idx] = memo[key]
        self.interp = RegularGridInterpolator([axis] * (m - 1), vals)
        self.lo = ratio_min

    def __call__(self, u: np.ndarray) -> np.ndarray:
        top = u.max(axis=-1)
        if self.m == 1:
            return top**self.beta * self.b1
        ratios = np.sort(u / top[..., None], axis=-1)[..., :-1]
        ratios = np.clip(ratios, self.lo, 1.0)
        return top**self.beta * self.interp(ratios.reshape(-1, self.m - 1)).reshape(top.shape)


def v_general(
    c_j: Union[Callable, float],
    h_j: Density,
    alpha_j: float,
    j: int,
    decomposition: Decomposition,
    order: int = 16,
    panels: int = 4,
    exact: bool = False,
) -> float:
    """Asymptotic constant v_j = integral over [0,1]^d of c_j(t) b_{alpha_j,l_j}(H_j(t^j)).

    H_j(t^j) has entries 1 / h_j(t_m) for the coordinates m of component j.
    With a uniform density b is constant; otherwise b is tabulated once
    (see ``_BCache``) unless ``exact`` requests a per-node evaluation.
    """
    c = _c_callable(c_j)
    d = decomposition.d
    m = decomposition.l[j]
    sl = decomposition.slices()[j]
    rule = composite_rule(order, np.linspace(0.0, 1.0, panels + 1))
    pts, wts = tensor_rule([rule] * d)
    cvals = np.asarray(c(pts), dtype=float)
    if isinstance(h_j, UniformDensity):
        return _b_tilde(alpha_j, m) * float(np.dot(wts, cvals))
    H = 1.0 / h_j.pdf(pts[:, sl])
    if exact:
        bvals = np.array([b_const(alpha_j, m, u) for u in H])
    else:
        hmin, hmax = h_j.min_value(), float(np.max(h_j.tabulate()[1]))
        bvals = _BCache(alpha_j, m, hmin / hmax)(H)
    return float(np.dot(wts, cvals * bvals))


@dataclass(frozen=True)
class AsymptoticProfile:
    """Constants v_j together with the rate rho and the product kappa."""

    v: tuple[float, ...]
    rho: float
    kappa: float
    decomposition: Decomposition
    smoothness: Smoothness

    @property
    def k(self) -> int:
        return self.decomposition.k

    def optimal_bound(self, N: float) -> float:
        """k kappa^rho / N^rho, the error of the balanced allocation.

        Every term v_j / n_j^alpha_j equals kappa^rho / N^rho under that
        allocation. See ``min_constant`` for the exact minimum.
        """
        return self.k * self.kappa**self.rho / N**self.rho

    @property
    def weights(self) -> np.ndarray:
        """p_j = rho l_j / alpha_j; they sum to one."""
        return self.rho * np.asarray(self.decomposition.l, dtype=float) / np.asarray(self.smoothness.alpha)

    @property
    def min_constant(self) -> float:
        """Exact minimum of sum_j v_j n_j^-alpha_j over prod n_j^l_j = N, times N^rho.

        Weighted AM-GM gives kappa^rho / prod p_j^p_j. This equals
        k kappa^rho only when all l_j / alpha_j coincide; otherwise it is
        strictly smaller.
        """
        p = self.weights
        return float(self.kappa**self.rho / np.exp(np.sum(p * np.log(p))))

    def to_dict(self) -> dict:
        return {
            "v": list(self.v),
            "rho": self.rho,
            "kappa": self.kappa,
            "bound_constant": self.k * self.kappa**self.rho,
            "min_constant": self.min_constant,
            "l": list(self.decomposition.l),
            "alpha": list(self.smoothness.alpha),
        }


def profile(v: Sequence[float], smoothness: Smoothness, decomposition: Decomposition) -> AsymptoticProfile:
    v = tuple(float(x) for x in v)
    if len(v) != decomposition.k or len(smoothness.alpha) != decomposition.k:
        raise ValueError("v, smoothness and decomposition must have k entries")
    if any(x <= 0 for x in v):
        raise ValueError("asymptotic constants must be positive")
    alpha = np.asarray(smoothness.alpha)
    l = np.asarray(decomposition.l, dtype=float)
    rho = float(1.0 / np.sum(l / alpha))
    kappa = float(np.exp(np.sum(l / alpha * np.log(v))))
    return AsymptoticProfile(v, rho, kappa, decomposition, smoothness)


def predicted_imse(v: Sequence[float], smoothness: Smoothness, allocation: Union[Allocation, Sequence[int]]) -> float:
    """Leading-order squared IMSE sum_j v_j / n_j^alpha_j."""
    n = allocation.n if isinstance(allocation, Allocation) else tuple(allocation)
    return float(sum(vj / nj**aj for vj, nj, aj in zip(v, n, smoothness.alpha)))


@dataclass(frozen=True)
class HolderBoundSpec:
    """Hoelder constant C with per-component density bounds D_j = 1 / min h_j."""

    C: float
    smoothness: Smoothness
    decomposition: Decomposition
    D: tuple[float, ...]

    @classmethod
    def from_densities(cls, C: float, smoothness: Smoothness, decomposition: Decomposition, densities: Sequence[Density]):
        return cls(C, smoothness, decomposition, tuple(1.0 / h.min_value() for h in densities))

    @property
    def c(self) -> np.ndarray:
        """Per-component constants c_j = sqrt(2^-a l^(1 + a/2) D^a)."""
        a = np.asarray(self.smoothness.alpha)
        l = np.asarray(self.decomposition.l, dtype=float)
        D = np.asarray(self.D, dtype=float)
        return np.sqrt(2.0 ** (-a) * l ** (1.0 + a / 2.0) * D**a)

    @property
    def rho0(self) -> float:
        a = np.asarray(self.smoothness.alpha)
        return float(1.0 / np.sum(np.asarray(self.decomposition.l) / a))

    @property
    def rho1(self) -> float:
        a = np.asarray(self.smoothness.alpha)
        return float(1.0 / np.sum(np.asarray(self.decomposition.l) / (2.0 + a)))


def holder_bound(spec: HolderBoundSpec, allocation: Union[Allocation, Sequence[int]]) -> float:
    """Bound sqrt(C) sum_j c_j n_j^(-alpha_j/2) on the uniform root-mean-square error."""
    n = np.asarray(allocation.n if isinstance(allocation, Allocation) else allocation, dtype=float)
    a = np.asarray(spec.smoothness.alpha)
    return float(math.sqrt(spec.C) * np.sum(spec.c * n ** (-a / 2.0)))
