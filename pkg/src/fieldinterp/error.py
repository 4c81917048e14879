"""Exact mean-squared error of multilinear interpolation of a random field.

With X_N(t) = sum_v w_v X(t_v) and sum_v w_v = 1, the pointwise error is

    E(X(t) - X_N(t))^2 = sum_v w_v g(t, t_v) - 1/2 sum_{v,u} w_v w_u g(t_v, t_u)

where g(t, s) = E(X(t) - X(s))^2. This increment form equals
r(t,t) - 2 sum_v w_v r(t,t_v) + sum_{v,u} w_v w_u r(t_v,t_u) but avoids the
cancellation between O(1) covariances when the error is small.
"""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .designs import Design
from .interpolator import locate_cell, vertex_bits, weights
from .kernels import NEG_TOL, CovarianceModel, clamp_variance
from .quadrature import QuadratureSpec

_CHUNK_ELEMS = 1 << 22


class FactorizationError(RuntimeError):
    """Covariance matrix could not be factorized even with maximal jitter."""


def _cell_mse(model: CovarianceModel, lower: np.ndarray, width: np.ndarray, s: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pointwise MSE at local points ``s`` (Q, d) of cells (M, d); returns (M, Q)."""
    bits = vertex_bits(lower.shape[-1])
    verts = lower[:, None, :] + width[:, None, :] * bits[None, :, :]  # (M, V, d)
    pts = lower[:, None, :] + width[:, None, :] * s[None, :, :]  # (M, Q, d)
    g_tv = model.variogram(pts[:, :, None, :], verts[:, None, :, :])  # (M, Q, V)
    g_vv = model.variogram(verts[:, :, None, :], verts[:, None, :, :])  # (M, V, V)
    first = np.einsum("qv,mqv->mq", w, g_tv)
    second = np.einsum("qv,mvu,qu->mq", w, g_vv, w)
    return first - 0.5 * second


def cell_mse_mean(model: CovarianceModel, lower, upper, quad: Optional[QuadratureSpec] = None, alpha_star=None) -> float:
    """Mean pointwise MSE over the box [lower, upper] whose corners are the knots.

    Equivalently the integral over the reference cell [0, 1]^d of the error
    at lower + (upper - lower) * s.
    """
    quad = quad or QuadratureSpec()
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    d = lower.shape[-1]
    if alpha_star is None:
        alpha_star = model.alpha_star
    s, qw = quad.reference_rule(d, alpha_star)
    w = weights(s)
    vals = clamp_variance(_cell_mse(model, lower, upper - lower, s, w), NEG_TOL)
    return float(vals[0] @ qw)


def pointwise_mse(model: CovarianceModel, design: Design, t) -> np.ndarray:
    """E(X(t) - X_N(t))^2 at a point (d,) or points (P, d)."""
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    loc = locate_cell(design, t)
    bits = vertex_bits(design.dim)
    lower = np.stack([k[loc.index[:, m]] for m, k in enumerate(design.knots)], axis=-1)
    upper = np.stack([k[loc.index[:, m] + 1] for m, k in enumerate(design.knots)], axis=-1)
    verts = lower[:, None, :] + (upper - lower)[:, None, :] * bits[None]
    w = weights(loc.local)  # (P, V)
    g_tv = model.variogram(t[:, None, :], verts)
    g_vv = model.variogram(verts[:, :, None, :], verts[:, None, :, :])
    out = np.einsum("pv,pv->p", w, g_tv) - 0.5 * np.einsum("pv,pvu,pu->p", w, g_vv, w)
    out = clamp_variance(out)
    return out[0] if single else out


@dataclass
class ErrorReport:
    """Squared IMSE of a design with optional per-cell breakdown."""

    imse2: float
    N_actual: int
    n: tuple
    quad_order: int
    cells: int
    sup_mse: Optional[float] = None
    cell_contributions: Optional[np.ndarray] = field(default=None, repr=False)

    def to_row(self) -> dict:
        row = {"N_actual": self.N_actual, "cells": self.cells}
        for j, nj in enumerate(self.n, start=1):
            row[f"n_{j}"] = nj
        row["imse2"] = self.imse2
        row["sup_mse"] = self.sup_mse if self.sup_mse is not None else float("nan")
        row["quad_order"] = self.quad_order
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        row = self.to_row()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        return self.to_row()


def _pairwise_sum(x: np.ndarray) -> float:
    # fixed tree shape so the result depends only on the data, not on chunking
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


def imse(
    model: CovarianceModel,
    design: Design,
    quad: Optional[QuadratureSpec] = None,
    threads: int = 1,
    keep_cells: bool = False,
    with_sup: bool = False,
) -> ErrorReport:
    """Integrated squared error of the design's interpolant.

    Each cell's error is integrated with the tensor Gauss-Legendre rule of
    ``quad`` mapped to the cell. Cell contributions are computed in fixed
    chunks and summed by a fixed pairwise tree, so the result is bitwise
    independent of ``threads``.
    """
    if model.dim != design.dim:
        raise ValueError("model and design dimensions differ")
    quad = quad or QuadratureSpec()
    s, qw = quad.reference_rule(design.dim, model.alpha_star)
    w = weights(s)
    V = w.shape[1]
    chunk = max(1, _CHUNK_ELEMS // (len(qw) * V * design.dim))
    M = design.n_cells
    starts = list(range(0, M, chunk))

    def work(start):
        lower, width = design.cells(start, start + chunk)
        vals = clamp_variance(_cell_mse(model, lower, width, s, w))
        return (vals @ qw) * np.prod(width, axis=-1)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(st) for st in starts]
    contrib = np.concatenate(parts) if parts else np.zeros(0)
    report = ErrorReport(
        imse2=_pairwise_sum(contrib),
        N_actual=design.N_actual,
        n=design.n,
        quad_order=quad.order,
        cells=M,
        cell_contributions=contrib if keep_cells else None,
    )
    if with_sup:
        report.sup_mse = sup_mse(model, design, quad)
    return report


def sup_mse(model: CovarianceModel, design: Design, quad: Optional[QuadratureSpec] = None) -> float:
    """Largest pointwise MSE over a per-cell scan grid.

    The scan uses ``quad.scan_points`` equispaced local coordinates per axis
    (cell faces included). This is a lower estimate of the true supremum;
    with two points per axis only knots are scanned and the result is 0.
    """
    quad = quad or QuadratureSpec()
    d = design.dim
    p = quad.scan_points
    while p > 3 and design.n_cells * p**d > quad.scan_cap:
        p -= 1
    axis = np.linspace(0.0, 1.0, p)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    s = np.stack([g.ravel() for g in grids], axis=-1)
    w = weights(s)
    chunk = max(1, _CHUNK_ELEMS // (len(s) * w.shape[1] * d))
    best = 0.0
    for start in range(0, design.n_cells, chunk):
        lower, width = design.cells(start, start + chunk)
        vals = clamp_variance(_cell_mse(model, lower, width, s, w))
        best = max(best, float(vals.max()))
    return best


def quadrature_check(model: CovarianceModel, design: Design, quad: Optional[QuadratureSpec] = None, warn_above: float = 1e-4) -> float:
    """Relative change of the IMSE when the quadrature order is doubled.

    Emits a ``RuntimeWarning`` suggesting subdivision when the change
    exceeds ``warn_above``.
    """
    quad = quad or QuadratureSpec()
    coarse = imse(model, design, quad).imse2
    fine_spec = QuadratureSpec(order=2 * quad.order, subdivision=quad.subdivision, scan_points=quad.scan_points, scan_cap=quad.scan_cap)
    fine = imse(model, design, fine_spec).imse2
    change = abs(fine - coarse) / max(abs(fine), np.finfo(float).tiny)
    if change > warn_above:
        warnings.warn(
            f"IMSE changed by {change:.2e} (relative) from order {quad.order} to {2 * quad.order}; "
            "raise the subdivision level",
            RuntimeWarning,
            stacklevel=2,
        )
    return change


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float
    paths: int
    replicates: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "se": self.se, "paths": self.paths, "replicates": self.replicates}


def jittered_cholesky(K: np.ndarray) -> np.ndarray:
    """Cholesky factor of K + eps I with eps = 1e-12 tr(K)/n, x10 up to 1e-6 tr(K)/n."""
    n = K.shape[0]
    scale = np.trace(K) / n
    if scale <= 0:
        if np.allclose(K, 0.0):
            return np.zeros_like(K)
        raise FactorizationError("covariance matrix has nonpositive trace")
    eps = 1e-12
    while eps <= 1e-6 * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + eps * scale * np.eye(n))
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise FactorizationError("Cholesky factorization failed after jitter escalation")


def mc_imse(
    model: CovarianceModel,
    design: Design,
    paths: int = 10_000,
    replicates: int = 20,
    points: int = 64,
    seed: int = 0,
) -> MCEstimate:
    """Monte-Carlo estimate of the IMSE by simulating the Gaussian field.

    Each replicate draws ``points`` uniform locations, simulates
    ``paths // replicates`` joint Gaussian paths at those locations and at the
    knots of their cells, and averages (X(t) - X_N(t))^2. The standard error
    is the spread across independent replicates.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates for a standard error")
    rng = np.random.default_rng(seed)
    per = max(1, paths // replicates)
    bits = vertex_bits(design.dim).astype(np.intp)
    shape = design.grid_shape
    estimates = np.empty(replicates)
    for r in range(replicates):
        t = rng.random((points, design.dim))
        loc = locate_cell(design, t)
        vidx = loc.index[:, None, :] + bits[None]  # (P, V, d)
        flat = np.ravel_multi_index(tuple(np.moveaxis(vidx, -1, 0)), shape)
        used, inverse = np.unique(flat, return_inverse=True)
        inverse = inverse.reshape(flat.shape)
        knots = np.stack([design.knots[m][np.unravel_index(used, shape)[m]] for m in range(design.dim)], axis=-1)
        allpts = np.concatenate([knots, t], axis=0)
        K = model.cov(allpts[:, None, :], allpts[None, :, :])
        L = jittered_cholesky(0.5 * (K + K.T))
        z = rng.standard_normal((per, allpts.shape[0]))
        X = z @ L.T
        Xk, Xt = X[:, : len(used)], X[:, len(used):]
        w = weights(loc.local)  # (P, V)
        XN = np.einsum("pv,npv->np", w, Xk[:, inverse])
        estimates[r] = np.mean((Xt - XN) ** 2)
    return MCEstimate(float(estimates.mean()), float(estimates.std(ddof=1) / np.sqrt(replicates)), per * replicates, replicates)
