"""Multivariate piecewise-linear (multilinear) interpolation on design cells.

Vertices of a cell are numbered by bitmask: bit m of the vertex index is
set when the vertex takes the upper knot along coordinate m (coordinate 0
is the least significant bit).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Union

import numpy as np

from .designs import Design


class MissingVertexError(KeyError):
    pass


@lru_cache(maxsize=16)
def vertex_bits(d: int) -> np.ndarray:
    """Array of shape (2^d, d) with entry [v, m] = bit m of v."""
    v = np.arange(2**d)
    bits = ((v[:, None] >> np.arange(d)[None, :]) & 1).astype(float)
    bits.setflags(write=False)
    return bits


@dataclass(frozen=True)
class CellLocation:
    """Cell indices (P, d) and local coordinates s in [0, 1]^d (P, d)."""

    index: np.ndarray
    local: np.ndarray


def locate_cell(design: Design, t) -> CellLocation:
    """Cell containing each point.

    A point on a shared face belongs to the lower-index cell, except on the
    face t_m = 1, which belongs to the last cell.
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    t = np.atleast_2d(t)
    if t.shape[-1] != design.dim:
        raise ValueError(f"points must have dimension {design.dim}")
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        raise ValueError("points must lie in the unit cube")
    idx = np.empty(t.shape, dtype=np.intp)
    loc = np.empty(t.shape)
    for m, knots in enumerate(design.knots):
        i = np.clip(np.searchsorted(knots, t[:, m], side="left") - 1, 0, knots.size - 2)
        lo, hi = knots[i], knots[i + 1]
        idx[:, m] = i
        loc[:, m] = np.clip((t[:, m] - lo) / (hi - lo), 0.0, 1.0)
    if single:
        return CellLocation(idx[0], loc[0])
    return CellLocation(idx, loc)


def weights(s) -> np.ndarray:
    """Multilinear vertex weights prod_m (s_m if bit m else 1 - s_m).

    ``s`` has shape (..., d); the result has shape (..., 2^d).
    """
    s = np.asarray(s, dtype=float)
    d = s.shape[-1]
    bits = vertex_bits(d)
    # factors[..., v, m]
    f = np.where(bits == 1.0, s[..., None, :], 1.0 - s[..., None, :])
    return np.prod(f, axis=-1)


def _vertex_values(design: Design, values, index: np.ndarray) -> np.ndarray:
    bits = vertex_bits(design.dim).astype(np.intp)
    vidx = index[..., None, :] + bits  # (P, 2^d, d)
    if isinstance(values, Mapping):
        out = np.empty(vidx.shape[:-1])
        for pos in np.ndindex(*out.shape):
            key = tuple(int(x) for x in vidx[pos])
            try:
                out[pos] = values[key]
            except KeyError:
                raise MissingVertexError(key) from None
        return out
    values = np.asarray(values, dtype=float)
    if values.shape != design.grid_shape:
        raise ValueError(f"grid values must have shape {design.grid_shape}, got {values.shape}")
    return values[tuple(np.moveaxis(vidx, -1, 0))]


def mpli_eval(design: Design, vertex_values: Union[np.ndarray, Mapping], t) -> np.ndarray:
    """Evaluate the interpolant at points ``t``.

    Parameters
    ----------
    design : Design
    vertex_values : ndarray or mapping
        Either the full grid of knot values with shape ``design.grid_shape``
        or a mapping from knot index tuples to values; a mapping only needs
        the vertices of the cells that contain ``t``.
    t : array_like
        A point of shape (d,) or points of shape (P, d).
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 1
    loc = locate_cell(design, np.atleast_2d(t))
    vals = _vertex_values(design, vertex_values, loc.index)
    out = np.sum(weights(loc.local) * vals, axis=-1)
    return out[0] if single else out
