"""JSON sweep configuration: parsing, validation and full resolution of defaults."""

from __future__ import annotations

import copy
import importlib
import json
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from .asymptotics import integrated_C, v_general
from .designs import (
    Allocation,
    Density,
    TabulatedDensity,
    UniformDensity,
    density_from_C,
    holder_allocation,
    optimal_allocation,
    uniform_allocation,
)
from .kernels import CovarianceModel, CustomKernel, Decomposition, DecomposedFBF, Example5Kernel, Smoothness, zero_kernel
from .quadrature import QuadratureSpec

STRATEGIES = ("uniform", "optimal", "holder0", "holder1", "explicit")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _fail(path: str, msg: str):
    raise ConfigError(f"config field '{path}': {msg}")


def _import(ref: str, path: str):
    mod, _, attr = ref.partition(":")
    if not attr:
        _fail(path, f"expected 'module:attribute', got {ref!r}")
    try:
        return getattr(importlib.import_module(mod), attr)
    except (ImportError, AttributeError) as exc:
        _fail(path, f"cannot import {ref!r}: {exc}")


def build_model(spec: dict) -> CovarianceModel:
    kind = spec.get("type")
    if kind == "fbf":
        try:
            return DecomposedFBF(Decomposition(spec["l"]), Smoothness(spec["alpha"]))
        except KeyError as exc:
            _fail(f"model.{exc.args[0]}", "required for type 'fbf'")
        except ValueError as exc:
            _fail("model", str(exc))
    if kind == "brownian":
        return DecomposedFBF.isotropic(1.0, 1)
    if kind == "example5":
        return Example5Kernel()
    if kind == "zero":
        if "dim" not in spec:
            _fail("model.dim", "required for type 'zero'")
        return zero_kernel(int(spec["dim"]))
    if kind == "custom":
        for key in ("callable", "dim"):
            if key not in spec:
                _fail(f"model.{key}", "required for type 'custom'")
        func = _import(spec["callable"], "model.callable")
        dec = Decomposition(spec["l"]) if "l" in spec else None
        sm = Smoothness(spec["alpha"]) if "alpha" in spec else None
        c = _import(spec["local_scale"], "model.local_scale") if spec.get("local_scale") else None
        return CustomKernel(func, int(spec["dim"]), dec, sm, c)
    _fail("model.type", f"unknown model type {kind!r}")


def model_decomposition(model: CovarianceModel) -> Decomposition:
    return model.decomposition or Decomposition([model.dim])


def local_scale_fn(model: CovarianceModel, j: int):
    if model.local_scale(np.zeros(model.dim)) is None:
        return None
    return lambda t: model.local_scale(t)[..., j]


def build_density(spec: Any, model: CovarianceModel, j: int, path: str) -> Density:
    if spec == "uniform" or spec == {"type": "uniform"}:
        return UniformDensity()
    kind = spec.get("type") if isinstance(spec, dict) else spec
    if kind in ("subopt", "optimal"):
        c = local_scale_fn(model, j)
        if c is None or model.smoothness is None:
            _fail(path, "model declares no local stationarity functions")
        C = integrated_C(c, j, model_decomposition(model))
        return density_from_C(C, model.smoothness.alpha[j])
    if kind == "tabulated":
        try:
            return TabulatedDensity(spec["values"])
        except (KeyError, ValueError) as exc:
            _fail(path, str(exc))
    _fail(path, f"unknown density {spec!r}")


@dataclass
class SweepConfig:
    """Fully resolved sweep settings; ``raw`` holds the resolved JSON form."""

    model: CovarianceModel
    densities: list
    strategy: str
    N: list
    quad: QuadratureSpec
    seed: int
    v: Optional[list]
    explicit: Optional[list]
    fit: dict
    sup: bool
    raw: dict

    @property
    def decomposition(self) -> Decomposition:
        return model_decomposition(self.model)

    def allocations(self) -> list[Allocation]:
        dec = self.decomposition
        if self.strategy == "explicit":
            return [Allocation(tuple(n), dec, strategy="explicit") for n in self.explicit]
        out = []
        for N in self.N:
            if self.strategy == "uniform":
                out.append(uniform_allocation(dec, N))
            elif self.strategy == "optimal":
                out.append(optimal_allocation(self.v, self.model.smoothness, dec, N))
            else:
                out.append(holder_allocation(self.model.smoothness, dec, N, int(self.strategy[-1])))
        return out


def resolve_v(model: CovarianceModel, densities: list) -> list:
    dec = model_decomposition(model)
    out = []
    for j in range(dec.k):
        c = local_scale_fn(model, j)
        if c is None:
            raise ConfigError("config field 'allocation.v': required when the model has no local stationarity functions")
        out.append(v_general(c, densities[j], model.smoothness.alpha[j], j, dec))
    return out


def parse_config(data: dict, quad_order: Optional[int] = None) -> SweepConfig:
    """Validate a config mapping and return the resolved configuration."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(data)
    if "model" not in raw:
        _fail("model", "missing")
    model = build_model(raw["model"])
    raw["model"] = {**model.to_dict(), **raw["model"]}
    dec = model_decomposition(model)

    dens_spec = raw.get("densities", "uniform")
    if not isinstance(dens_spec, list):
        dens_spec = [dens_spec] * dec.k
    if len(dens_spec) != dec.k:
        _fail("densities", f"expected {dec.k} entries, got {len(dens_spec)}")
    densities = [build_density(s, model, j, f"densities[{j}]") for j, s in enumerate(dens_spec)]
    raw["densities"] = dens_spec

    alloc = raw.get("allocation", {"strategy": "uniform"})
    if isinstance(alloc, str):
        alloc = {"strategy": alloc}
    strategy = alloc.get("strategy", "uniform")
    if strategy not in STRATEGIES:
        _fail("allocation.strategy", f"must be one of {STRATEGIES}, got {strategy!r}")
    explicit = None
    N = raw.get("N")
    if strategy == "explicit":
        explicit = alloc.get("n")
        if not explicit or any(len(n) != dec.k for n in explicit):
            _fail("allocation.n", f"explicit allocation needs a list of {dec.k}-vectors")
        N = [Allocation(tuple(n), dec).N_actual for n in explicit]
    if not isinstance(N, list) or not N:
        _fail("N", "must be a non-empty list of target sample counts")
    if any(not isinstance(x, (int, float)) or x <= 0 for x in N):
        _fail("N", "entries must be positive numbers")
    if any(b <= a for a, b in zip(N, N[1:])):
        _fail("N", "must be strictly increasing")
    if strategy in ("holder0", "holder1", "optimal") and model.smoothness is None:
        _fail("model", f"strategy {strategy!r} needs declared smoothness")
    v = alloc.get("v")
    if strategy == "optimal":
        if v is None:
            v = resolve_v(model, densities)
        if len(v) != dec.k or any(x <= 0 for x in v):
            _fail("allocation.v", f"needs {dec.k} positive constants")
        v = [float(x) for x in v]
    raw["allocation"] = {"strategy": strategy, "v": v, "n": explicit}
    raw["N"] = N

    q = dict(raw.get("quadrature", {}))
    if quad_order is not None:
        q["order"] = quad_order
    try:
        quad = QuadratureSpec(**q)
    except (TypeError, ValueError) as exc:
        _fail("quadrature", str(exc))
    raw["quadrature"] = quad.to_dict()

    fit = dict(raw.get("fit", {}))
    fit.setdefault("axis", "N_actual")
    fit.setdefault("theory_slope", None)
    fit.setdefault("subtract", [])
    fit.setdefault("upper_half", True)
    for i, term in enumerate(fit["subtract"]):
        if not isinstance(term, dict) or set(term) != {"coef", "power"}:
            _fail(f"fit.subtract[{i}]", "expected an object with 'coef' and 'power'")
    if fit["axis"] not in ("N_actual", "cells"):
        _fail("fit.axis", "must be 'N_actual' or 'cells'")
    raw["fit"] = fit
    seed = int(raw.get("seed", 0))
    raw["seed"] = seed
    sup = bool(raw.get("sup", True))
    raw["sup"] = sup
    return SweepConfig(model, densities, strategy, N, quad, seed, v, explicit, fit, sup, raw)


def load_config(path: str, quad_order: Optional[int] = None) -> SweepConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(data, quad_order)
