"""Sampling designs and exact interpolation error for random fields on the unit cube."""

__version__ = "0.1.0"

from .asymptotics import (
    AsymptoticProfile,
    HolderBoundSpec,
    a_beta,
    b_const,
    holder_bound,
    integrated_C,
    predicted_imse,
    profile,
    v_general,
    v_one_dim,
    w_const,
)
from .designs import (
    Allocation,
    AnalyticDensity,
    Design,
    TabulatedDensity,
    UniformDensity,
    build_design,
    density_from_C,
    holder_allocation,
    knots_from_density,
    optimal_allocation,
    uniform_allocation,
)
from .error import ErrorReport, imse, mc_imse, pointwise_mse, sup_mse
from .interpolator import locate_cell, mpli_eval, weights
from .kernels import (
    CustomKernel,
    Decomposition,
    DecomposedFBF,
    Example5Kernel,
    Smoothness,
    alpha_norm,
    covariance,
    increment_variance,
)
from .quadrature import QuadratureSpec

__all__ = [
    "Allocation",
    "AnalyticDensity",
    "AsymptoticProfile",
    "CustomKernel",
    "Decomposition",
    "DecomposedFBF",
    "Design",
    "ErrorReport",
    "Example5Kernel",
    "HolderBoundSpec",
    "QuadratureSpec",
    "Smoothness",
    "TabulatedDensity",
    "UniformDensity",
    "a_beta",
    "alpha_norm",
    "b_const",
    "build_design",
    "covariance",
    "density_from_C",
    "holder_allocation",
    "holder_bound",
    "imse",
    "increment_variance",
    "integrated_C",
    "knots_from_density",
    "locate_cell",
    "mc_imse",
    "mpli_eval",
    "optimal_allocation",
    "pointwise_mse",
    "predicted_imse",
    "profile",
    "sup_mse",
    "uniform_allocation",
    "v_general",
    "v_one_dim",
    "w_const",
    "weights",
]
