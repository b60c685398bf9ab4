"""Exact samplers for Lovász Local Lemma distributions, with an enumeration oracle."""

from __future__ import annotations

from .augmentation import augment, ell0, estimate_interval, substitute
from .core import BadEvent, LLLInstance, Variable
from .errors import (
    BudgetExceeded,
    InfeasibleBoundary,
    InstanceError,
    InvariantViolation,
    LLLError,
    ParameterError,
    RegionError,
)
from .estimator import LLLSampler
from .io import load_bundled, parse_graph, parse_instance, serialize_instance
from .oracle import exact_distribution, marginal, satisfiability
from .pipeline import BUILTIN_LV, LasVegasAlgorithm, sample_lll, simulate_las_vegas
from .runtime import Network
from .sampler import SamplerConfig, recursive_sampling, recursive_sampling_with_decay

__all__ = [
    "BUILTIN_LV",
    "BadEvent",
    "BudgetExceeded",
    "InfeasibleBoundary",
    "InstanceError",
    "InvariantViolation",
    "LLLError",
    "LLLInstance",
    "LLLSampler",
    "LasVegasAlgorithm",
    "Network",
    "ParameterError",
    "RegionError",
    "SamplerConfig",
    "Variable",
    "augment",
    "ell0",
    "estimate_interval",
    "exact_distribution",
    "load_bundled",
    "marginal",
    "parse_graph",
    "parse_instance",
    "recursive_sampling",
    "recursive_sampling_with_decay",
    "sample_lll",
    "satisfiability",
    "serialize_instance",
    "simulate_las_vegas",
    "substitute",
]
