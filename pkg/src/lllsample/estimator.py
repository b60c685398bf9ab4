"""scikit-learn style facade: fit on an instance, then draw samples."""

from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import LLLInstance
from .errors import InfeasibleBoundary
from .io import parse_instance
from .oracle import exact_distribution, satisfiability
from .pipeline import RUNTIMES, sample_lll
from .sampler import SamplerConfig


class LLLSampler(BaseEstimator):
    """Exact sampler for the LLL distribution μ_I of a fitted instance.

    ``fit`` takes an :class:`LLLInstance` (or a path to an instance file) in
    place of a data matrix; ``sample`` returns an integer array with one row per
    draw and one column per variable in declaration order.
    """

    def __init__(self, c0=1, mode="estimate", runtime="sequential", gamma=None, random_state=0):
        self.c0 = c0
        self.mode = mode
        self.runtime = runtime
        self.gamma = gamma
        self.random_state = random_state

    def fit(self, X, y=None):
        inst = parse_instance(X) if isinstance(X, (str, Path)) else X
        if not isinstance(inst, LLLInstance):
            raise TypeError("fit expects an LLLInstance or a path to an instance file")
        if self.runtime not in RUNTIMES:
            raise ValueError(f"runtime must be one of {RUNTIMES}")
        self.config_ = SamplerConfig(c0=self.c0, mode=self.mode)
        gamma = self.gamma if self.gamma is not None else inst.gamma
        if gamma is None:
            gamma = satisfiability(inst)
        if gamma == 0:
            raise InfeasibleBoundary("instance is unsatisfiable")
        self.instance_ = inst
        self.gamma_ = Fraction(gamma)
        self.variables_ = tuple(inst.variables)
        self.n_features_in_ = len(self.variables_)
        self._next_seed = int(self.random_state or 0)
        return self

    def _check(self) -> None:
        if not hasattr(self, "instance_"):
            raise NotFittedError("call fit before sampling")

    def sample(self, n_samples: int = 1, random_state: int | None = None) -> np.ndarray:
        """Rows are exact draws; seeds continue from the last call unless ``random_state`` is given."""
        self._check()
        start = self._next_seed if random_state is None else int(random_state)
        out = np.empty((n_samples, len(self.variables_)), dtype=np.int64)
        for i in range(n_samples):
            Y, _ = sample_lll(self.instance_, start + i, self.config_, gamma=self.gamma_, runtime=self.runtime)
            out[i] = [Y[x] for x in self.variables_]
        if random_state is None:
            self._next_seed = start + n_samples
        return out

    def exact_distribution(self) -> dict[tuple[int, ...], Fraction]:
        self._check()
        return exact_distribution(self.instance_)

    def score_samples(self, X) -> np.ndarray:
        """Log-probability of each row under μ_I (−inf off the support)."""
        self._check()
        table = self.exact_distribution()
        rows = np.asarray(X, dtype=np.int64).reshape(-1, len(self.variables_))
        return np.array([math.log(table[t]) if (t := tuple(int(a) for a in r)) in table else -math.inf for r in rows])
