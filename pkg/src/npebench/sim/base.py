"""Simulator registry and the operation surface shared by all problems.

A problem bundles its prior, likelihood, parameter preprocessing (to an
unconstrained space the decoders operate in) and, where one exists, the
closed-form posterior used as a test oracle.  Raw parameter vectors live in
natural units; preprocessed vectors are what the networks see.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Dict

import numpy as np

from ..errors import InvalidSampleSize, NotRegistered, PreprocessError

if TYPE_CHECKING:
    from .conjugate import ConjugatePosterior


@dataclass(frozen=True)
class SimulatorSpec:
    """Static description of one benchmark generative process.

    ``theta_dim`` is the dimension of the preprocessed (unconstrained)
    parameter vector; ``theta_dim_raw`` the natural-unit dimension, which
    differs for simplex-valued parameters.  ``data_kind`` is one of
    ``single`` (one observation per instance), ``iid`` or ``sequential``.
    """

    name: str
    theta_dim: int
    theta_dim_raw: int
    data_dim: int
    data_kind: str
    n_range: tuple[int, int]
    hyperparams: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.theta_dim < 1 or self.data_dim < 1:
            raise ValueError("dimensions must be positive")
        n_min, n_max = self.n_range
        if n_min < 1 or n_min > n_max:
            raise ValueError(f"invalid n_range {self.n_range}")
        if self.data_kind not in ("single", "iid", "sequential"):
            raise ValueError(f"unknown data_kind {self.data_kind!r}")
        if self.data_kind == "single" and self.n_range != (1, 1):
            raise ValueError("single-observation problems must have n_range (1, 1)")


class Problem:
    """Base class for registered simulators.

    Subclasses fill in the prior, likelihood and parameter transforms.
    All methods are pure given the passed numpy generator.
    """

    name: str = ""
    data_kind: str = "iid"
    defaults: Dict[str, Any] = {}

    def __init__(self, hyperparams: Dict[str, Any] | None = None,
                 n_range: tuple[int, int] | None = None):
        hp = dict(self.defaults)
        if hyperparams:
            unknown = set(hyperparams) - set(hp)
            if unknown:
                raise NotRegistered(
                    f"{self.name}: unknown hyperparameters {sorted(unknown)}")
            hp.update(hyperparams)
        self.hyperparams = self.finalize_hyperparams(hp)
        if self.data_kind == "single":
            self.n_range = (1, 1)
        else:
            self.n_range = tuple(n_range) if n_range else self.default_n_range()
        self._spec = SimulatorSpec(
            name=self.name,
            theta_dim=self.theta_dim(),
            theta_dim_raw=self.theta_dim_raw(),
            data_dim=self.data_dim(),
            data_kind=self.data_kind,
            n_range=self.n_range,
            hyperparams=dict(self.hyperparams),
        )

    @property
    def spec(self) -> SimulatorSpec:
        return self._spec

    def default_n_range(self) -> tuple[int, int]:
        return (100, 400) if self.data_kind == "sequential" else (50, 200)

    def finalize_hyperparams(self, hp: Dict[str, Any]) -> Dict[str, Any]:
        """Hook for resolving derived hyperparameters before the spec freezes."""
        return hp

    # dimensions
    def theta_dim(self) -> int:
        raise NotImplementedError

    def theta_dim_raw(self) -> int:
        return self.theta_dim()

    def data_dim(self) -> int:
        raise NotImplementedError

    # sampling
    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_dataset(self, theta_raw: np.ndarray, n: int,
                       rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    # transforms; default is the identity
    def preprocess_theta(self, theta_raw: np.ndarray) -> np.ndarray:
        return np.asarray(theta_raw, dtype=float).copy()

    def inverse_theta(self, theta_proc: np.ndarray) -> np.ndarray:
        return np.asarray(theta_proc, dtype=float).copy()

    def preprocess_data(self, x_raw: np.ndarray) -> np.ndarray:
        return np.asarray(x_raw, dtype=float).copy()

    def in_support(self, theta_raw: np.ndarray) -> bool:
        """Whether a raw parameter vector satisfies the prior's hard support."""
        return bool(np.all(np.isfinite(theta_raw)))

    def conjugate_posterior(self, x_raw: np.ndarray) -> "ConjugatePosterior":
        from ..errors import NoOracle

        raise NoOracle(f"{self.name} has no closed-form posterior")


_REGISTRY: Dict[str, Callable[..., Problem]] = {}


def register(cls):
    """Class decorator adding a problem to the registry."""
    _REGISTRY[cls.name] = cls
    return cls


def registered_names() -> list[str]:
    return sorted(_REGISTRY)


def get_problem(name: str, hyperparams: Dict[str, Any] | None = None,
                n_range: tuple[int, int] | None = None) -> Problem:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise NotRegistered(
            f"unknown problem {name!r}; registered: {registered_names()}") from None
    return cls(hyperparams=hyperparams, n_range=n_range)


# Functional operation surface over the registry.

def sample_prior(problem: Problem, rng: np.random.Generator) -> np.ndarray:
    theta = problem.sample_prior(rng)
    return np.asarray(theta, dtype=float)


def sample_dataset(problem: Problem, theta_raw: np.ndarray, n: int,
                   rng: np.random.Generator) -> np.ndarray:
    n_min, n_max = problem.n_range
    if not (n_min <= n <= n_max):
        raise InvalidSampleSize(
            f"{problem.name}: n={n} outside [{n_min}, {n_max}]")
    x = np.asarray(problem.sample_dataset(theta_raw, n, rng), dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    return x


def preprocess(problem: Problem, theta_raw: np.ndarray,
               x_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = problem.preprocess_theta(np.asarray(theta_raw, dtype=float))
    x = problem.preprocess_data(np.asarray(x_raw, dtype=float))
    if not np.all(np.isfinite(theta)) or not np.all(np.isfinite(x)):
        raise PreprocessError(f"{problem.name}: non-finite preprocessed value")
    return theta, x


def inverse_preprocess(problem: Problem, theta_proc: np.ndarray) -> np.ndarray:
    """Map decoder output back to natural units.

    Values outside the prior's hard support are returned as-is (never
    clipped); callers flag them through :meth:`Problem.in_support`.
    """
    return problem.inverse_theta(np.asarray(theta_proc, dtype=float))
