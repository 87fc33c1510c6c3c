"""
Group repayment-probability distributions and their fit from histograms.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from . import specfun
from .errors import DomainError, DegenerateHistogramError

MU_EPSILON = 1e-6
MIN_SHAPE = 1e-3


def clamp_mean(mu: float) -> float:
    return float(min(max(mu, MU_EPSILON), 1 - MU_EPSILON))


@dataclass(frozen=True)
class PopulationState:
    """
    Beta distributed repayment profile of one group, mean mu and concentration c.
    """
    mu: float
    c: float

    def __post_init__(self):
        specfun.check_mean_shape(self.mu, self.c)
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def clamped(cls, mu: float, c: float) -> "PopulationState":
        """ Builds a state with mu pulled inside [1e-6, 1-1e-6]. """
        return cls(clamp_mean(mu), c)

    @property
    def a(self) -> float:
        return self.c * self.mu

    @property
    def b(self) -> float:
        return self.c * (1 - self.mu)

    @property
    def beta_params(self) -> specfun.BetaParams:
        return specfun.BetaParams(self.a, self.b)

    def with_mean(self, mu: float) -> "PopulationState":
        return replace(self, mu=clamp_mean(mu))

    def to_dict(self):
        return {"mu": self.mu, "c": self.c}


@dataclass(frozen=True)
class GroupLabel:
    id: int
    name: str

    @classmethod
    def default(cls, id: int) -> "GroupLabel":
        return cls(id, f"group {id}")


def check_unique_labels(labels: Sequence[GroupLabel]):
    ids = [label.id for label in labels]
    if len(set(ids)) != len(ids):
        raise DomainError(f"Group ids must be unique, found {ids}.")


def fit_beta_from_histogram(bins: Sequence[Tuple[float, float]]) -> PopulationState:
    """
    Method of moments fit of a mean-parameterized Beta to a histogram.

    :param bins: (bin location in [0,1], weight >= 0) pairs. Weights need not be normalized.
    :returns: PopulationState whose mean is the weighted histogram mean, c = mu(1-mu)/var - 1 (at least 1e-3).
    """
    if len(bins) < 2:
        raise DomainError(f"Histogram needs at least two bins, found {len(bins)}.")
    centers = np.asarray([center for center, _ in bins], dtype=np.float64)
    weights = np.asarray([weight for _, weight in bins], dtype=np.float64)
    if not np.all((centers >= 0) & (centers <= 1)):
        raise DomainError("Histogram bin locations must lie in [0,1].")
    if not np.all(np.isfinite(weights) & (weights >= 0)):
        raise DomainError("Histogram weights must be non-negative and finite.")
    total = weights.sum()
    if not total > 0:
        raise DomainError("Histogram weights must sum to a positive value.")

    w = weights / total
    mu = float(np.dot(w, centers))
    var = float(np.dot(w, (centers - mu) ** 2))
    bound = mu * (1 - mu)
    if var <= 0 or var >= bound:
        raise DegenerateHistogramError(
            f"No Beta distribution has mean {mu:.6f} and variance {var:.3e} (needs 0 < var < {bound:.3e})."
        )
    c = max(bound / var - 1, MIN_SHAPE)
    return PopulationState.clamped(mu, c)


def equalize_shapes(states: Sequence[PopulationState]) -> List[PopulationState]:
    """
    Gives every state the arithmetic mean of the shapes, means unchanged.
    """
    if len(states) == 0:
        raise DomainError("equalize_shapes needs at least one state.")
    c = float(np.mean([state.c for state in states]))
    return [replace(state, c=c) for state in states]


def shared_shape(states: Sequence[PopulationState]):
    """ Returns the common c of the states, or None if they differ. """
    shapes = {state.c for state in states}
    return shapes.pop() if len(shapes) == 1 else None
