"""
Threshold policies.

A policy maps the current group states to one lending threshold per group. Fair policies come from the family
A = I^-1_{1-s}(c*mu + k1, c*(1-mu) + k2), which equalizes the rate 1 - I_A(c*mu + k1, c*(1-mu) + k2) across
groups: (0, 0) is demographic parity, (1, 0) equality of opportunity and (0, 1) the false positive rate.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import optimize, special

from . import specfun
from .population import PopulationState, shared_shape
from .errors import DomainError, ParameterBoundError, ShapeMismatchError, GroupCountError, NoSolutionError


class PolicyKind(str, Enum):
    DEMOGRAPHIC_PARITY = "demographic_parity"
    EQUALITY_OF_OPPORTUNITY = "equality_of_opportunity"
    EQUALIZED_ODDS = "equalized_odds"
    BLIND = "blind"
    CUSTOM = "custom"


# (k1, k2) for the kinds that have a fixed point in the family.
KIND_OFFSETS = {
    PolicyKind.DEMOGRAPHIC_PARITY: (0.0, 0.0),
    PolicyKind.EQUALITY_OF_OPPORTUNITY: (1.0, 0.0),
    PolicyKind.EQUALIZED_ODDS: (1.0, 0.0),
}

# blindness is the k -> infinity limit of the family
BLIND_OFFSET = math.inf

EO_SCAN_POINTS = 99
# decades scanned towards s = 0 and s = 1, roots can sit within 1e-4 of either end
EO_SCAN_DECADES = 8


class ThresholdPolicy:
    """
    Base class for anything the simulator can follow.

    joint policies see all groups at once and require a shared shape, the others threshold each group on its own.
    """

    joint = False
    name = "policy"

    def thresholds(self, states: Sequence[PopulationState]) -> List[float]:
        raise NotImplementedError()

    def describe(self) -> dict:
        return {"name": self.name}


@dataclass(frozen=True)
class FairPolicy(ThresholdPolicy):
    """
    Member of the fair threshold family, s is the shared rate being equalized.
    Blind policies store their shared threshold directly with both offsets at +inf.
    """
    s: Optional[float]
    k1: float = 0.0
    k2: float = 0.0
    kind: PolicyKind = PolicyKind.CUSTOM
    threshold: Optional[float] = None

    joint = True

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind == PolicyKind.BLIND:
            if self.threshold is None:
                raise DomainError("Blind policy needs a threshold.")
            specfun.check_unit_interval(self.threshold, "threshold")
            if not (math.isinf(self.k1) and math.isinf(self.k2)):
                raise DomainError("Blind policy must use the infinite offset sentinel.")
            return
        if self.s is None or not (0 <= self.s <= 1):
            raise DomainError(f"Rate s must lie in [0,1], found {self.s}.")
        if not (math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise DomainError("Only blind policies may use infinite offsets.")
        if self.kind in KIND_OFFSETS and (self.k1, self.k2) != KIND_OFFSETS[self.kind]:
            raise DomainError(
                f"{self.kind.value} requires (k1, k2) = {KIND_OFFSETS[self.kind]}, found {(self.k1, self.k2)}."
            )

    @classmethod
    def demographic_parity(cls, s: float) -> "FairPolicy":
        return cls(s, 0.0, 0.0, PolicyKind.DEMOGRAPHIC_PARITY)

    @classmethod
    def equality_of_opportunity(cls, s: float) -> "FairPolicy":
        return cls(s, 1.0, 0.0, PolicyKind.EQUALITY_OF_OPPORTUNITY)

    @classmethod
    def custom(cls, s: float, k1: float, k2: float) -> "FairPolicy":
        return cls(s, k1, k2, PolicyKind.CUSTOM)

    @property
    def name(self):
        return self.kind.value

    def check_bounds(self, states: Sequence[PopulationState]):
        """
        Both shifted shapes must stay positive for every group: k1 > -min(c mu), k2 > -min(c (1-mu)).
        """
        if self.kind == PolicyKind.BLIND:
            return
        min_a = min(state.a for state in states)
        min_b = min(state.b for state in states)
        if not self.k1 > -min_a:
            raise ParameterBoundError(f"k1={self.k1} must exceed {-min_a:.6g}.")
        if not self.k2 > -min_b:
            raise ParameterBoundError(f"k2={self.k2} must exceed {-min_b:.6g}.")

    def thresholds(self, states: Sequence[PopulationState]) -> List[float]:
        if self.kind != PolicyKind.BLIND:
            require_shared_shape(states)
        self.check_bounds(states)
        return [fair_threshold(self, state) for state in states]

    def describe(self) -> dict:
        if self.kind == PolicyKind.BLIND:
            return {"name": self.name, "threshold": self.threshold}
        return {"name": self.name, "s": self.s, "k1": self.k1, "k2": self.k2}


@dataclass(frozen=True)
class FixedPolicy(ThresholdPolicy):
    """
    The same threshold for every group at every step.
    """
    A0: float
    label: str = "fixed"

    def __post_init__(self):
        specfun.check_unit_interval(self.A0, "A0")

    @property
    def name(self):
        return self.label

    def thresholds(self, states):
        return [float(self.A0)] * len(states)

    def describe(self):
        return {"name": self.name, "threshold": self.A0}


@dataclass(frozen=True)
class EqualizedOddsSolution:
    s: float
    thresholds: tuple
    false_positive_rate: float


class EqualizedOddsPolicy(ThresholdPolicy):
    """
    Re-solves the two group equalized odds intersection at every step.
    """

    joint = True
    name = PolicyKind.EQUALIZED_ODDS.value

    def thresholds(self, states):
        if len(states) != 2:
            raise GroupCountError(f"Equalized odds is defined for two groups, found {len(states)}.")
        solution = equalized_odds_intersection(states[0], states[1])
        if solution is None:
            raise NoSolutionError(
                f"No non-trivial equalized odds policy for means {states[0].mu:.6f} and {states[1].mu:.6f}."
            )
        return list(solution.thresholds)


def require_shared_shape(states: Sequence[PopulationState]):
    if shared_shape(states) is None:
        raise ShapeMismatchError(
            f"Joint fair policies need a shared shape, found c = {[state.c for state in states]}."
        )


def fair_threshold(policy: FairPolicy, state: PopulationState) -> float:
    """
    Threshold for one group: I^-1_{1-s}(c mu + k1, c (1-mu) + k2), or the shared threshold of a blind policy.
    """
    if policy.kind == PolicyKind.BLIND:
        return float(policy.threshold)
    policy.check_bounds([state])
    shape = specfun.BetaParams(state.a + policy.k1, state.b + policy.k2)
    return specfun.inv_reg_inc_beta(1.0 - policy.s, shape)


def achieved_proportion(policy: Union[FairPolicy, PolicyKind, str], A: float, state: PopulationState) -> float:
    """
    The rate a fair policy holds fixed, evaluated at threshold A.

    Selection rate for demographic parity and blindness, true positive rate for equality of opportunity and
    equalized odds, and 1 - I_A(c mu + k1, c (1-mu) + k2) for custom offsets.
    """
    specfun.check_unit_interval(A, "A")
    if isinstance(policy, FairPolicy):
        kind = policy.kind
        offsets = (0.0, 0.0) if kind == PolicyKind.BLIND else (policy.k1, policy.k2)
    else:
        kind = PolicyKind(policy)
        if kind == PolicyKind.CUSTOM:
            raise DomainError("Custom offsets need a FairPolicy, not a kind.")
        offsets = KIND_OFFSETS.get(kind, (0.0, 0.0))
    k1, k2 = offsets
    if not (state.a + k1 > 0 and state.b + k2 > 0):
        raise ParameterBoundError(f"Offsets {offsets} are out of bounds for state {state}.")
    return float(1.0 - special.betainc(state.a + k1, state.b + k2, A))


def _eo_thresholds(s, states):
    return [specfun.inv_reg_inc_beta(1.0 - s, specfun.BetaParams(state.a + 1.0, state.b)) for state in states]


def _false_positive_rate(A, state):
    return float(1.0 - special.betainc(state.a, state.b + 1.0, A))


def _eo_scan_grid():
    ends = np.logspace(-EO_SCAN_DECADES, -2, 3 * (EO_SCAN_DECADES - 2) + 1)
    interior = np.linspace(0, 1, EO_SCAN_POINTS + 2)[1:-1]
    return np.unique(np.concatenate([ends, interior, 1.0 - ends]))


def equalized_odds_intersection(state_i: PopulationState, state_j: PopulationState) -> Optional[EqualizedOddsSolution]:
    """
    Finds the shared true positive rate s whose equality of opportunity thresholds also equalize the false
    positive rate. Returns None when only s in {0, 1} works.
    """
    if state_i.c != state_j.c:
        raise ShapeMismatchError(f"Equalized odds needs a shared shape, found {state_i.c} and {state_j.c}.")

    if state_i.mu == state_j.mu:
        thresholds = tuple(_eo_thresholds(0.5, [state_i, state_j]))
        return EqualizedOddsSolution(0.5, thresholds, _false_positive_rate(thresholds[0], state_i))

    if state_i.c > specfun.POINT_MASS_SHAPE:
        return None

    def fpr_gap(s):
        if s < 0.5:
            # small rates: work with 1 - A, which is the s quantile of Beta(b, a + 1)
            tails = [special.betainc(state.b + 1.0, state.a,
                                     specfun.inv_reg_inc_beta(s, specfun.BetaParams(state.b, state.a + 1.0)))
                     for state in (state_i, state_j)]
            gap = tails[0] - tails[1]
        else:
            # rates close to one: compare the lower tails
            tails = [special.betainc(state.a, state.b + 1.0, A)
                     for state, A in zip((state_i, state_j), _eo_thresholds(s, [state_i, state_j]))]
            gap = tails[1] - tails[0]
        # both tails underflowed, no sign information
        return float(gap) if (tails[0] > 0 or tails[1] > 0) else math.nan

    s_grid = _eo_scan_grid()
    gaps = np.asarray([fpr_gap(s) for s in s_grid])
    crossings = np.nonzero(np.sign(gaps[:-1]) * np.sign(gaps[1:]) < 0)[0]
    exact = np.nonzero(gaps == 0)[0]
    if len(exact) > 0:
        s = float(s_grid[exact[0]])
    elif len(crossings) > 0:
        k = crossings[0]
        s = float(optimize.brentq(fpr_gap, s_grid[k], s_grid[k + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    else:
        return None

    thresholds = tuple(_eo_thresholds(s, [state_i, state_j]))
    return EqualizedOddsSolution(s, thresholds, _false_positive_rate(thresholds[0], state_i))


def blind_threshold(A: float) -> FairPolicy:
    """
    Policy that ignores group membership and uses threshold A for everyone.
    """
    specfun.check_unit_interval(A, "A")
    return FairPolicy(None, BLIND_OFFSET, BLIND_OFFSET, PolicyKind.BLIND, threshold=float(A))
