"""
Mean dynamics of the group distributions under a threshold policy.

A group with mean mu facing threshold A moves to
    f(A, mu) = beta * p_plus * ((1 - alpha) * mu_plus + alpha * mu) + nu * (1 - p_plus)
where p_plus is the selected proportion and mu_plus the selected mean. The Beta shape c is held fixed, so this
parameter update is the whole transition kernel.
"""

from dataclasses import dataclass, replace, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import specfun
from .population import PopulationState, GroupLabel, clamp_mean, shared_shape, check_unique_labels
from .policy import ThresholdPolicy
from .errors import DomainError, GroupCountError
from .logger import log as default_log


@dataclass(frozen=True)
class DynamicsParams:
    beta: float
    nu: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ["beta", "nu", "alpha"]:
            value = getattr(self, name)
            if not (0 <= value <= 1):
                raise DomainError(f"{name} must lie in [0,1], found {value}.")
            object.__setattr__(self, name, float(value))

    def with_alpha(self, alpha: float) -> "DynamicsParams":
        return replace(self, alpha=alpha)

    def to_dict(self):
        return {"beta": self.beta, "nu": self.nu, "alpha": self.alpha}


def mean_update(A, mu, c, beta, nu, alpha=0.0):
    """
    Vectorised f(A, mu). No division by p_plus, so a threshold that selects nobody gives exactly nu.
    """
    p_plus, m_plus = specfun.selection_moments(A, mu, c)
    return beta * ((1 - alpha) * m_plus + alpha * mu * p_plus) + nu * (1 - p_plus)


def mean_excess(A, mu, c, beta, nu, alpha=0.0):
    """
    Vectorised f(A, mu) - mu, written in lower tail quantities so it keeps its sign near mu = 0 and mu = 1:
        (beta - 1) mu - beta (1 - alpha) m_minus - beta alpha mu p_minus + nu p_minus
    """
    mu = np.asarray(mu, dtype=np.float64)
    p_minus, m_minus = specfun.tail_moments(A, mu, c)
    return (beta - 1) * mu - beta * (1 - alpha) * m_minus - beta * alpha * mu * p_minus + nu * p_minus


def step_mean(A: float, state: PopulationState, params: DynamicsParams) -> float:
    """
    One step of the mean dynamics for a single group.
    """
    specfun.check_unit_interval(A, "A")
    value = mean_update(A, state.mu, state.c, params.beta, params.nu, params.alpha)
    return float(np.clip(value, 0.0, 1.0))


def misestimation_sensitivity(A: float, state: PopulationState, params: DynamicsParams) -> float:
    """
    Derivative of f(A, mu) in alpha: beta * p_plus * (mu - mu_plus) = beta * (mu * p_plus - m_plus).
    Negative for every threshold strictly inside (0, 1).
    """
    specfun.check_unit_interval(A, "A")
    p_plus, m_plus = specfun.selection_moments(A, state.mu, state.c)
    return float(params.beta * (state.mu * p_plus - m_plus))


def _read_only(x):
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Record of a simulation. Arrays are [T+1, groups]: row t holds the state at step t and the decision taken
    there. mu_plus is NaN where nobody was selected and reward is NaN when no lender was given.
    """
    labels: Tuple[GroupLabel, ...]
    c: Tuple[float, ...]
    params: Tuple[DynamicsParams, ...]
    mu: np.ndarray
    threshold: np.ndarray
    p_plus: np.ndarray
    mu_plus: np.ndarray
    reward: np.ndarray
    policy: dict = field(default_factory=dict)
    lender: Optional[object] = None

    @property
    def horizon(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def n_groups(self) -> int:
        return self.mu.shape[1]

    def final_means(self) -> List[float]:
        return [float(x) for x in self.mu[-1]]

    def initial_means(self) -> List[float]:
        return [float(x) for x in self.mu[0]]

    COLUMNS = ("t", "group", "mu", "threshold", "p_plus", "mu_plus", "reward")

    def to_rows(self):
        """ Rows in (t, group) order with the trajectory CSV columns. """
        rows = []
        for t in range(self.mu.shape[0]):
            for g, label in enumerate(self.labels):
                rows.append({
                    "t": t,
                    "group": label.name,
                    "mu": float(self.mu[t, g]),
                    "threshold": float(self.threshold[t, g]),
                    "p_plus": float(self.p_plus[t, g]),
                    "mu_plus": float(self.mu_plus[t, g]),
                    "reward": float(self.reward[t, g]),
                })
        return rows


def simulate(
        groups: Sequence[Tuple[PopulationState, DynamicsParams]],
        policy: ThresholdPolicy,
        T: int,
        lender=None,
        labels: Sequence[GroupLabel] = None,
        log=None,
    ) -> Trajectory:
    """
    Runs the mean dynamics for T steps.

    :param groups: (initial state, dynamics parameters) per group.
    :param policy: gives the thresholds for the current states each step.
    :param T: number of updates, the trajectory has T+1 rows.
    :param lender: LenderParams used to record the per step lender reward, optional.
    """
    from .control import reward_from_moments

    log = log or default_log
    if T < 1:
        raise DomainError(f"Horizon must be at least 1, found {T}.")
    if len(groups) == 0:
        raise GroupCountError("Simulation needs at least one group.")

    labels = tuple(labels) if labels is not None else tuple(GroupLabel.default(i) for i in range(len(groups)))
    if len(labels) != len(groups):
        raise DomainError("One label per group required.")
    check_unique_labels(labels)

    states = [state for state, _ in groups]
    params = tuple(p for _, p in groups)
    if shared_shape(states) is None and not policy.joint:
        log.warn("Simulating groups with unequal shapes, convergence results assume a shared c.")

    c = np.asarray([state.c for state in states])
    beta = np.asarray([p.beta for p in params])
    nu = np.asarray([p.nu for p in params])
    alpha = np.asarray([p.alpha for p in params])
    R = None if lender is None else lender.R

    G = len(groups)
    shape = (T + 1, G)
    mu_hist = np.zeros(shape)
    a_hist = np.zeros(shape)
    p_hist = np.zeros(shape)
    m_hist = np.zeros(shape)
    r_hist = np.full(shape, np.nan)

    mu = np.asarray([state.mu for state in states])
    for t in range(T + 1):
        A = np.asarray(policy.thresholds(states), dtype=np.float64)
        p_plus, m_plus = specfun.selection_moments(A, mu, c)
        mu_hist[t] = mu
        a_hist[t] = A
        p_hist[t] = p_plus
        with np.errstate(divide="ignore", invalid="ignore"):
            m_hist[t] = np.where(p_plus > 0, np.clip(m_plus / p_plus, np.maximum(A, mu), 1.0), np.nan)
        if R is not None:
            r_hist[t] = reward_from_moments(p_plus, m_plus, R)
        if t == T:
            break
        new_mu = beta * ((1 - alpha) * m_plus + alpha * mu * p_plus) + nu * (1 - p_plus)
        mu = np.asarray([clamp_mean(x) for x in new_mu])
        states = [PopulationState(float(x), float(ci)) for x, ci in zip(mu, c)]

    return Trajectory(
        labels=labels,
        c=tuple(float(x) for x in c),
        params=params,
        mu=_read_only(mu_hist),
        threshold=_read_only(a_hist),
        p_plus=_read_only(p_hist),
        mu_plus=_read_only(m_hist),
        reward=_read_only(r_hist),
        policy=policy.describe(),
        lender=lender,
    )


def parity_gap(traj: Trajectory):
    """
    Returns (final gap, gap per step) of |mu_0 - mu_1|.
    """
    if traj.n_groups != 2:
        raise GroupCountError(f"Parity gap needs exactly two groups, found {traj.n_groups}.")
    gaps = np.abs(traj.mu[:, 0] - traj.mu[:, 1])
    return float(gaps[-1]), [float(x) for x in gaps]
