"""
Lender utility and optimal control of the mean dynamics.

The lender earns g(A, mu) = p_plus * ((1 + R) * mu_plus - 1) per step and discounts the future by gamma, so the
optimal value function solves
    J(mu) = max_A { g(A, mu) + gamma * J(f(A, mu)) }.
solve_bellman runs synchronous value iteration on a mu mesh with a monotone cubic interpolant of J between nodes.
"""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import interpolate, optimize

from . import specfun
from .population import PopulationState, MU_EPSILON
from .dynamics import DynamicsParams, Trajectory, simulate, parity_gap, mean_update
from .policy import ThresholdPolicy, FairPolicy, PolicyKind, require_shared_shape
from .errors import DomainError, ConvergenceError, GroupCountError
from .logger import Logger, log as default_log

DEFAULT_GRID_SIZE = 513
DEFAULT_ACTION_GRID = 257
DEFAULT_TOL = 1e-9
DEFAULT_REFINE_ROUNDS = 2
TIE_TOLERANCE = 1e-12
GOLDEN_STEPS = 40
PARITY_TOLERANCE = 1e-3
CLUSTER_GAP = 1e-3

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class LenderParams:
    R: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.R) and self.R > 0):
            raise DomainError(f"Interest rate R must be positive, found {self.R}.")
        if not (0 <= self.gamma < 1):
            raise DomainError(f"Discount gamma must lie in [0,1), found {self.gamma}.")
        object.__setattr__(self, "R", float(self.R))
        object.__setattr__(self, "gamma", float(self.gamma))

    def to_dict(self):
        return {"R": self.R, "gamma": self.gamma}


def reward_from_moments(p_plus, m_plus, R):
    """ g = p_plus * ((1 + R) * mu_plus - 1) written with the first moment m_plus = p_plus * mu_plus. """
    return (1 + R) * m_plus - p_plus


def reward(A: float, state: PopulationState, lender: LenderParams) -> float:
    """
    Expected lender profit per individual for threshold A. Zero when nobody is selected.
    """
    specfun.check_unit_interval(A, "A")
    p_plus, m_plus = specfun.selection_moments(A, state.mu, state.c)
    return float(reward_from_moments(p_plus, m_plus, lender.R))


def greedy_threshold(lender) -> float:
    """
    Threshold maximizing the one step reward, 1 / (1 + R), whatever the state.
    Accepts LenderParams or a bare rate R >= 0.
    """
    R = lender.R if isinstance(lender, LenderParams) else float(lender)
    if not R >= 0:
        raise DomainError(f"Interest rate R must be non-negative, found {R}.")
    if math.isinf(R):
        return 0.0
    return 1.0 / (1.0 + R)


def lemma1_rate_bound(params: DynamicsParams) -> float:
    """ Largest interest rate, beta / nu - 1, for which the lender never thresholds below nu / beta. """
    return math.inf if params.nu == 0 else params.beta / params.nu - 1


# -------------------------------------------------------------
# Value function
# -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ValueFunction:
    """
    Solved Bellman equation on a mu mesh: values J*(mu) and maximizing thresholds A*(mu) per node.
    """
    mu_grid: np.ndarray
    values: np.ndarray
    policy: np.ndarray
    converged: bool
    residual: float
    iterations: int
    residual_history: Tuple[float, ...]
    action_spacing: float
    c: float
    params: DynamicsParams
    lender: LenderParams
    solver_log: Optional[Logger] = field(default=None, repr=False)

    @property
    def grid_spacing(self) -> float:
        return float(self.mu_grid[1] - self.mu_grid[0])

    def value_at(self, mu):
        interp = interpolate.PchipInterpolator(self.mu_grid, self.values, extrapolate=True)
        mu = np.clip(np.asarray(mu, dtype=np.float64), self.mu_grid[0], self.mu_grid[-1])
        result = interp(mu)
        return float(result) if np.ndim(result) == 0 else result

    def policy_at(self, mu):
        result = np.interp(np.asarray(mu, dtype=np.float64), self.mu_grid, self.policy)
        return float(result) if np.ndim(result) == 0 else result

    def to_rows(self):
        return [
            {"mu": float(m), "J": float(j), "A_star": float(a)}
            for m, j, a in zip(self.mu_grid, self.values, self.policy)
        ]


class OptimalPolicy(ThresholdPolicy):
    """
    Applies a solved policy to each group independently. Takes one ValueFunction shared by all groups, or one
    per group when the groups differ in shape or dynamics.
    """

    name = "optimal"

    def __init__(self, value_function):
        if isinstance(value_function, ValueFunction):
            value_function = [value_function]
        self.value_functions = tuple(value_function)
        if len(self.value_functions) == 0:
            raise DomainError("OptimalPolicy needs at least one value function.")

    @property
    def value_function(self) -> ValueFunction:
        return self.value_functions[0]

    def thresholds(self, states):
        if len(self.value_functions) == 1:
            vfs = self.value_functions * len(states)
        elif len(self.value_functions) == len(states):
            vfs = self.value_functions
        else:
            raise GroupCountError(f"Expected {len(self.value_functions)} groups, found {len(states)}.")
        return [float(np.clip(vf.policy_at(state.mu), 0.0, 1.0)) for vf, state in zip(vfs, states)]

    def describe(self):
        vf = self.value_function
        return {"name": self.name, "R": vf.lender.R, "gamma": vf.lender.gamma, "grid_size": len(vf.mu_grid)}


def _mu_mesh(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n + 2)[1:-1]


def _transition_tables(actions, mu_grid, c, params, lender):
    """ Reward and next mean for every (node, action) pair. """
    mu = mu_grid[:, None]
    p_plus, m_plus = specfun.selection_moments(actions, mu, c)
    G = reward_from_moments(p_plus, m_plus, lender.R)
    F = params.beta * ((1 - params.alpha) * m_plus + params.alpha * mu * p_plus) + params.nu * (1 - p_plus)
    return np.asarray(G), np.clip(F, mu_grid[0], mu_grid[-1])


def _select(Q, actions):
    """ Max over actions per node, ties within TIE_TOLERANCE go to the largest threshold. """
    best = Q.max(axis=1)
    candidates = Q >= (best[:, None] - TIE_TOLERANCE)
    return best, np.where(candidates, actions, -np.inf).max(axis=1)


def _iteration_cap(G, gamma, tol):
    if gamma == 0:
        return 3
    J_range = max(float(np.max(np.abs(G))) / (1 - gamma), tol)
    bound = math.log(tol * (1 - gamma) / J_range) / math.log(gamma)
    return int(3 * max(bound, 1) + 100)


def _golden_refine(J, mu_grid, incumbent, half_width, c, params, lender):
    """
    Golden section search of g + gamma J(f) on [A - h, A + h] around each node's incumbent threshold.
    """
    interp = interpolate.PchipInterpolator(mu_grid, J, extrapolate=True)

    def q(A):
        G, F = _transition_tables(A[:, None], mu_grid, c, params, lender)
        return (G + lender.gamma * interp(F))[:, 0]

    lo = np.clip(incumbent - half_width, 0.0, 1.0)
    hi = np.clip(incumbent + half_width, 0.0, 1.0)
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    q1, q2 = q(x1), q(x2)
    for _ in range(GOLDEN_STEPS):
        left = q1 >= q2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x_new = np.where(left, hi - INV_PHI * (hi - lo), lo + INV_PHI * (hi - lo))
        q_new = q(x_new)
        x1, x2 = np.where(left, x_new, x2), np.where(left, x1, x_new)
        q1, q2 = np.where(left, q_new, q2), np.where(left, q1, q_new)
    return np.where(q1 >= q2, x1, x2)


def solve_bellman(
        c: float,
        params: DynamicsParams,
        lender: LenderParams,
        grid_size: int = DEFAULT_GRID_SIZE,
        tol: float = DEFAULT_TOL,
        action_grid: int = DEFAULT_ACTION_GRID,
        refine_rounds: int = DEFAULT_REFINE_ROUNDS,
        max_iterations: int = None,
        log: Logger = None,
    ) -> ValueFunction:
    """
    Value iteration for the lender's Bellman equation.

    :param c: shared Beta shape of the population.
    :param grid_size: number of interior mu nodes, the mesh is linspace(0, 1, grid_size + 2)[1:-1].
    :param action_grid: number of evenly spaced thresholds tried at every node.
    :param refine_rounds: after convergence, a golden section search around each node's best threshold adds one
        extra candidate action per node and iteration resumes, this many times.
    :param max_iterations: per round cap, by default derived from the contraction bound.
    """
    log = log or default_log
    if grid_size < 64:
        raise DomainError(f"grid_size must be at least 64, found {grid_size}.")
    if action_grid < 2:
        raise DomainError(f"action_grid must be at least 2, found {action_grid}.")
    if not tol > 0:
        raise DomainError(f"tol must be positive, found {tol}.")
    if not (np.isfinite(c) and c > 0):
        raise DomainError(f"Shape c must be positive, found {c}.")

    solver_log = Logger(print_level=log.print_level)
    mu_grid = _mu_mesh(grid_size)
    action_spacing = 1.0 / (action_grid - 1)
    actions = np.tile(np.linspace(0.0, 1.0, action_grid), (grid_size, 1))
    G, F = _transition_tables(actions, mu_grid, c, params, lender)
    gamma = lender.gamma

    cap = max_iterations or _iteration_cap(G, gamma, tol)
    J = np.zeros(grid_size)
    history = []
    total_iterations = 0
    residual = math.inf

    for phase in range(refine_rounds + 1):
        converged = False
        for _ in range(cap):
            interp = interpolate.PchipInterpolator(mu_grid, J, extrapolate=True)
            Q = G + gamma * interp(F) if gamma > 0 else G
            J_new, _ = _select(Q, actions)
            residual = float(np.max(np.abs(J_new - J)))
            J = J_new
            total_iterations += 1
            history.append(residual)

            solver_log.watch("iteration", total_iterations)
            solver_log.watch("phase", phase)
            solver_log.watch("residual", residual, export_precision=None)
            solver_log.watch("J_min", float(J.min()))
            solver_log.watch("J_max", float(J.max()))
            solver_log.record_step()

            if residual <= tol:
                converged = True
                break

        if not converged:
            raise ConvergenceError(
                f"Value iteration did not reach tol={tol:g} within {cap} iterations (residual {residual:.3e}).",
                iterations=total_iterations,
                residual=residual,
            )
        solver_log.print_variables(include_header=(phase == 0), level=Logger.DEBUG)

        if phase == refine_rounds:
            break
        interp = interpolate.PchipInterpolator(mu_grid, J, extrapolate=True)
        _, incumbent = _select(G + gamma * interp(F), actions)
        refined = _golden_refine(J, mu_grid, incumbent, action_spacing, c, params, lender)
        actions = np.concatenate([actions, refined[:, None]], axis=1)
        G_new, F_new = _transition_tables(refined[:, None], mu_grid, c, params, lender)
        G = np.concatenate([G, G_new], axis=1)
        F = np.concatenate([F, F_new], axis=1)

    interp = interpolate.PchipInterpolator(mu_grid, J, extrapolate=True)
    values, policy = _select(G + gamma * interp(F), actions)

    log.info(
        f"Solved Bellman equation (c={c:g}, R={lender.R:g}, gamma={gamma:g}) in {total_iterations} iterations, "
        f"residual {residual:.2e}."
    )

    return ValueFunction(
        mu_grid=mu_grid,
        values=values,
        policy=np.clip(policy, 0.0, 1.0),
        converged=True,
        residual=residual,
        iterations=total_iterations,
        residual_history=tuple(history),
        action_spacing=action_spacing,
        c=float(c),
        params=params,
        lender=lender,
        solver_log=solver_log,
    )


# -------------------------------------------------------------
# Discrete oracle
# -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    mu_grid: np.ndarray
    values: np.ndarray
    policy: np.ndarray
    iterations: int


def solve_discrete_mdp(c: float, params: DynamicsParams, lender: LenderParams, n_states: int = 64,
                       n_actions: int = 64, tol: float = 1e-12, max_iterations: int = 100000) -> DiscreteSolution:
    """
    Exact value iteration on a finite MDP: the same mu mesh and threshold grid as solve_bellman, with every
    transition snapped to the nearest mesh node.
    """
    mu_grid = _mu_mesh(n_states)
    actions = np.tile(np.linspace(0.0, 1.0, n_actions), (n_states, 1))
    G, F = _transition_tables(actions, mu_grid, c, params, lender)
    spacing = mu_grid[1] - mu_grid[0]
    next_state = np.clip(np.rint((F - mu_grid[0]) / spacing).astype(int), 0, n_states - 1)

    J = np.zeros(n_states)
    for iteration in range(1, max_iterations + 1):
        J_new, _ = _select(G + lender.gamma * J[next_state], actions)
        residual = float(np.max(np.abs(J_new - J)))
        J = J_new
        if residual <= tol:
            break
    else:
        raise ConvergenceError("Discrete value iteration did not converge.", iterations=max_iterations,
                               residual=residual)
    _, policy = _select(G + lender.gamma * J[next_state], actions)
    return DiscreteSolution(mu_grid, J, policy, iteration)


# -------------------------------------------------------------
# Bifurcation
# -------------------------------------------------------------

@dataclass
class BifurcationReport:
    """
    Limits of the followed trajectories grouped into clusters. Starts that were still moving after the horizon
    are left out of the clusters and listed in unconverged.
    """
    clusters: List[float]
    basins: List[dict]
    boundaries: List[float]
    mu0_grid: List[float]
    limits: List[float]
    unconverged: List[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def to_dict(self):
        return {
            "clusters": self.clusters,
            "basins": self.basins,
            "boundaries": self.boundaries,
            "mu0": self.mu0_grid,
            "limits": self.limits,
            "unconverged": self.unconverged,
        }


def _limit_means(policy_fn, mu0, c, params, T, tol):
    """ Returns (final means, converged flags). A start converges once its step change is at most tol. """
    mu = np.atleast_1d(np.asarray(mu0, dtype=np.float64)).copy()
    converged = np.zeros(mu.shape, dtype=bool)
    for _ in range(T):
        active = ~converged
        A = np.clip(policy_fn(mu[active]), 0.0, 1.0)
        new_mu = np.clip(mean_update(A, mu[active], c, params.beta, params.nu, params.alpha),
                         MU_EPSILON, 1 - MU_EPSILON)
        converged[active] = np.abs(new_mu - mu[active]) <= tol
        mu[active] = new_mu
        if converged.all():
            break
    return mu, converged


def _cluster(values, gap):
    """ Groups sorted values wherever consecutive values are more than gap apart, returns cluster means. """
    order = np.sort(values)
    splits = np.nonzero(np.diff(order) > gap)[0] + 1
    return [float(np.mean(group)) for group in np.split(order, splits)]


def detect_bifurcation(
        vf,
        c: float = None,
        params: DynamicsParams = None,
        mu0_grid: Sequence[float] = None,
        T: int = 5000,
        tol: float = 1e-12,
        cluster_gap: float = CLUSTER_GAP,
        bisection_steps: int = 30,
        log: Logger = None,
    ) -> BifurcationReport:
    """
    Follows the policy from every starting mean and groups the limits.

    :param vf: a ValueFunction, or any ThresholdPolicy that thresholds groups independently.
    :param mu0_grid: starting means, 49 evenly spaced points in [0.02, 0.98] by default.
    :param T: maximum steps per start. A start whose step change is still above tol after T steps is reported
        in unconverged and takes no part in the clustering. ConvergenceError is raised when no start settles.
    """
    log = log or default_log
    if isinstance(vf, ValueFunction):
        c = vf.c if c is None else c
        params = vf.params if params is None else params
        policy_fn = vf.policy_at
    else:
        if c is None or params is None:
            raise DomainError("c and params are required when detecting bifurcations of a plain policy.")
        policy = vf
        policy_fn = lambda mu: np.asarray(policy.thresholds([PopulationState(float(x), c) for x in mu]))

    mu0_grid = np.asarray(mu0_grid if mu0_grid is not None else np.linspace(0.02, 0.98, 49), dtype=np.float64)
    limits, converged = _limit_means(policy_fn, mu0_grid, c, params, T, tol)
    if not converged.any():
        raise ConvergenceError(f"No starting mean settled within {T} steps (tol={tol:g}).", iterations=T)
    unconverged = [float(x) for x in mu0_grid[~converged]]
    if unconverged:
        log.warn(f"{len(unconverged)} of {len(mu0_grid)} starting means were still moving after {T} steps and "
                 f"were left out of the clusters: {', '.join(f'{x:.4f}' for x in unconverged)}")

    starts = mu0_grid[converged]
    centers = _cluster(limits[converged], cluster_gap)

    def nearest(x):
        return int(np.argmin([abs(x - center) for center in centers]))

    labels = [nearest(x) for x in limits[converged]]
    basins = []
    start = 0
    for i in range(1, len(starts) + 1):
        if i == len(starts) or labels[i] != labels[start]:
            basins.append({
                "mu0_min": float(starts[start]),
                "mu0_max": float(starts[i - 1]),
                "limit": centers[labels[start]],
            })
            start = i

    boundaries = []
    for i in range(len(starts) - 1):
        if labels[i] == labels[i + 1]:
            continue
        lo, hi = float(starts[i]), float(starts[i + 1])
        lo_label = labels[i]
        for _ in range(bisection_steps):
            mid = 0.5 * (lo + hi)
            limit, _ = _limit_means(policy_fn, mid, c, params, T, tol)
            if nearest(float(limit[0])) == lo_label:
                lo = mid
            else:
                hi = mid
        boundaries.append(0.5 * (lo + hi))

    return BifurcationReport(
        clusters=centers,
        basins=basins,
        boundaries=boundaries,
        mu0_grid=[float(x) for x in mu0_grid],
        limits=[float(x) for x in limits],
        unconverged=unconverged,
    )


# -------------------------------------------------------------
# Threshold bound check
# -------------------------------------------------------------

@dataclass
class Lemma1Report:
    applicable: bool
    passed: Optional[bool]
    bound: float
    tolerance: float
    violations: List[dict] = field(default_factory=list)

    def to_dict(self):
        return {
            "applicable": self.applicable,
            "passed": self.passed,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "violations": self.violations,
        }


def lemma1_check(vf: ValueFunction, params: DynamicsParams = None, lender: LenderParams = None,
                 log: Logger = None) -> Lemma1Report:
    """
    Checks that no solved threshold lies below nu / beta by more than one grid spacing.
    Only meaningful for R <= beta / nu - 1, otherwise a warning is logged and the check is skipped.
    """
    log = log or default_log
    params = params or vf.params
    lender = lender or vf.lender
    if not params.beta > 0:
        raise DomainError("The threshold bound nu / beta needs beta > 0.")
    bound = min(params.nu / params.beta, 1.0)
    tolerance = max(vf.action_spacing, vf.grid_spacing)
    rate_bound = lemma1_rate_bound(params)
    if lender.R > rate_bound:
        log.warn(
            f"R={lender.R:g} exceeds beta/nu - 1 = {rate_bound:g}, threshold bound check skipped."
        )
        return Lemma1Report(False, None, bound, tolerance)

    violations = [
        {"mu": float(mu), "A_star": float(A)}
        for mu, A in zip(vf.mu_grid, vf.policy) if A < bound - tolerance
    ]
    return Lemma1Report(True, len(violations) == 0, bound, tolerance, violations)


# -------------------------------------------------------------
# Fair constrained simulation
# -------------------------------------------------------------

@dataclass
class ParityVerdict:
    converged: bool
    final_gap: float
    informational: bool = False

    @property
    def label(self) -> str:
        result = "converged" if self.converged else "not converged"
        return result + (" (informational)" if self.informational else "")

    def to_dict(self):
        return {
            "converged": self.converged,
            "final_gap": self.final_gap,
            "informational": self.informational,
            "verdict": self.label,
        }


def parity_verdict(traj: Trajectory, lender: LenderParams = None, tol: float = PARITY_TOLERANCE) -> ParityVerdict:
    final_gap, _ = parity_gap(traj)
    informational = lender is not None and any(lender.R > lemma1_rate_bound(p) for p in traj.params)
    return ParityVerdict(final_gap < tol, final_gap, informational)


def fair_constrained_simulation(
        groups,
        fair_policy: ThresholdPolicy,
        lender: LenderParams,
        params: DynamicsParams = None,
        T: int = 1000,
        alphas: Sequence[float] = None,
        tol: float = PARITY_TOLERANCE,
        labels=None,
        log: Logger = None,
    ):
    """
    Simulates two groups under a joint fair policy and judges whether they reach parity.

    :param groups: PopulationStates sharing c when params is given, otherwise (state, params) pairs.
    :param alphas: optional per group misestimation levels applied on top of params.
    :returns: (Trajectory, ParityVerdict). The verdict is informational when R exceeds beta / nu - 1.
    """
    if params is not None:
        groups = [(state, params) for state in groups]
    groups = list(groups)
    if alphas is not None:
        if len(alphas) != len(groups):
            raise DomainError("One alpha per group required.")
        groups = [(state, p.with_alpha(a)) for (state, p), a in zip(groups, alphas)]
    if len(groups) != 2:
        raise GroupCountError(f"Fair constrained simulation needs two groups, found {len(groups)}.")
    require_shared_shape([state for state, _ in groups])

    traj = simulate(groups, fair_policy, T, lender=lender, labels=labels, log=log)
    return traj, parity_verdict(traj, lender, tol)


def discounted_reward(traj: Trajectory, gamma: float) -> float:
    """ Sum over groups of sum_t gamma^t reward_t. """
    discount = gamma ** np.arange(traj.horizon + 1)
    return float(np.sum(discount[:, None] * np.nan_to_num(traj.reward)))


def optimize_fair_rate(template: FairPolicy, groups, lender: LenderParams, T: int = 200,
                       grid: Sequence[float] = None, labels=None) -> Tuple[FairPolicy, float]:
    """
    Lender optimal member of a fair policy family: the rate s (or the shared threshold of a blind policy)
    that maximizes the discounted lender reward over the horizon.

    A coarse grid search is polished with a bounded scalar search between the best grid point's neighbours.
    """
    groups = list(groups)
    blind = template.kind == PolicyKind.BLIND
    grid = np.asarray(grid if grid is not None else np.linspace(0.05, 0.95, 19), dtype=np.float64)

    def make(x):
        return replace(template, threshold=float(x)) if blind else replace(template, s=float(x))

    def value(x):
        return discounted_reward(simulate(groups, make(x), T, lender=lender, labels=labels), lender.gamma)

    scores = [value(x) for x in grid]
    k = int(np.argmax(scores))
    lo = float(grid[max(k - 1, 0)])
    hi = float(grid[min(k + 1, len(grid) - 1)])
    best_x, best_value = float(grid[k]), float(scores[k])
    if hi > lo:
        result = optimize.minimize_scalar(lambda x: -value(x), bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-4})
        if result.success and -result.fun > best_value:
            best_x, best_value = float(result.x), float(-result.fun)
    return make(best_x), best_value
