"""
Fixed points of the mean dynamics under a fixed threshold.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from . import specfun
from .dynamics import DynamicsParams, mean_excess, mean_update
from .population import MU_EPSILON
from .policy import ThresholdPolicy
from .errors import DomainError
from .logger import log as default_log

BRACKET_EPSILON = 1e-6
SCAN_POINTS = 1001
ROOT_XTOL = 1e-13

DEFAULT_UNIT_GRID = tuple(np.round(np.linspace(0, 1, 11), 1))
DEFAULT_SHAPE_GRID = (0.5, 1.0, 2.0, 5.0, 20.0, 100.0)


class EquilibriumClass(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    MIXED = "mixed"


@dataclass(frozen=True)
class EquilibriumPoint:
    """
    Fixed point mu_inf of mu -> f(A, mu). boundary is set when the root sits at 0 or 1 rather than inside.
    n_roots is the number of sign changes seen on the diagnostic scan.
    """
    A: float
    mu_inf: float
    stable: bool
    boundary: bool = False
    n_roots: int = 1
    classification: Optional[EquilibriumClass] = None

    def to_row(self):
        return {
            "A": self.A,
            "mu_inf": self.mu_inf,
            "stable": int(self.stable),
            "boundary": int(self.boundary),
            "classification": "" if self.classification is None else self.classification.value,
        }


def _excess_fn(A, c, params):
    return lambda mu: float(mean_excess(A, mu, c, params.beta, params.nu, params.alpha))


def count_sign_changes(h: np.ndarray) -> np.ndarray:
    """
    Sign changes along the last axis, an exact interior zero counts as one.
    """
    s = np.sign(h)
    crossings = np.sum(s[..., :-1] * s[..., 1:] < 0, axis=-1)
    touches = np.sum(s[..., 1:-1] == 0, axis=-1)
    return crossings + touches


def fixed_point(A: float, c: float, params: DynamicsParams, scan: bool = True, log=None) -> EquilibriumPoint:
    """
    Solves f(A, mu) = mu.

    The excess f - mu is nu * p_minus > 0 near mu = 0 and beta - 1 < 0 near mu = 1, so the root is bracketed on
    [1e-6, 1 - 1e-6] and polished with Brent's method. When the excess already has the wrong sign at an end of
    the bracket, the root is that end (0 or 1) and the point is flagged as a boundary root.
    """
    log = log or default_log
    specfun.check_unit_interval(A, "A")
    if not (np.isfinite(c) and c > 0):
        raise DomainError(f"Shape c must be positive, found {c}.")

    h = _excess_fn(A, c, params)
    lo, hi = BRACKET_EPSILON, 1 - BRACKET_EPSILON

    n_roots = 1
    if scan:
        mesh = np.linspace(lo, hi, SCAN_POINTS)
        n_roots = int(count_sign_changes(mean_excess(A, mesh, c, params.beta, params.nu, params.alpha)))
        if n_roots > 1:
            log.warn(
                f"Found {n_roots} roots of f(A, mu) - mu for A={A:.6g}, c={c:.6g}, beta={params.beta:.6g}, "
                f"nu={params.nu:.6g}, alpha={params.alpha:.6g}; reporting the bracketed one."
            )

    h_lo, h_hi = h(lo), h(hi)
    if h_lo <= 0:
        return EquilibriumPoint(float(A), 0.0, stable=True, boundary=True, n_roots=n_roots)
    if h_hi >= 0:
        return EquilibriumPoint(float(A), 1.0, stable=True, boundary=True, n_roots=n_roots)

    mu_inf = float(optimize.brentq(h, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500))
    delta = max(1e-7, 1e-4 * min(mu_inf - lo, hi - mu_inf))
    left = max(lo, mu_inf - delta)
    right = min(hi, mu_inf + delta)
    stable = h(left) > 0 > h(right)
    return EquilibriumPoint(float(A), mu_inf, stable=bool(stable), n_roots=n_roots)


def equilibrium_curve(A_grid: Sequence[float], c: float, params: DynamicsParams, mu0: Sequence[float] = None,
                      log=None) -> List[EquilibriumPoint]:
    """
    Fixed point for every threshold on A_grid. When two initial means are given each point is classified
    against them.
    """
    points = []
    for A in A_grid:
        point = fixed_point(float(A), c, params, log=log)
        if mu0 is not None:
            point = EquilibriumPoint(
                point.A, point.mu_inf, point.stable, point.boundary, point.n_roots,
                classify(point, mu0[0], mu0[1]),
            )
        points.append(point)
    return points


def classify(eq: Union[EquilibriumPoint, float], mu0_i: float, mu0_j: float) -> EquilibriumClass:
    mu_inf = eq.mu_inf if isinstance(eq, EquilibriumPoint) else float(eq)
    if mu_inf >= max(mu0_i, mu0_j):
        return EquilibriumClass.POSITIVE
    if mu_inf <= min(mu0_i, mu0_j):
        return EquilibriumClass.NEGATIVE
    return EquilibriumClass.MIXED


def social_welfare_threshold(params: DynamicsParams, state_mu: float = None) -> float:
    """
    Fixed threshold that maximizes the next mean, and so the equilibrium mean.

    The derivative of f in A is pi(A) (nu - beta (1 - alpha) A - beta alpha mu), which vanishes at
    A = (nu - alpha beta mu) / (beta (1 - alpha)); for alpha = 0 this is nu / beta. Clamped to [0, 1].
    """
    if not params.beta > 0:
        raise DomainError("Social welfare threshold needs beta > 0.")
    if params.alpha >= 1:
        raise DomainError("With alpha = 1 every threshold lowers the mean, no social welfare threshold exists.")
    if params.alpha == 0:
        return float(np.clip(params.nu / params.beta, 0.0, 1.0))
    if state_mu is None:
        raise DomainError("Social welfare threshold under misestimation depends on the group mean.")
    A = (params.nu - params.alpha * params.beta * state_mu) / (params.beta * (1 - params.alpha))
    return float(np.clip(A, 0.0, 1.0))


class SocialWelfarePolicy(ThresholdPolicy):
    """
    Each group gets its own social welfare threshold, computed from its own dynamics parameters.
    """

    name = "social_welfare"

    def __init__(self, params: Sequence[DynamicsParams]):
        self.params = tuple(params)

    def thresholds(self, states):
        if len(states) != len(self.params):
            raise DomainError("One set of dynamics parameters per group required.")
        return [social_welfare_threshold(p, state.mu) for p, state in zip(self.params, states)]

    def describe(self):
        return {"name": self.name, "alpha": [p.alpha for p in self.params]}


@dataclass
class UniquenessReport:
    cells: int = 0
    boundary_cells: int = 0
    failures: List[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return len(self.failures) == 0

    def to_dict(self):
        return {
            "cells": self.cells,
            "boundary_cells": self.boundary_cells,
            "failures": self.failures,
            "passed": self.passed,
        }


def uniqueness_scan(
        A_grid: Sequence[float] = DEFAULT_UNIT_GRID,
        c_grid: Sequence[float] = DEFAULT_SHAPE_GRID,
        beta_grid: Sequence[float] = DEFAULT_UNIT_GRID,
        nu_grid: Sequence[float] = DEFAULT_UNIT_GRID,
        mesh_points: int = SCAN_POINTS,
        alpha: float = 0.0,
    ) -> UniquenessReport:
    """
    Counts sign changes of f(A, mu) - mu over a dense mu mesh for every grid cell.

    Cells whose root sits on the boundary (excess <= 0 at the bottom of the mesh or >= 0 at the top) are counted
    separately, every other cell must have exactly one sign change.
    """
    mu = np.linspace(BRACKET_EPSILON, 1 - BRACKET_EPSILON, mesh_points)
    beta = np.asarray(beta_grid, dtype=np.float64)[:, None, None]
    nu = np.asarray(nu_grid, dtype=np.float64)[None, :, None]
    report = UniquenessReport()
    for c in c_grid:
        for A in A_grid:
            # the tail quantities do not depend on beta or nu, so broadcast over those
            p_minus, m_minus = specfun.tail_moments(A, mu, c)
            h = (beta - 1) * mu - beta * (1 - alpha) * m_minus - beta * alpha * mu * p_minus + nu * p_minus
            counts = count_sign_changes(h)
            boundary = (h[..., 0] <= 0) | (h[..., -1] >= 0)
            report.cells += counts.size
            report.boundary_cells += int(np.sum(boundary))
            for i, j in zip(*np.nonzero(~boundary & (counts != 1))):
                report.failures.append({
                    "A": float(A), "c": float(c), "beta": float(beta_grid[i]), "nu": float(nu_grid[j]),
                    "roots": int(counts[i, j]),
                })
    return report


def iterate_fixed_threshold(A: float, mu0, c: float, params: DynamicsParams, max_steps: int = 100000,
                            tol: float = 1e-13):
    """
    Iterates mu -> f(A, mu) from one or more starting means until every step changes mu by at most tol.
    Returns (final means, steps taken, converged).
    """
    mu = np.atleast_1d(np.asarray(mu0, dtype=np.float64)).copy()
    for step in range(1, max_steps + 1):
        new_mu = np.clip(mean_update(A, mu, c, params.beta, params.nu, params.alpha), MU_EPSILON, 1 - MU_EPSILON)
        change = np.max(np.abs(new_mu - mu))
        mu = new_mu
        if change <= tol:
            return mu, step, True
    return mu, max_steps, False
