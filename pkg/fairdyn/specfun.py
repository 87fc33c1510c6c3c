"""
Special function kernel: regularized incomplete beta function, its inverse, the mean-parameterized Beta
density and the truncated moments used by the selection and dynamics code.

Everything here is a pure function of its arguments, apart from warnings sent to the logger.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, integrate

from .errors import DomainError, ConvergenceError, DegenerateSelectionError
from .logger import log as default_log

# beyond this concentration a group is treated as a point mass at its mean
POINT_MASS_SHAPE = 1e4

INVERSE_MAX_ITERATIONS = 1100
# forward residual |I_x(a, b) - q| above which the returned quantile is reported as inexact
INVERSE_RESIDUAL_WARNING = 1e-8
EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class BetaParams:
    """
    Standard shapes (a, b) of a Beta distribution.
    """
    a: float
    b: float

    def __post_init__(self):
        for name in ["a", "b"]:
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"Beta shape {name} must be positive and finite, found {value}.")

    @classmethod
    def from_mean(cls, mu: float, c: float) -> "BetaParams":
        check_mean_shape(mu, c)
        return cls(float(c * mu), float(c * (1 - mu)))

    @property
    def mu(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def c(self) -> float:
        return self.a + self.b


def check_mean_shape(mu, c):
    """
    Raises DomainError unless every mu is in (0,1) and every c is positive and finite.
    """
    mu = np.asarray(mu, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if not np.all((mu > 0) & (mu < 1)):
        raise DomainError(f"Mean must lie strictly inside (0,1), found {_show(mu)}.")
    if not np.all(np.isfinite(c) & (c > 0)):
        raise DomainError(f"Shape c must be positive and finite, found {_show(c)}.")


def check_unit_interval(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if not np.all((x >= 0) & (x <= 1)):
        raise DomainError(f"{name} must lie in [0,1], found {_show(x)}.")


def _show(x):
    x = np.asarray(x)
    if x.ndim == 0:
        return str(float(x))
    bad = x.ravel()
    return f"array with range [{np.nanmin(bad)}, {np.nanmax(bad)}]" if bad.size else "empty array"


def _as_output(x):
    x = np.asarray(x, dtype=np.float64)
    return float(x) if x.ndim == 0 else x


def reg_inc_beta(x, p: BetaParams):
    """
    Regularized incomplete beta function I_x(a, b).
    Accepts scalars or arrays for x.
    """
    check_unit_interval(x)
    return _as_output(special.betainc(p.a, p.b, np.asarray(x, dtype=np.float64)))


def _pdf_ab(x, a, b):
    # log form, avoids overflow of the beta function for large shapes
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.exp(special.xlogy(a - 1, x) + special.xlog1py(b - 1, -x) - special.betaln(a, b))


def inv_reg_inc_beta(q: float, p: BetaParams, log=None) -> float:
    """
    Returns x with I_x(a, b) = q.

    Starts from scipy's betaincinv and polishes with Newton steps kept inside a shrinking bracket,
    bisecting whenever a Newton step would leave the bracket or stops halving it.

    Shapes below about 0.05 make I_x(a, b) jump within one ulp of 0 or 1, and some quantiles are not doubles:
    with a = b = 0.01, I_x at x = 1 - 2^-53 is about 0.65, so no x hits q = 0.8. The closest representable x is
    returned then, with a warning when its forward residual exceeds INVERSE_RESIDUAL_WARNING.
    """
    check_unit_interval(q, "q")
    q = float(q)
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0

    a, b = p.a, p.b
    x = float(special.betaincinv(a, b, q))
    if not (np.isfinite(x) and 0.0 <= x <= 1.0):
        x = 0.5

    lo, hi = 0.0, 1.0
    step_old = step = 1.0
    for _ in range(INVERSE_MAX_ITERATIONS):
        fx = float(special.betainc(a, b, x)) - q
        if fx == 0.0:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x

        d = float(_pdf_ab(x, a, b))
        newton_ok = (
            np.isfinite(d) and d > 0
            and ((x - hi) * d - fx) * ((x - lo) * d - fx) < 0
            and abs(2.0 * fx) <= abs(step_old * d)
        )
        step_old = step
        if newton_ok:
            step = fx / d
            x_new = x - step
        else:
            step = 0.5 * (hi - lo)
            x_new = lo + step

        if abs(x_new - x) <= 2 * np.spacing(x) or (hi - lo) <= 2 * np.spacing(hi):
            x = float(min(max(x_new, lo), hi))
            residual = abs(float(special.betainc(a, b, x)) - q)
            if residual > INVERSE_RESIDUAL_WARNING:
                (log or default_log).warn(
                    f"Quantile of I_x({a:g}, {b:g}) at q={q:g} is not representable, "
                    f"returning x={x!r} with residual {residual:.3g}.")
            return x
        x = x_new

    raise ConvergenceError(
        f"Inverse incomplete beta did not converge for q={q}, a={a}, b={b}.",
        iterations=INVERSE_MAX_ITERATIONS,
        residual=abs(float(special.betainc(a, b, x)) - q),
    )


def beta_pdf(x, mu, c):
    """
    Density of Beta(c*mu, c*(1-mu)) at x.
    """
    check_mean_shape(mu, c)
    check_unit_interval(x)
    mu = np.asarray(mu, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return _as_output(_pdf_ab(np.asarray(x, dtype=np.float64), c * mu, c * (1 - mu)))


def selection_moments(A, mu, c):
    """
    Upper tail mass p_plus = P(x > A) and upper tail first moment m_plus = E[x; x > A], vectorised.

    The upper tail is evaluated through the symmetry 1 - I_A(a, b) = I_{1-A}(b, a), and the first moment
    through the shifted-shape identity E[x; x > A] = mu * I_{1-A}(b, a+1).
    """
    A, mu, c = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (A, mu, c)))
    a = c * mu
    b = c * (1 - mu)
    upper = 1.0 - A
    p_plus = special.betainc(b, a, upper)
    m_plus = mu * special.betainc(b, a + 1, upper)
    point_mass = c > POINT_MASS_SHAPE
    if np.any(point_mass):
        mass = (mu > A).astype(np.float64)
        p_plus = np.where(point_mass, mass, p_plus)
        m_plus = np.where(point_mass, mu * mass, m_plus)
    return _as_output(p_plus), _as_output(m_plus)


def tail_moments(A, mu, c):
    """
    Lower tail mass p_minus = P(x <= A) and lower tail first moment m_minus = E[x; x <= A], vectorised.
    """
    A, mu, c = np.broadcast_arrays(*(np.asarray(v, dtype=np.float64) for v in (A, mu, c)))
    a = c * mu
    b = c * (1 - mu)
    p_minus = special.betainc(a, b, A)
    m_minus = mu * special.betainc(a + 1, b, A)
    point_mass = c > POINT_MASS_SHAPE
    if np.any(point_mass):
        mass = (mu <= A).astype(np.float64)
        p_minus = np.where(point_mass, mass, p_minus)
        m_minus = np.where(point_mass, mu * mass, m_minus)
    return _as_output(p_minus), _as_output(m_minus)


def selected_proportion(A, mu, c):
    """
    Proportion of the population with repayment probability above the threshold A.
    """
    check_unit_interval(A, "A")
    check_mean_shape(mu, c)
    p_plus, _ = selection_moments(A, mu, c)
    return p_plus


def selected_mean(A, mu, c):
    """
    Mean repayment probability of those above the threshold A.

    Raises DegenerateSelectionError when nobody is selected.
    """
    check_unit_interval(A, "A")
    check_mean_shape(mu, c)
    p_plus, m_plus = selection_moments(A, mu, c)
    p_plus = np.asarray(p_plus)
    if np.any(p_plus <= 0):
        raise DegenerateSelectionError(f"No one is selected at threshold {_show(A)}, selected mean is undefined.")
    lower = np.maximum(np.asarray(A, dtype=np.float64), np.asarray(mu, dtype=np.float64))
    return _as_output(np.clip(np.asarray(m_plus) / p_plus, lower, 1.0))


# -------------------------------------------------------------
# Identity suite
# -------------------------------------------------------------

SHAPE_GRID = (0.1, 0.5, 1.0, 2.0, 5.0, 20.0)
X_GRID = tuple(np.round(np.arange(1, 100) * 0.01, 2))


def _round_trip_check():
    worst = 0.0
    failures = 0
    for a in SHAPE_GRID:
        for b in SHAPE_GRID:
            p = BetaParams(a, b)
            for x in X_GRID:
                q = reg_inc_beta(x, p)
                x2 = inv_reg_inc_beta(q, p)
                # resolution of x is limited by the rounding of q where the cdf is flat
                conditioning = 16 * EPS / max(float(_pdf_ab(x, a, b)), 1e-300)
                error = abs(x2 - x)
                forward = abs(reg_inc_beta(x2, p) - q)
                if (error > max(1e-10, conditioning)) or forward > 1e-12:
                    failures += 1
                if error <= 1e-10:
                    worst = max(worst, error)
    return failures == 0, f"{failures} failures, worst well-conditioned error {worst:.2e}"


def _monotone_check():
    failures = 0
    xs = np.asarray(X_GRID)
    for a in SHAPE_GRID:
        for b in SHAPE_GRID:
            values = reg_inc_beta(xs, BetaParams(a, b))
            failures += int(np.sum(np.diff(values) < 0))
    return failures == 0, f"{failures} decreasing pairs"


def _truncated_moment_check():
    worst = 0.0
    for a in SHAPE_GRID:
        for b in SHAPE_GRID:
            mu, c = a / (a + b), a + b
            log_norm = special.betaln(a, b)
            for A in X_GRID[::7]:
                p_plus, m_plus = selection_moments(A, mu, c)
                if p_plus <= 0:
                    continue
                # x * x^(a-1) is smooth on [A, 1], the (1-x)^(b-1) factor goes into the quadrature weight
                oracle, _ = integrate.quad(
                    lambda x: math.exp(a * math.log(x) - log_norm), A, 1.0,
                    weight="alg", wvar=(0.0, b - 1.0), epsabs=1e-14, epsrel=1e-12,
                )
                worst = max(worst, abs(m_plus - oracle))
    return worst <= 1e-8, f"worst error {worst:.2e}"


def _normalization_check():
    worst = 0.0
    for mu in np.round(np.arange(1, 10) * 0.1, 1):
        for c in SHAPE_GRID:
            a, b = c * mu, c * (1 - mu)
            limit = math.exp(-special.betaln(a, b))
            # density divided by its algebraic end point factors, which quad takes as the weight
            total, _ = integrate.quad(
                lambda x: beta_pdf(x, mu, c) / (x ** (a - 1) * (1 - x) ** (b - 1)) if 0 < x < 1 else limit, 0.0, 1.0,
                weight="alg", wvar=(a - 1.0, b - 1.0), epsabs=1e-13, epsrel=1e-12,
            )
            worst = max(worst, abs(total - 1.0))
    return worst <= 1e-8, f"worst error {worst:.2e}"


def identity_suite():
    """
    Runs the special function identity checks.
    Returns a list of (name, passed, detail).
    """
    results = []
    for name, check in [
        ("inverse round trip", _round_trip_check),
        ("forward monotone", _monotone_check),
        ("truncated moment", _truncated_moment_check),
        ("density normalization", _normalization_check),
    ]:
        passed, detail = check()
        results.append((name, bool(passed), detail))
    return results
