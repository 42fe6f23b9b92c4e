"""
Engine for the differential inequality V'(t) <= f(V(t)).

For a strictly increasing rate f with f(0+) < 0 < f(+inf) and an initial
value V0 below the zero lambda* of f, any V obeying the inequality lives at
most until T*_c = Theta(0), Theta(x) = int_x^V0 ds / (-f(s)), and satisfies
V(t) <= Theta^{-1}(t) <= V0 + t f(V0). Theta^{-1} is also the exact solution of
V' = f(V), V(0) = V0.
"""
import logging
import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from cachetools import LRUCache
from scipy import integrate, optimize

from config import DEFAULT_TOLERANCES
from errors import (
    BracketError,
    HypothesisViolationError,
    InvalidInputError,
    NumericalError,
    require_nonnegative,
    require_positive,
)

logger = logging.getLogger(__name__)

MONOTONE_CHECK_POINTS = 64
BRACKET_EXPANSIONS = 200
V0_MARGIN_REL = 1e-12


class MonotoneRate:
    """Black-box rate f: (0, inf) -> R, validated for strict increase.

    Evaluations are memoised per instance; quadrature and root finding
    revisit the same abscissae often.
    """

    def __init__(self, func: Callable[[float], float], f0_plus: Optional[float] = None,
                 f_inf: Optional[float] = None, name: str = "rate",
                 check_range: Tuple[float, float] = (1e-6, 1e6), scale: float = 1.0,
                 strict: bool = True, cache_size: int = 8192):
        self._func = func
        self.name = name
        self.f0_plus = f0_plus
        self.f_inf = f_inf
        self.scale = scale
        self.strict = strict
        self._cache = LRUCache(maxsize=cache_size)
        self.lock = threading.Lock()

        if f0_plus is not None and f_inf is not None and strict and not f0_plus < 0.0 < f_inf:
            raise InvalidInputError(f"{name}: need f(0+) < 0 < f(inf), got {f0_plus} and {f_inf}")
        if strict:
            self._check_monotone(check_range)

    def _check_monotone(self, check_range: Tuple[float, float]):
        lo, hi = check_range
        grid = np.geomspace(lo, hi, MONOTONE_CHECK_POINTS)
        values = np.array([self(x) for x in grid])
        if not np.all(np.isfinite(values)):
            raise InvalidInputError(f"{self.name}: rate is not finite on [{lo:g}, {hi:g}]")
        steps = np.diff(values)
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0))
            raise InvalidInputError(
                f"{self.name}: rate is not strictly increasing near lambda={grid[bad]:.6g}",
                detail={"lambda": float(grid[bad]), "f": float(values[bad]), "f_next": float(values[bad + 1])},
            )

    def __call__(self, lam: float) -> float:
        key = float(lam)
        with self.lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        value = float(self._func(key))
        with self.lock:
            self._cache[key] = value
        return value

    def clear_cache(self):
        with self.lock:
            self._cache.clear()

    def __repr__(self) -> str:
        return f"MonotoneRate({self.name})"


def linear_rate(slope: float, intercept: float) -> MonotoneRate:
    """f(lambda) = slope * lambda + intercept"""
    slope = require_positive("slope", slope)
    if not intercept < 0:
        raise InvalidInputError(f"linear rate needs a negative intercept, got {intercept}")
    return MonotoneRate(lambda x: slope * x + intercept, f0_plus=intercept, f_inf=math.inf,
                        name=f"linear({slope:g}, {intercept:g})", scale=-intercept / slope)


def constant_rate(c: float) -> MonotoneRate:
    """f = -c; not strictly increasing, has no zero, used for closed-form checks"""
    c = require_positive("c", c)
    return MonotoneRate(lambda x: -c, f0_plus=-c, f_inf=-c, name=f"constant(-{c:g})", strict=False)


def log_rate() -> MonotoneRate:
    """f(lambda) = ln(lambda)"""
    return MonotoneRate(lambda x: math.log(x) if x > 0 else -math.inf, f0_plus=-math.inf,
                        f_inf=math.inf, name="log")


def lambda_star(rate: MonotoneRate, abs_tol: float = DEFAULT_TOLERANCES.lambda_abs_tol) -> float:
    """Unique zero of the rate, by bracket expansion and Brent's method"""
    if rate.f_inf is not None and rate.f_inf <= 0:
        raise BracketError(f"{rate.name} has no zero: f(inf) = {rate.f_inf}")
    lo = hi = rate.scale
    for _ in range(BRACKET_EXPANSIONS):
        if rate(lo) < 0:
            break
        lo /= 2.0
    else:
        raise BracketError(f"{rate.name}: no negative value found down to lambda={lo:g}")
    for _ in range(BRACKET_EXPANSIONS):
        if rate(hi) > 0:
            break
        hi *= 2.0
    else:
        raise BracketError(f"{rate.name}: no positive value found up to lambda={hi:g}")
    if rate(lo) >= 0:
        raise BracketError(f"{rate.name}: bracket lost its sign change")
    root = optimize.brentq(rate, lo, hi, xtol=abs_tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    logger.debug(f"lambda* of {rate.name} = {root} from bracket [{lo:g}, {hi:g}]")
    return root


@dataclass
class InequalityProblem:
    """V' <= f(V) with V(0) = V0 < lambda*"""
    rate: MonotoneRate
    V0: float
    lambda_star: Optional[float] = None
    near_boundary: bool = False
    _theta_zero: Optional[float] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.V0 = require_positive("V0", self.V0)
        f_v0 = self.rate(self.V0)
        if not f_v0 < 0:
            raise HypothesisViolationError(
                f"f(V0) = {f_v0} >= 0 for V0 = {self.V0}; the initial value must lie below lambda*",
                detail={"V0": self.V0, "f_V0": f_v0},
            )
        if self.rate.strict:
            if self.lambda_star is None:
                self.lambda_star = lambda_star(self.rate)
            gap = (self.lambda_star - self.V0) / self.lambda_star
            if gap <= V0_MARGIN_REL:
                raise HypothesisViolationError(
                    f"V0 = {self.V0} is within {V0_MARGIN_REL:g} of lambda* = {self.lambda_star}",
                    detail={"V0": self.V0, "lambda_star": self.lambda_star},
                )
            self.near_boundary = gap <= DEFAULT_TOLERANCES.near_boundary_rel
            if self.near_boundary:
                logger.warning(f"V0 is within {gap:.2e} of lambda*; Theta is near-singular and accuracy is reduced")

    def boundary_gap(self) -> Optional[float]:
        if self.lambda_star is None:
            return None
        return self.lambda_star - self.V0


def _theta_breakpoints(problem: InequalityProblem, x: float) -> Optional[List[float]]:
    """Nodes clustered at V0 when V0 sits close to lambda*"""
    gap = problem.boundary_gap()
    if gap is None or gap > 1e-3 * problem.V0:
        return None
    points = []
    step = gap
    while step < problem.V0 - x:
        points.append(problem.V0 - step)
        step *= 10.0
    return points or None


def theta(problem: InequalityProblem, x: float, rel_tol: float = DEFAULT_TOLERANCES.theta_rel_tol) -> float:
    """Theta(x) = int_x^V0 ds / (-f(s))"""
    x = require_nonnegative("x", x)
    if x > problem.V0:
        raise InvalidInputError(f"theta needs 0 <= x <= V0 = {problem.V0}, got {x}")
    if x == problem.V0:
        return 0.0
    rate = problem.rate

    def integrand(s: float) -> float:
        value = rate(s)
        if value == -math.inf:
            return 0.0
        return -1.0 / value

    points = _theta_breakpoints(problem, x)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, _ = integrate.quad(integrand, x, problem.V0, epsabs=0.0, epsrel=rel_tol,
                                  limit=200, points=points)
    for w in caught:
        logger.warning(f"Theta quadrature: {w.message}")
    return value


def blowup_time_sharp(problem: InequalityProblem) -> float:
    """T*_c = Theta(0)"""
    if problem._theta_zero is None:
        problem._theta_zero = theta(problem, 0.0)
    return problem._theta_zero


def blowup_time_simple(problem: InequalityProblem) -> float:
    """T**_c = V0 / (-f(V0))"""
    f_v0 = problem.rate(problem.V0)
    if f_v0 >= 0:
        raise HypothesisViolationError(f"f(V0) = {f_v0} >= 0")
    return problem.V0 / (-f_v0)


def _require_time(problem: InequalityProblem, t: float) -> float:
    t = require_nonnegative("t", t)
    horizon = blowup_time_sharp(problem)
    # Theta(0) carries the quadrature error, so the last theta_rel_tol of it is excluded
    if t >= horizon * (1.0 - DEFAULT_TOLERANCES.theta_rel_tol):
        raise InvalidInputError(f"t = {t} lies outside [0, Theta(0) = {horizon})",
                                detail={"t": t, "theta_zero": horizon})
    return t


def envelope(problem: InequalityProblem, t: float, abs_tol: float = DEFAULT_TOLERANCES.envelope_abs_tol) -> float:
    """Theta^{-1}(t), the sharp upper envelope of V(t)"""
    t = _require_time(problem, t)
    if t == 0.0:
        return problem.V0
    return optimize.brentq(lambda x: theta(problem, x) - t, 0.0, problem.V0, xtol=abs_tol)


@dataclass(frozen=True)
class WeakEnvelope:
    value: float
    derivative_bound: Optional[float]
    slope: float


def envelope_weak(problem: InequalityProblem, t: float) -> WeakEnvelope:
    """V0 + t f(V0) and the derivative bound f(V0 + t f(V0)) while positive"""
    t = require_nonnegative("t", t)
    slope = problem.rate(problem.V0)
    value = problem.V0 + t * slope
    derivative = problem.rate(value) if value > 0 else None
    return WeakEnvelope(value=value, derivative_bound=derivative, slope=slope)


def exact_solution(rate: MonotoneRate, V0: float, t: float) -> float:
    """Saturating solution of V' = f(V), V(0) = V0, i.e. Theta_{V0}^{-1}(t)"""
    return envelope(InequalityProblem(rate=rate, V0=V0), t)


def envelope_curve(problem: InequalityProblem, times: Sequence[float], rtol: float = 1e-10,
                   atol: float = 1e-14) -> np.ndarray:
    """Theta^{-1} on many times at once by integrating V' = f(V) with dense output.

    Times at or beyond Theta(0) map to 0.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise InvalidInputError("envelope_curve needs nonnegative times")
    horizon = blowup_time_sharp(problem)
    inside = times < horizon
    out = np.zeros_like(times)
    if not np.any(inside):
        return out
    t_stop = float(np.max(times[inside]))
    if t_stop == 0.0:
        out[inside] = problem.V0
        return out
    rate = problem.rate

    def rhs(_t, v):
        return [rate(max(v[0], 1e-300))]

    def hits_zero(_t, v):
        return v[0]
    hits_zero.terminal = True

    sol = integrate.solve_ivp(rhs, (0.0, t_stop), [problem.V0], method="RK45", rtol=rtol,
                              atol=atol, dense_output=True, events=hits_zero)
    if sol.status < 0:
        raise NumericalError(f"envelope integration failed: {sol.message}")
    reached = sol.t[-1]
    mask = inside & (times <= reached)
    out[mask] = np.clip(sol.sol(times[mask])[0], 0.0, problem.V0)
    return out


def envelope_table(problem: InequalityProblem, points: int = 21) -> List[dict]:
    """Rows (t, sharp, weak, weak derivative) on [0, Theta(0)) for CSV output"""
    horizon = blowup_time_sharp(problem)
    times = np.linspace(0.0, horizon, points, endpoint=False)
    sharp = envelope_curve(problem, times)
    rows = []
    for t, v in zip(times, sharp):
        weak = envelope_weak(problem, float(t))
        rows.append({
            "t": float(t),
            "envelope": float(v),
            "envelope_weak": weak.value,
            "derivative_bound_weak": weak.derivative_bound,
        })
    return rows
