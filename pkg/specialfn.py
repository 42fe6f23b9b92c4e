"""
Special functions behind the Bessel-kernel blow-up criteria.

g_1(r) = int_0^inf exp(-r^2/(4s)) exp(-s) ds is evaluated by adaptive
quadrature (it equals r*K_1(r)); g_alpha(r) = g_1(sqrt(alpha) r). The module
also provides the inverse of g_1, the Bessel kernel B_alpha and its gradient,
the auxiliary family v_c(r) = c sqrt(r) exp(-r) with its inverse bounds, and
the real dilogarithm on [0, 1).
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special

from config import DEFAULT_TOLERANCES
from errors import (
    BracketError,
    InvalidInputError,
    OutOfRangeError,
    ValidityThresholdError,
    require_nonnegative,
    require_positive,
)

logger = logging.getLogger(__name__)

UNDERFLOW_RADIUS = 700.0
OVERFLOW_GUARD = 700.0
SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
# Width of the sandwich ln(c/rho sqrt(ln(c/rho))) <= v_c^{-1}(rho) <= ... + gap
V_C_INVERSE_GAP = 0.5 * math.log(2.0 * math.e / (2.0 * math.e - 1.0))
QUAD_LIMIT = 200


@dataclass(frozen=True)
class GEval:
    """A certified evaluation of g_alpha at radius r"""
    r: float
    alpha: float
    value: float
    abs_error_estimate: float
    underflow: bool = False


@dataclass(frozen=True)
class InverseBounds:
    """Two-sided bound on g_1^{-1}(rho) valid for small rho"""
    rho: float
    eps: float
    lower: float
    upper: float


def _quad_segments(func, points: List[float], rel_tol: float) -> Tuple[float, float, int]:
    """Integrate func over [0, inf) split at the sorted breakpoints.

    Returns (value, abs_error, warning_count).
    """
    edges = [0.0] + sorted(p for p in set(points) if p > 0.0)
    total = 0.0
    error = 0.0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            value, err = integrate.quad(func, a, b, epsabs=0.0, epsrel=rel_tol, limit=QUAD_LIMIT)
            total += value
            error += err
        value, err = integrate.quad(func, edges[-1], np.inf, epsabs=0.0, epsrel=rel_tol, limit=QUAD_LIMIT)
        total += value
        error += err
    flagged = [w for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    for w in flagged:
        logger.warning(f"Quadrature accuracy reduced: {w.message}")
    return total, error, len(flagged)


def _g_one_scaled(r: float, rel_tol: float) -> Tuple[float, float]:
    """exp(r) * g_1(r), integrated with the peak at s = r/2 normalised to 1"""
    r2 = r * r

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0
        return math.exp(-r2 / (4.0 * s) - s + r)

    # Gaussian width of the integrand around its maximum
    width = math.sqrt(r) / 2.0
    points = [r2 / 4.0, r / 2.0, 1.0]
    points += [r / 2.0 + k * width for k in (-8.0, 8.0)]
    value, error, _ = _quad_segments(integrand, points, rel_tol)
    return value, error


def g_one_eval(r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> GEval:
    """Evaluate g_1(r) and report the quadrature error estimate"""
    r = require_nonnegative("r", r)
    rel_tol = require_positive("rel_tol", rel_tol)
    if r == 0.0:
        return GEval(r=0.0, alpha=1.0, value=1.0, abs_error_estimate=0.0)
    if r > UNDERFLOW_RADIUS:
        logger.debug(f"g_1({r}) below double underflow, returning 0")
        return GEval(r=r, alpha=1.0, value=0.0, abs_error_estimate=0.0, underflow=True)
    scaled, scaled_err = _g_one_scaled(r, rel_tol)
    damp = math.exp(-r)
    return GEval(r=r, alpha=1.0, value=min(1.0, scaled * damp), abs_error_estimate=scaled_err * damp)


def g_one(r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> float:
    """g_1(r) by adaptive quadrature; equals r*K_1(r)"""
    return g_one_eval(r, rel_tol).value


def g_alpha_eval(alpha: float, r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> GEval:
    alpha = require_positive("alpha", alpha)
    r = require_nonnegative("r", r)
    inner = g_one_eval(math.sqrt(alpha) * r, rel_tol)
    return GEval(r=r, alpha=alpha, value=inner.value,
                 abs_error_estimate=inner.abs_error_estimate, underflow=inner.underflow)


def g_alpha(alpha: float, r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> float:
    """g_alpha(r) = g_1(sqrt(alpha) r)"""
    return g_alpha_eval(alpha, r, rel_tol).value


def g_alpha_quadrature(alpha: float, r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> float:
    """Direct quadrature of int_0^inf exp(-alpha r^2/(4s)) exp(-s) ds.

    Independent of the scaling identity; used to cross-check g_alpha.
    """
    alpha = require_positive("alpha", alpha)
    r = require_nonnegative("r", r)
    q = alpha * r * r / 4.0

    def integrand(s: float) -> float:
        if s <= 0.0:
            return 0.0 if q > 0.0 else 1.0
        return math.exp(-q / s - s)

    value, _, _ = _quad_segments(integrand, [q, math.sqrt(q), 1.0], rel_tol)
    return value


def g_one_vec(r) -> np.ndarray:
    """Vectorised g_1 through r*K_1(r), with g_1(0) = 1"""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InvalidInputError("g_one_vec needs finite nonnegative radii")
    out = np.ones_like(r)
    positive = r > 0
    out[positive] = r[positive] * special.k1(r[positive])
    return out


def _inverse_bracket(rho: float) -> float:
    """ln(1/rho) + ln(ln(e + 1/rho)) + 2 in log space; 1/rho overflows for subnormal rho"""
    log_inv = -math.log(rho)
    return log_inv + math.log(log_inv + math.log1p(math.e * rho)) + 2.0


def g_one_inv(rho: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol,
              abs_tol: float = DEFAULT_TOLERANCES.inverse_abs_tol) -> float:
    """Solve g_1(r) = rho for r >= 0, 0 < rho <= 1"""
    rho = require_positive("rho", rho)
    if rho > 1.0:
        raise InvalidInputError(f"rho must lie in (0, 1], got {rho}")
    if rho == 1.0:
        return 0.0

    upper = min(_inverse_bracket(rho), OVERFLOW_GUARD)
    while g_one(upper, rel_tol) >= rho and upper < OVERFLOW_GUARD:
        upper = min(2.0 * upper, OVERFLOW_GUARD)
    if g_one(upper, rel_tol) >= rho:
        raise OutOfRangeError(f"g_1^-1({rho}) exceeds the radius guard {OVERFLOW_GUARD}",
                              detail={"rho": rho, "bracket": upper})

    root = optimize.brentq(lambda r: g_one(r, rel_tol) - rho, 0.0, upper, xtol=abs_tol)
    logger.debug(f"g_1^-1({rho}) = {root} on bracket [0, {upper}]")
    return root


def g_alpha_inv(alpha: float, y: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> float:
    """g_alpha^{-1}(y) = g_1^{-1}(y) / sqrt(alpha)"""
    alpha = require_positive("alpha", alpha)
    return g_one_inv(y, rel_tol) / math.sqrt(alpha)


def bessel_kernel(alpha: float, z_norm: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> float:
    """B_alpha(z) = (1/4pi) int_0^inf t^{-1} exp(-|z|^2/4t - alpha t) dt.

    With u = |z|^2/(4t) the integral becomes int_0^inf u^{-1} exp(-u - a/u) du,
    a = alpha |z|^2 / 4, whose integrand peaks at u = (sqrt(1 + 4a) - 1)/2.
    """
    alpha = require_positive("alpha", alpha)
    z_norm = require_nonnegative("z_norm", z_norm)
    if z_norm == 0.0:
        raise InvalidInputError("Bessel kernel diverges at z = 0")
    a = alpha * z_norm * z_norm / 4.0
    peak = (math.sqrt(1.0 + 4.0 * a) - 1.0) / 2.0

    def integrand(u: float) -> float:
        if u <= 0.0:
            return 0.0
        return math.exp(-u - a / u) / u

    value, _, _ = _quad_segments(integrand, [a, peak, 1.0, math.sqrt(a)], rel_tol)
    return value / (4.0 * math.pi)


def grad_bessel_kernel(alpha: float, z, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> np.ndarray:
    """grad B_alpha(z) = -z / (2 pi |z|^2) * g_alpha(|z|)"""
    z = np.asarray(z, dtype=float).reshape(2)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError(f"z must be finite, got {z}")
    norm = float(np.hypot(z[0], z[1]))
    if norm == 0.0:
        raise InvalidInputError("Bessel kernel gradient is singular at z = 0")
    return -z / (2.0 * math.pi * norm * norm) * g_alpha(alpha, norm, rel_tol)


def v_c(c: float, r: float) -> float:
    """v_c(r) = c sqrt(r) exp(-r)"""
    c = require_positive("c", c)
    r = require_nonnegative("r", r)
    return c * math.sqrt(r) * math.exp(-r)


def v_c_inv(c: float, rho: float) -> float:
    """Inverse of v_c restricted to (1/2, inf), where it decreases"""
    c = require_positive("c", c)
    rho = require_positive("rho", rho)
    top = v_c(c, 0.5)
    if rho >= top:
        raise InvalidInputError(f"rho must be below v_c(1/2) = {top}, got {rho}")
    upper = max(1.0, math.log(c) - math.log(rho) + 1.0)
    while v_c(c, upper) >= rho:
        upper *= 2.0
        if upper > OVERFLOW_GUARD:
            raise BracketError(f"No bracket for v_c^-1({rho}) below {OVERFLOW_GUARD}")
    return optimize.brentq(lambda r: v_c(c, r) - rho, 0.5, upper, xtol=1e-14)


def _log_sqrt_log(c: float, rho: float) -> float:
    """ln((c/rho) sqrt(ln(c/rho))) without forming c/rho"""
    log_ratio = math.log(c) - math.log(rho)
    return log_ratio + 0.5 * math.log(log_ratio)


def v_c_inv_bounds(c: float, rho: float) -> Tuple[float, float]:
    """Sandwich for v_c^{-1}(rho), valid for rho < v_c(1) = c/e"""
    c = require_positive("c", c)
    rho = require_positive("rho", rho)
    if rho >= c / math.e:
        raise ValidityThresholdError(f"v_c^-1 bounds need rho < c/e = {c / math.e}, got {rho}",
                                     detail={"c": c, "rho": rho})
    lower = _log_sqrt_log(c, rho)
    return lower, lower + V_C_INVERSE_GAP


def g_inv_bounds(eps: float, rho: float, threshold: float = DEFAULT_TOLERANCES.validity_threshold) -> InverseBounds:
    """Two-sided bound on g_1^{-1}(rho) for small rho.

    lower = v_{c-}^{-1} lower bound, upper = v_{c+}^{-1} upper bound with
    c- = (1 - eps) sqrt(pi/2) and c+ = (1 + eps) sqrt(pi/2). The threshold
    stands in for the non-constructive rho_eps and is tightened to c-/e.
    """
    eps = require_positive("eps", eps)
    if eps >= 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    rho = require_positive("rho", rho)
    threshold = require_positive("threshold", threshold)
    c_minus = (1.0 - eps) * SQRT_HALF_PI
    c_plus = (1.0 + eps) * SQRT_HALF_PI
    effective = min(threshold, c_minus / math.e)
    if rho >= effective:
        raise ValidityThresholdError(
            f"g_1^-1 bounds requested at rho={rho}, above validity threshold {effective}",
            detail={"eps": eps, "rho": rho, "threshold": effective},
        )
    lower, _ = v_c_inv_bounds(c_minus, rho)
    _, upper = v_c_inv_bounds(c_plus, rho)
    return InverseBounds(rho=rho, eps=eps, lower=lower, upper=upper)


def asymptotic_inverse(rho: float, c: float = SQRT_HALF_PI) -> float:
    """w(rho) = ln((c/rho) sqrt(ln(c/rho))), an asymptotic inverse of g_1"""
    rho = require_positive("rho", rho)
    c = require_positive("c", c)
    if rho >= c:
        raise ValidityThresholdError(f"asymptotic inverse needs rho < {c}, got {rho}")
    return _log_sqrt_log(c, rho)


def _dilog_series(x: float) -> float:
    total = 0.0
    power = x
    n = 1
    while True:
        term = power / (n * n)
        total += term
        if term <= 1e-17 * total:
            return total
        n += 1
        power *= x


def dilog(x: float) -> float:
    """Real dilogarithm Li_2(x) = sum x^n / n^2 on [0, 1)"""
    x = require_nonnegative("x", x)
    if x >= 1.0:
        raise InvalidInputError(f"dilog is evaluated on [0, 1), got {x}")
    if x == 0.0:
        return 0.0
    if x <= 0.5:
        return _dilog_series(x)
    # reflection keeps the series argument in (0, 1/2)
    return math.pi ** 2 / 6.0 - math.log(x) * math.log1p(-x) - _dilog_series(1.0 - x)


def describe(alpha: float, r: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol) -> dict:
    """Summary used by the specialfn-eval command"""
    evaluation = g_alpha_eval(alpha, r, rel_tol)
    summary = {
        "alpha": alpha,
        "r": r,
        "g_alpha": evaluation.value,
        "abs_error_estimate": evaluation.abs_error_estimate,
        "underflow": evaluation.underflow,
        "lower_bound_exp": math.exp(-math.sqrt(alpha) * r),
    }
    if r > 0:
        summary["bessel_kernel"] = bessel_kernel(alpha, r, rel_tol)
        summary["grad_bessel_kernel_x"] = float(grad_bessel_kernel(alpha, [r, 0.0], rel_tol)[0])
    if 0.0 < evaluation.value <= 1.0:
        summary["g_alpha_inv_of_value"] = g_alpha_inv(alpha, evaluation.value, rel_tol)
    return summary


def inverse_summary(rho: float, eps: Optional[float] = None,
                    threshold: float = DEFAULT_TOLERANCES.validity_threshold) -> dict:
    summary = {"rho": rho, "g_one_inv": g_one_inv(rho), "log_lower_bound": -math.log(rho)}
    if eps is not None:
        bounds = g_inv_bounds(eps, rho, threshold)
        summary.update({"eps": eps, "lower": bounds.lower, "upper": bounds.upper})
    return summary
