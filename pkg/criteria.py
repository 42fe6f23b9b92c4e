"""
Variance blow-up criteria and their comparison.

A density of mass M > 8*pi and variance V2 blows up in finite time when
V2 < gamma_star(alpha, M) = (1/2 alpha) (g_1^{-1}(8 pi / M))^2. The older
thresholds gamma_cc and gamma_ks, the explicit ln^2 criterion gamma_log and
the asymptotic Gamma*_eps are evaluated here as well.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from errors import (
    CriterionNotSatisfiedError,
    InvalidInputError,
    SubcriticalMassError,
    require_finite,
    require_nonnegative,
    require_positive,
)
from moments import Moments
from specialfn import SQRT_HALF_PI, g_one_inv

logger = logging.getLogger(__name__)

CRITICAL_MASS = 8.0 * math.pi
BORDERLINE_REL = 1e-10


def require_supercritical(M: float) -> float:
    M = require_positive("M", M)
    if M <= CRITICAL_MASS:
        raise SubcriticalMassError(
            f"Mass M={M} is not supercritical (needs M > 8*pi = {CRITICAL_MASS:.12g})",
            detail={"M": M, "critical_mass": CRITICAL_MASS},
        )
    return M


def require_cc_constant(C: float) -> float:
    C = require_finite("cc_constant", C)
    if C < 1.0:
        raise InvalidInputError(f"cc_constant must be >= 1, got {C}")
    return C


def critical_radius(M: float) -> float:
    """g_1^{-1}(8 pi / M)"""
    return g_one_inv(CRITICAL_MASS / require_supercritical(M))


def gamma_star(alpha: float, M: float) -> float:
    alpha = require_positive("alpha", alpha)
    r = critical_radius(M)
    return r * r / (2.0 * alpha)


def gamma_cc(alpha: float, M: float, C: float = 1.0) -> float:
    alpha = require_positive("alpha", alpha)
    M = require_supercritical(M)
    C = require_cc_constant(C)
    return (M - CRITICAL_MASS) ** 2 / (4.0 * alpha * C * C * M * M)


def gamma_ks(alpha: float, M: float) -> float:
    alpha = require_positive("alpha", alpha)
    M = require_supercritical(M)
    ratio = (M - CRITICAL_MASS) / (M + CRITICAL_MASS)
    return ratio * math.log(2.0 * M / (M + CRITICAL_MASS)) ** 2 / (8.0 * alpha)


def gamma_log(alpha: float, M: float) -> float:
    alpha = require_positive("alpha", alpha)
    M = require_supercritical(M)
    return math.log(M / CRITICAL_MASS) ** 2 / (2.0 * alpha)


def gamma_eps(alpha: float, M: float, eps: float) -> Optional[float]:
    """Gamma*_eps, or None while c_eps M / 8 pi <= e"""
    alpha = require_positive("alpha", alpha)
    M = require_positive("M", M)
    eps = require_positive("eps", eps)
    if eps >= 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    x = (1.0 - eps) * SQRT_HALF_PI * M / CRITICAL_MASS
    if x <= math.e:
        return None
    return math.log(x * math.sqrt(math.log(x))) ** 2 / (2.0 * alpha)


def m_eps_scan(eps: float, alpha: float = 1.0, m_max: float = 1e8, points: int = 60) -> Optional[float]:
    """Smallest scanned mass above which Gamma*_eps <= gamma_star on the whole scan"""
    eps = require_positive("eps", eps)
    m_min = CRITICAL_MASS * math.e / ((1.0 - eps) * SQRT_HALF_PI) * (1.0 + 1e-9)
    if m_max <= m_min:
        raise InvalidInputError(f"m_max must exceed {m_min}")
    masses = np.geomspace(m_min, m_max, points)
    holds = [gamma_eps(alpha, m, eps) <= gamma_star(alpha, m) for m in masses]
    threshold = None
    for m, ok in zip(reversed(masses), reversed(holds)):
        if not ok:
            break
        threshold = float(m)
    return threshold


def h1(s: float, C: float = 1.0) -> float:
    """(2 pi / C^2) (s - 1)^2 / s, so that mu_cc = h1(M/8pi)/alpha"""
    C = require_cc_constant(C)
    return 2.0 * math.pi / (C * C) * (s - 1.0) ** 2 / s


def h2(s: float) -> float:
    """pi s (s-1)/(s+1) ln^2(2s/(s+1)), so that mu_ks = h2(M/8pi)/alpha"""
    return math.pi * s * (s - 1.0) / (s + 1.0) * math.log(2.0 * s / (s + 1.0)) ** 2


def mu_cc(alpha: float, M: float, C: float = 1.0) -> float:
    """Second-moment threshold of the centre-of-mass free prior criterion"""
    return M * gamma_cc(alpha, M, C)


def mu_ks(alpha: float, M: float) -> float:
    return M * gamma_ks(alpha, M)


def second_moment_threshold(alpha: float, M: float, center: Sequence[float] = (0.0, 0.0)) -> float:
    """Blow-up holds when I0 < M gamma_star + M |B0|^2"""
    return M * (gamma_star(alpha, M) + center[0] ** 2 + center[1] ** 2)


def criterion_holds(alpha: float, M: float, V2: float) -> bool:
    V2 = require_nonnegative("V2", V2)
    return V2 < gamma_star(alpha, M)


def alpha_blowup_interval(n0_moments: Moments) -> Tuple[float, float]:
    """(0, alpha_max): every alpha inside satisfies V2 < gamma_star(alpha, M)"""
    V2 = n0_moments.variance
    if V2 <= 0:
        raise InvalidInputError(f"alpha interval needs V2 > 0, got {V2}")
    r = critical_radius(n0_moments.mass)
    return 0.0, r * r / (2.0 * V2)


def beta_constants(beta: float) -> Tuple[float, float]:
    """(L_beta, K_beta) with L = beta^beta e^-beta, K = L/(1-beta) 4^(beta-1) Gamma(beta)"""
    beta = require_positive("beta", beta)
    if beta >= 0.5:
        raise InvalidInputError(f"beta must lie in (0, 1/2), got {beta}")
    L = beta ** beta * math.exp(-beta)
    K = L / (1.0 - beta) * 4.0 ** (beta - 1.0) * float(special.gamma(beta))
    return L, K


def ratio_lower_bound(M: float, beta: float, C: float = 1.0) -> float:
    """C_beta (g_1^{-1}(8pi/M))^{-(2 - 4 beta)} with C_beta = 2 C^2 / K_beta^2"""
    C = require_cc_constant(C)
    _, K = beta_constants(beta)
    r = critical_radius(M)
    return 2.0 * C * C / (K * K) * r ** (-(2.0 - 4.0 * beta))


def gamma_ratio_exact(M: float, C: float = 1.0) -> float:
    """gamma_star / gamma_cc = 2 C^2 [r / (1 - 8pi/M)]^2, independent of alpha"""
    C = require_cc_constant(C)
    r = critical_radius(M)
    return 2.0 * C * C * (r / (1.0 - CRITICAL_MASS / M)) ** 2


def compare_gammas(alpha: float, M: float, C: float = 1.0) -> Dict[str, object]:
    """Tabulate the thresholds and their ratios, with asymptotic references"""
    g_star = gamma_star(alpha, M)
    g_cc = gamma_cc(alpha, M, C)
    g_ks = gamma_ks(alpha, M)
    g_log = gamma_log(alpha, M)
    ordering = sorted(
        [("gamma_star", g_star), ("gamma_cc", g_cc), ("gamma_ks", g_ks), ("gamma_log", g_log)],
        key=lambda item: -item[1],
    )
    excess = M / CRITICAL_MASS - 1.0
    return {
        "alpha": alpha,
        "M": M,
        "cc_constant": C,
        "gammas": {"gamma_star": g_star, "gamma_cc": g_cc, "gamma_ks": g_ks, "gamma_log": g_log},
        "ratios": {
            "star_over_cc": g_star / g_cc,
            "cc_over_ks": g_cc / g_ks,
            "star_over_ks": g_star / g_ks,
            "log_over_star": g_log / g_star,
        },
        "ordering": [name for name, _ in ordering],
        "regime": {
            "near_critical": excess < 1e-2,
            "large_mass": excess > 1e3,
        },
        "asymptotes": {
            "gamma_cc_large_mass": 1.0 / (4.0 * alpha * C * C),
            "gamma_ks_large_mass": math.log(2.0) ** 2 / (8.0 * alpha),
            "gamma_star_large_mass": math.log(M) ** 2 / (2.0 * alpha),
        },
    }


@dataclass
class CriterionReport:
    M: float
    alpha: float
    cc_constant: float
    gamma_star: float
    gamma_cc: float
    gamma_ks: float
    gamma_log: float
    gamma_eps: Optional[float] = None
    gamma_eps_valid: Optional[bool] = None
    eps: Optional[float] = None
    variance: Optional[float] = None
    second_moment: Optional[float] = None
    center: Optional[Tuple[float, float]] = None
    satisfied: Dict[str, bool] = field(default_factory=dict)
    borderline: bool = False
    alpha_max: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_criteria(alpha: float, M: float, variance: Optional[float] = None, C: float = 1.0,
                      eps: Optional[float] = None, second_moment: Optional[float] = None,
                      center: Optional[Sequence[float]] = None) -> CriterionReport:
    """Evaluate every threshold and, given V2, which criteria it satisfies"""
    alpha = require_positive("alpha", alpha)
    M = require_supercritical(M)
    C = require_cc_constant(C)
    report = CriterionReport(
        M=M, alpha=alpha, cc_constant=C,
        gamma_star=gamma_star(alpha, M),
        gamma_cc=gamma_cc(alpha, M, C),
        gamma_ks=gamma_ks(alpha, M),
        gamma_log=gamma_log(alpha, M),
    )
    if eps is not None:
        report.eps = eps
        report.gamma_eps = gamma_eps(alpha, M, eps)
        if report.gamma_eps is not None:
            report.gamma_eps_valid = report.gamma_eps <= report.gamma_star
        else:
            report.notes.append("gamma_eps undefined: c_eps M / 8pi <= e")

    if center is not None:
        report.center = (require_finite("B0.x", center[0]), require_finite("B0.y", center[1]))
    if second_moment is not None:
        report.second_moment = require_nonnegative("I0", second_moment)
        if variance is None and report.center is not None:
            variance = report.second_moment / M - (report.center[0] ** 2 + report.center[1] ** 2)

    if variance is not None:
        V2 = require_nonnegative("V2", variance)
        report.variance = V2
        report.satisfied = {
            "gamma_star": V2 < report.gamma_star,
            "gamma_cc": V2 < report.gamma_cc,
            "gamma_ks": V2 < report.gamma_ks,
            "gamma_log": V2 < report.gamma_log,
        }
        if report.gamma_eps is not None:
            report.satisfied["gamma_eps"] = V2 < report.gamma_eps
        if report.second_moment is not None:
            report.satisfied["mu_cc"] = report.second_moment < mu_cc(alpha, M, C)
            report.satisfied["mu_ks"] = report.second_moment < mu_ks(alpha, M)
        report.borderline = abs(V2 - report.gamma_star) <= BORDERLINE_REL * report.gamma_star
        if report.borderline:
            report.notes.append("V2 is within 1e-10 of gamma_star; the borderline case is undecided")
        if V2 > 0:
            report.alpha_max = critical_radius(M) ** 2 / (2.0 * V2)
    logger.debug(f"Criteria for M={M}, alpha={alpha}: {report.satisfied}")
    return report


def require_criterion(alpha: float, M: float, V2: float) -> float:
    """Return gamma_star, raising when V2 >= gamma_star"""
    threshold = gamma_star(alpha, M)
    if not V2 < threshold:
        raise CriterionNotSatisfiedError(
            f"Variance V2={V2} does not satisfy V2 < gamma_star={threshold:.12g}",
            detail={"alpha": alpha, "M": M, "V2": V2, "gamma_star": threshold},
        )
    return threshold


