"""
Time bounds for the Patlak-Keller-Segel system with consumption alpha > 0.

The variance obeys V' <= f(V) with f(lambda) = 4 - (M / 2 pi) g_1(sqrt(2 alpha lambda)),
so the generic engine in ode_bound yields T* <= t_star_alpha. The closed forms
built on the cruder estimate g_1(r) >= exp(-r) (series, dilogarithm, K and L),
the classical alpha = 0 bounds, the roots Y0, Y1, Y2 and the scaling
corollaries live here as well.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from scipy import integrate, optimize

from config import DEFAULT_TOLERANCES, Tolerances
from criteria import (
    CRITICAL_MASS,
    gamma_log,
    gamma_star,
    require_cc_constant,
    require_criterion,
    require_supercritical,
)
from errors import (
    ConvergenceError,
    CriterionNotSatisfiedError,
    InvalidInputError,
    NotApplicableError,
    NumericalError,
    PksBoundsError,
    require_nonnegative,
    require_positive,
)
from ode_bound import (
    InequalityProblem,
    MonotoneRate,
    blowup_time_sharp,
    envelope,
    envelope_weak,
)
from specialfn import dilog, g_alpha, g_one

logger = logging.getLogger(__name__)

DERIVATIVE_CAP = 4.0


class PksRate(MonotoneRate):
    """f(lambda) = 4 - (M / 2 pi) g_1(sqrt(2 alpha lambda))"""

    def __init__(self, M: float, alpha: float, rel_tol: float = DEFAULT_TOLERANCES.quad_rel_tol):
        self.M = require_positive("M", M)
        self.alpha = require_positive("alpha", alpha)
        self.rel_tol = rel_tol
        coefficient = self.M / (2.0 * math.pi)
        two_alpha = 2.0 * self.alpha

        def rate(lam: float) -> float:
            return 4.0 - coefficient * g_one(math.sqrt(two_alpha * max(lam, 0.0)), rel_tol)

        # sqrt(2 alpha lambda) sweeps [1e-4, 20] on the monotonicity grid
        super().__init__(
            rate,
            f0_plus=4.0 - coefficient,
            f_inf=4.0,
            name=f"pks(M={self.M:g}, alpha={self.alpha:g})",
            check_range=(1e-8 / two_alpha, 400.0 / two_alpha),
            scale=1.0 / two_alpha,
        )

    def problem(self, V2: float) -> InequalityProblem:
        return InequalityProblem(rate=self, V0=V2)


def psi_alpha(alpha: float, rho: float) -> float:
    """Psi_alpha(rho) = -g_alpha(sqrt(rho)), concave in rho"""
    rho = require_nonnegative("rho", rho)
    return -g_alpha(alpha, math.sqrt(rho))


def _pks_problem(M: float, alpha: float, V2: float) -> InequalityProblem:
    M = require_supercritical(M)
    alpha = require_positive("alpha", alpha)
    V2 = require_positive("V2", V2)
    threshold = require_criterion(alpha, M, V2)
    return InequalityProblem(rate=PksRate(M, alpha), V0=V2, lambda_star=threshold)


def t_star_alpha(M: float, alpha: float, V2: float) -> float:
    """2 pi int_0^V2 ds / (M g_1(sqrt(2 alpha s)) - 8 pi)"""
    return blowup_time_sharp(_pks_problem(M, alpha, V2))


def t_star_weak(M: float, alpha: float, V2: float) -> float:
    """2 pi V2 / (M g_1(sqrt(2 alpha V2)) - 8 pi)"""
    M = require_supercritical(M)
    alpha = require_positive("alpha", alpha)
    V2 = require_positive("V2", V2)
    denominator = M * g_one(math.sqrt(2.0 * alpha * V2)) - CRITICAL_MASS
    if denominator <= 0:
        raise CriterionNotSatisfiedError(
            f"M g_1(sqrt(2 alpha V2)) - 8 pi = {denominator} <= 0",
            detail={"M": M, "alpha": alpha, "V2": V2},
        )
    return 2.0 * math.pi * V2 / denominator


def t_cc(M: float, alpha: float, I0: float, C: float = 1.0) -> Optional[float]:
    """Prior second-moment bound; None when its denominator is not positive"""
    M = require_supercritical(M)
    alpha = require_nonnegative("alpha", alpha)
    I0 = require_positive("I0", I0)
    C = require_cc_constant(C)
    denominator = 4.0 * M * (M / CRITICAL_MASS - 1.0) - (C / math.pi) * math.sqrt(alpha) * M ** 1.5 * math.sqrt(I0)
    if denominator <= 0:
        return None
    return I0 / denominator


def t_ks(M: float, I0: float) -> float:
    M = require_supercritical(M)
    I0 = require_positive("I0", I0)
    return I0 / (M * (M / CRITICAL_MASS - 1.0))


def t_classic(M: float, I0: float) -> float:
    """alpha = 0 bound 2 pi I0 / (M (M - 8 pi))"""
    M = require_supercritical(M)
    I0 = require_positive("I0", I0)
    return 2.0 * math.pi * I0 / (M * (M - CRITICAL_MASS))


def t_variance(M: float, V2: float) -> float:
    """alpha = 0 bound 2 pi V2 / (M - 8 pi), using the centre of mass"""
    M = require_supercritical(M)
    V2 = require_positive("V2", V2)
    return 2.0 * math.pi * V2 / (M - CRITICAL_MASS)


def _log_regime(M: float, alpha: float, V2: float) -> Tuple[float, float, float]:
    """(Y, rho, q) with Y = sqrt(2 alpha V2), rho = 8 pi / M, q = rho e^Y < 1"""
    M = require_supercritical(M)
    alpha = require_positive("alpha", alpha)
    V2 = require_positive("V2", V2)
    Y = math.sqrt(2.0 * alpha * V2)
    rho = CRITICAL_MASS / M
    if Y >= math.log(1.0 / rho):
        raise CriterionNotSatisfiedError(
            f"V2={V2} does not satisfy V2 < gamma_log={gamma_log(alpha, M):.12g}",
            detail={"M": M, "alpha": alpha, "V2": V2, "ratio": rho * math.exp(Y)},
        )
    return Y, rho, rho * math.exp(Y)


def _one_minus(rho: float, Y: float) -> float:
    """1 - rho e^Y without cancellation"""
    return -math.expm1(math.log(rho) + Y)


def l_bound(M: float, alpha: float, V2: float) -> Optional[float]:
    """2 pi V2 / (M exp(-sqrt(2 alpha V2)) - 8 pi), None outside V2 < gamma_log"""
    try:
        Y, rho, _ = _log_regime(M, alpha, V2)
    except CriterionNotSatisfiedError:
        return None
    denominator = M * math.exp(-Y) * _one_minus(rho, Y)
    return 2.0 * math.pi * V2 / denominator


def _phi(x: float) -> float:
    """1 + (x - 1) e^x = sum_{j>=2} (j - 1) x^j / j!"""
    if x > 0.5:
        return 1.0 + (x - 1.0) * math.exp(x)
    total = 0.0
    term = x  # x^j / j! at j = 1
    j = 1
    while True:
        j += 1
        term *= x / j
        contribution = (j - 1) * term
        total += contribution
        if contribution <= 1e-17 * total:
            return total


def t_series(M: float, alpha: float, V2: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """sum_k (1/4 alpha) k^-2 (8pi/M)^k [1 + (k Y - 1) e^{kY}], k = n + 1"""
    Y, rho, q = _log_regime(M, alpha, V2)
    log_rho = math.log(rho)
    terms = []
    total = 0.0
    for k in range(1, tolerances.series_max_terms + 1):
        kY = k * Y
        if kY > 0.5:
            # rho^k + (kY - 1) q^k
            bracket = math.exp(k * log_rho) + (kY - 1.0) * math.exp(k * (log_rho + Y))
        else:
            bracket = math.exp(k * log_rho) * _phi(kY)
        term = bracket / (k * k)
        terms.append(term)
        total += term
        if term <= tolerances.series_rel_tol * total:
            logger.debug(f"t_series converged after {k} terms (ratio {q:.6f})")
            return math.fsum(terms) / (4.0 * alpha)
    raise ConvergenceError(
        f"t_series did not converge in {tolerances.series_max_terms} terms (ratio {q})",
        detail={"M": M, "alpha": alpha, "V2": V2, "ratio": q},
    )


def t_series_quadrature(M: float, alpha: float, V2: float) -> float:
    """2 pi int_0^V2 ds / (M exp(-sqrt(2 alpha s)) - 8 pi), with s = u^2"""
    _log_regime(M, alpha, V2)
    root_two_alpha = math.sqrt(2.0 * alpha)

    def integrand(u: float) -> float:
        return 2.0 * u / (M * math.exp(-root_two_alpha * u) - CRITICAL_MASS)

    value, _ = integrate.quad(integrand, 0.0, math.sqrt(V2), epsabs=0.0, epsrel=1e-13, limit=200)
    return 2.0 * math.pi * value


@dataclass(frozen=True)
class DilogBound:
    value: float
    log_term: float
    U: float


def t_dilog_parts(M: float, alpha: float, V2: float) -> DilogBound:
    Y, rho, q = _log_regime(M, alpha, V2)
    # ln(M / (M - 8 pi e^Y)) = -ln(1 - q)
    log_term = Y / (4.0 * alpha) * -math.log(_one_minus(rho, Y))
    U = (dilog(rho) - dilog(q)) / (4.0 * alpha)
    if not U < 0:
        raise NumericalError(f"dilogarithm remainder U = {U} is not negative", detail={"rho": rho, "q": q})
    return DilogBound(value=log_term + U, log_term=log_term, U=U)


def t_dilog(M: float, alpha: float, V2: float) -> float:
    """l(alpha) sqrt(V2) ln(M / (M - 8 pi e^Y)) + U"""
    return t_dilog_parts(M, alpha, V2).value


def k_bound(M: float, alpha: float, V2: float) -> float:
    """(Y / 4 alpha) ln((M - 8 pi) / (M - 8 pi e^Y))"""
    Y, rho, _ = _log_regime(M, alpha, V2)
    return Y / (4.0 * alpha) * (math.log1p(-rho) - math.log(_one_minus(rho, Y)))


def y0(abs_tol: float = 1e-14) -> float:
    """Root Y > 1 of (Y/2 - 1) e^Y + 1 = 0"""
    return optimize.brentq(lambda Y: (Y / 2.0 - 1.0) * math.exp(Y) + 1.0, 1.0, 3.0, xtol=abs_tol)


def b1(M: float) -> float:
    M = require_supercritical(M)
    return math.log(2.0 * M / (M + CRITICAL_MASS))


def b2(M: float) -> float:
    M = require_supercritical(M)
    s = M / (4.0 * math.pi) + 2.0
    return 0.5 * (math.sqrt(s * s + (M / math.pi - 8.0)) - s)


def y2(M: float, abs_tol: float = DEFAULT_TOLERANCES.root_abs_tol) -> float:
    """Root of Y - 1 + (8 pi / M) e^Y on (0, ln(M / 8 pi)), checked against b1 < Y2 < b2"""
    M = require_supercritical(M)
    rho = CRITICAL_MASS / M
    top = math.log(1.0 / rho)
    root = optimize.brentq(lambda Y: Y - 1.0 + rho * math.exp(Y), 0.0, top, xtol=min(abs_tol, 1e-12))
    lower, upper = b1(M), b2(M)
    if not lower < root < upper:
        raise NumericalError(f"Y2({M}) = {root} escapes its bracket ({lower}, {upper})",
                             detail={"M": M, "y2": root, "b1": lower, "b2": upper})
    return root


def _h_function(Y: float, rho: float) -> float:
    """H(Y) = 4 pi Y e^Y / (M - 8 pi e^Y) - ln((M - 8 pi) / (M - 8 pi e^Y)), with rho = 8 pi / M"""
    one_minus_q = _one_minus(rho, Y)
    q = 1.0 - one_minus_q
    return 0.5 * Y * q / one_minus_q - (math.log1p(-rho) - math.log(one_minus_q))


def y1(M: float, abs_tol: float = DEFAULT_TOLERANCES.root_abs_tol) -> float:
    """Root of H on (Y2, ln(M / 8 pi)); K <= L exactly when Y1 <= sqrt(2 alpha V2)"""
    M = require_supercritical(M)
    rho = CRITICAL_MASS / M
    left = y2(M)
    right = math.log(1.0 / rho) * (1.0 - 1e-12)
    h_left = _h_function(left, rho)
    if h_left >= 0:
        raise NumericalError(f"H(Y2) = {h_left} is not negative for M = {M}")
    return optimize.brentq(lambda Y: _h_function(Y, rho), left, right, xtol=min(abs_tol, 1e-12))


@dataclass(frozen=True)
class KLCertificate:
    K: float
    L: float
    Y: float
    y1: float
    y0: float
    k_le_l: bool
    predicted_k_le_l: bool
    sufficient_y0: bool

    def to_dict(self) -> dict:
        return asdict(self)


def compare_kl(M: float, alpha: float, V2: float) -> KLCertificate:
    """K and L with the Y1 characterisation of K <= L and the Y0 sufficient condition"""
    Y, _, _ = _log_regime(M, alpha, V2)
    K = k_bound(M, alpha, V2)
    L = l_bound(M, alpha, V2)
    root = y1(M)
    root0 = y0()
    certificate = KLCertificate(
        K=K, L=L, Y=Y, y1=root, y0=root0,
        k_le_l=K <= L,
        predicted_k_le_l=root <= Y,
        sufficient_y0=root0 < Y,
    )
    if certificate.k_le_l != certificate.predicted_k_le_l and abs(K - L) > 1e-6 * L:
        logger.warning(f"K/L ordering disagrees with Y1 prediction at Y={Y}, Y1={root}")
    return certificate


def t_scaled(M: float, alpha: float, V2: float, lam: float) -> float:
    """Bound on T*(lambda n0): min((1/lambda) t_star_alpha(M), t_star_alpha(lambda M))"""
    lam = require_positive("lambda", lam)
    if lam < 1.0:
        raise InvalidInputError(f"lambda must be >= 1, got {lam}")
    relaxed = t_star_alpha(M, alpha, V2) / lam
    direct = t_star_alpha(lam * M, alpha, V2)
    return min(relaxed, direct)


def lambda_threshold(M0: float, alpha: float, v: float) -> float:
    """lambda_alpha = 8 pi / (M0 g_1(sqrt(2 alpha v)))"""
    M0 = require_positive("M0", M0)
    alpha = require_positive("alpha", alpha)
    v = require_positive("v", v)
    return CRITICAL_MASS / (M0 * g_one(math.sqrt(2.0 * alpha * v)))


def c_alpha_eps(M0: float, alpha: float, v: float, eps: float) -> float:
    """2 pi int_0^v ds / (M0 g_1(sqrt(2 alpha s)) - 8 pi / (lambda_alpha + eps))"""
    eps = require_positive("eps", eps)
    threshold = lambda_threshold(M0, alpha, v)
    shift = CRITICAL_MASS / (threshold + eps)
    two_alpha = 2.0 * alpha

    def integrand(s: float) -> float:
        return 1.0 / (M0 * g_one(math.sqrt(two_alpha * s)) - shift)

    value, _ = integrate.quad(integrand, 0.0, v, epsabs=0.0, epsrel=DEFAULT_TOLERANCES.theta_rel_tol, limit=200)
    result = 2.0 * math.pi * value
    if not (math.isfinite(result) and result > 0):
        raise NumericalError(f"C_alpha(eps) = {result} is not finite and positive")
    return result


def creation_bound(M0: float, alpha: float, v: float, eps: float, lam: float) -> float:
    """T*(lambda m0) <= C_alpha(eps) / lambda for lambda >= lambda_alpha + eps"""
    threshold = lambda_threshold(M0, alpha, v)
    lam = require_positive("lambda", lam)
    if lam < threshold + eps:
        raise NotApplicableError(f"lambda = {lam} is below lambda_alpha + eps = {threshold + eps}")
    return c_alpha_eps(M0, alpha, v, eps) / lam


@dataclass(frozen=True)
class VarianceEnvelope:
    t: float
    V_bound: float
    Vprime_bound: float
    V_weak: float
    Vprime_weak: Optional[float]


def variance_envelope_pks(M: float, alpha: float, V2: float, t: float) -> VarianceEnvelope:
    """Sharp and affine bounds on V(t) and V'(t)"""
    problem = _pks_problem(M, alpha, V2)
    sharp = envelope(problem, t)
    weak = envelope_weak(problem, t)
    vprime = problem.rate(sharp)
    for bound in (vprime, weak.derivative_bound):
        if bound is not None and bound > DERIVATIVE_CAP:
            raise NumericalError(f"derivative bound {bound} exceeds {DERIVATIVE_CAP}")
    return VarianceEnvelope(t=t, V_bound=sharp, Vprime_bound=vprime, V_weak=weak.value,
                            Vprime_weak=weak.derivative_bound)


@dataclass
class TimeBoundReport:
    M: float
    alpha: float
    V2: float
    I0: Optional[float] = None
    B0: Optional[Tuple[float, float]] = None
    cc_constant: float = 1.0
    lam: Optional[float] = None
    eps: Optional[float] = None
    gamma_star: Optional[float] = None
    gamma_log: Optional[float] = None
    t_alpha: Optional[float] = None
    t_weak: Optional[float] = None
    t_cc: Optional[float] = None
    t_ks: Optional[float] = None
    t_classic: Optional[float] = None
    t_variance: Optional[float] = None
    L: Optional[float] = None
    K: Optional[float] = None
    t_series: Optional[float] = None
    t_dilog: Optional[float] = None
    t_scaled: Optional[float] = None
    t_variance_scaled: Optional[float] = None
    lambda_alpha: Optional[float] = None
    c_alpha_eps: Optional[float] = None
    kl_certificate: Optional[Dict[str, object]] = None
    applicable: Dict[str, bool] = field(default_factory=dict)
    near_boundary: bool = False
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _attempt(report: TimeBoundReport, name: str, compute):
    try:
        value = compute()
    except NotApplicableError as e:
        report.applicable[name] = False
        report.notes.append(f"{name}: {e.message}")
        return None
    report.applicable[name] = value is not None
    return value


def bound_report(M: float, alpha: float, V2: float, I0: Optional[float] = None,
                 B0: Optional[Sequence[float]] = None, C: float = 1.0,
                 lam: Optional[float] = None, eps: Optional[float] = None) -> TimeBoundReport:
    """Evaluate every time bound for (M, alpha, V2) with applicability flags"""
    M = require_supercritical(M)
    alpha = require_positive("alpha", alpha)
    V2 = require_positive("V2", V2)
    C = require_cc_constant(C)
    center = (0.0, 0.0) if B0 is None else (float(B0[0]), float(B0[1]))
    if I0 is None:
        I0 = M * (V2 + center[0] ** 2 + center[1] ** 2)
    report = TimeBoundReport(M=M, alpha=alpha, V2=V2, I0=I0, B0=center, cc_constant=C, lam=lam, eps=eps)
    report.gamma_star = gamma_star(alpha, M)
    report.gamma_log = gamma_log(alpha, M)
    gap = (report.gamma_star - V2) / report.gamma_star
    report.near_boundary = 0 < gap <= DEFAULT_TOLERANCES.near_boundary_rel
    if report.near_boundary:
        report.notes.append("V2 is within 1e-10 of gamma_star; t_alpha has reduced accuracy")

    report.t_alpha = _attempt(report, "t_alpha", lambda: t_star_alpha(M, alpha, V2))
    report.t_weak = _attempt(report, "t_weak", lambda: t_star_weak(M, alpha, V2))
    report.t_cc = _attempt(report, "t_cc", lambda: t_cc(M, alpha, I0, C))
    report.t_ks = _attempt(report, "t_ks", lambda: t_ks(M, I0))
    report.t_classic = _attempt(report, "t_classic", lambda: t_classic(M, I0))
    report.t_variance = _attempt(report, "t_variance", lambda: t_variance(M, V2))
    report.L = _attempt(report, "L", lambda: l_bound(M, alpha, V2))
    if report.applicable["L"]:
        report.K = _attempt(report, "K", lambda: k_bound(M, alpha, V2))
        report.t_series = _attempt(report, "t_series", lambda: t_series(M, alpha, V2))
        report.t_dilog = _attempt(report, "t_dilog", lambda: t_dilog(M, alpha, V2))
        report.kl_certificate = compare_kl(M, alpha, V2).to_dict()
    else:
        for name in ("K", "t_series", "t_dilog"):
            report.applicable[name] = False
        report.notes.append("closed-form bounds need V2 < gamma_log")

    if lam is not None:
        report.t_scaled = _attempt(report, "t_scaled", lambda: t_scaled(M, alpha, V2, lam))
        report.t_variance_scaled = _attempt(report, "t_variance_scaled", lambda: t_variance(lam * M, V2))
    if eps is not None:
        report.lambda_alpha = lambda_threshold(M, alpha, V2)
        report.c_alpha_eps = _attempt(report, "c_alpha_eps", lambda: c_alpha_eps(M, alpha, V2, eps))
    logger.info(f"Bound report for M={M:g}, alpha={alpha:g}, V2={V2:g}: "
                f"{sum(report.applicable.values())}/{len(report.applicable)} bounds applicable")
    return report


def roots_report(M: float) -> Dict[str, float]:
    return {"M": M, "y0": y0(), "y1": y1(M), "y2": y2(M), "b1": b1(M), "b2": b2(M)}


PUBLISHED_ROOTS: List[Tuple[str, Optional[float], float]] = [
    ("y0", None, 1.594),
    ("y1", 16.0 * math.pi, 0.461),
    ("y2", 16.0 * math.pi, 0.315),
    ("b1", 16.0 * math.pi, 0.288),
    ("b2", 16.0 * math.pi, 0.316),
    ("y1", 24.0 * math.pi, 0.693),
    ("y2", 24.0 * math.pi, 0.468),
    ("b1", 24.0 * math.pi, 0.405),
    ("b2", 24.0 * math.pi, 0.472),
]


def check_paper_values(tolerance: float = 5e-3) -> List[Dict[str, object]]:
    """Recompute the published three-decimal roots and report deviations"""
    functions = {"y0": lambda M: y0(), "y1": y1, "y2": y2, "b1": b1, "b2": b2}
    rows = []
    for name, M, published in PUBLISHED_ROOTS:
        try:
            value = functions[name](M)
        except PksBoundsError as e:
            logger.exception(f"Failed to recompute {name} at M={M}")
            rows.append({"quantity": name, "M": M, "published": published, "computed": None,
                         "deviation": None, "pass": False, "error": e.message})
            continue
        deviation = abs(value - published)
        rows.append({"quantity": name, "M": M, "published": published, "computed": value,
                     "deviation": deviation, "pass": deviation <= tolerance})
    return rows
