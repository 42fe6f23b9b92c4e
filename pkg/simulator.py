"""
Desk-scale solver for n_t = Delta n - div(n grad c), (-Delta + alpha) c = n on a
periodic box, with moment and variance diagnostics.

The concentration is obtained spectrally, diffusion is integrated exactly in
Fourier space (integrating factor) and the aggregation term uses conservative
central fluxes, advanced with a second-order Runge-Kutta step. Runs stop at
t_end, when the peak density has grown by blowup_density_factor (a numerical
surrogate for blow-up, never the true T*) or when the time step collapses.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import GridSpec, SimConfig
from errors import CflViolation, InvalidInputError, SimulationAbort, require_positive
from moments import BOUNDARY_CELLS, Density, GridDensity, cell_centres, sample_on_grid
from ode_bound import InequalityProblem, blowup_time_sharp, envelope_curve
from pks_bounds import PksRate
from criteria import require_criterion, require_supercritical
from specialfn import g_alpha, g_one_vec

logger = logging.getLogger(__name__)

UNDERSHOOT_REL = 1e-12
TERMINATIONS = ("t_end", "blowup_proxy", "dt_collapse")


def wavenumbers(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Angular wavenumber meshes (KX, KY) in numpy FFT order, shapes (ny, nx)"""
    kx = 2.0 * math.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2.0 * math.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    return np.meshgrid(kx, ky, indexing="xy")


def solve_concentration(n: np.ndarray, alpha: float, grid: GridSpec) -> np.ndarray:
    """c with c_hat(k) = n_hat(k) / (|k|^2 + alpha) on the periodic box"""
    if not alpha > 0:
        raise InvalidInputError(f"alpha must be positive for the periodic solve, got {alpha}")
    n = np.asarray(n, dtype=float)
    if n.shape != (grid.ny, grid.nx):
        raise InvalidInputError(f"field shape {n.shape} does not match grid {grid.ny}x{grid.nx}")
    KX, KY = wavenumbers(grid)
    c_hat = np.fft.fft2(n) / (KX ** 2 + KY ** 2 + alpha)
    return np.real(np.fft.ifft2(c_hat))


def _interaction_kernel_hat(grid: GridSpec, alpha: float) -> np.ndarray:
    """rfft2 of g_alpha sampled at every cell offset of a zero-padded grid, G(0) = 1"""
    ix = np.fft.fftfreq(2 * grid.nx, d=1.0 / (2 * grid.nx))
    iy = np.fft.fftfreq(2 * grid.ny, d=1.0 / (2 * grid.ny))
    X, Y = np.meshgrid(ix * grid.dx, iy * grid.dy, indexing="xy")
    kernel = g_one_vec(math.sqrt(alpha) * np.hypot(X, Y))
    return np.fft.rfft2(kernel)


def _pair_sum(n: np.ndarray, kernel_hat: np.ndarray, grid: GridSpec) -> float:
    """sum_ij g_alpha(|x_i - x_j|) n_i n_j dA^2 by linear (non-periodic) convolution"""
    padded = np.zeros((2 * grid.ny, 2 * grid.nx))
    padded[:grid.ny, :grid.nx] = n
    conv = np.fft.irfft2(np.fft.rfft2(padded) * kernel_hat, s=padded.shape)[:grid.ny, :grid.nx]
    dA = grid.dx * grid.dy
    return float(np.sum(n * conv)) * dA * dA


def interaction_integral(density_grid: GridDensity, alpha: float) -> float:
    """I'(t) = 4M - (1/2pi) double integral of g_alpha(|x - y|) n(x) n(y)"""
    alpha = require_positive("alpha", alpha)
    grid = density_grid.spec
    n = density_grid.values
    mass = float(np.sum(n)) * grid.dx * grid.dy
    pairs = _pair_sum(n, _interaction_kernel_hat(grid, alpha), grid)
    return 4.0 * mass - pairs / (2.0 * math.pi)


@dataclass
class SimState:
    t: float
    n: np.ndarray
    steps: int = 0


@dataclass(frozen=True)
class Sample:
    t: float
    mass: float
    I: float
    V: float
    Vprime_fd: float
    max_density: float
    center_x: float
    center_y: float
    g_mean: float
    Iprime_interaction: float
    boundary_mass_fraction: float


CSV_COLUMNS = ["t", "mass", "I", "V", "Vprime_fd", "max_density"]


@dataclass
class SimTrace:
    samples: List[Sample]
    terminated_by: str
    blowup_proxy_time: Optional[float] = None
    mass_drift: float = 0.0
    center_drift: float = 0.0
    steps: int = 0
    rejected_steps: int = 0
    undershoot_events: int = 0
    alpha: Optional[float] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.samples])

    def rows(self, extended: bool = False) -> List[Dict[str, float]]:
        if extended:
            return [asdict(s) for s in self.samples]
        return [{key: getattr(s, key) for key in CSV_COLUMNS} for s in self.samples]

    def summary(self) -> dict:
        return {
            "terminated_by": self.terminated_by,
            "blowup_proxy_time": self.blowup_proxy_time,
            "final_time": self.samples[-1].t if self.samples else 0.0,
            "samples": len(self.samples),
            "steps": self.steps,
            "rejected_steps": self.rejected_steps,
            "mass_drift": self.mass_drift,
            "center_drift": self.center_drift,
            "undershoot_events": self.undershoot_events,
        }


class PksSimulator:
    """Owns the spectral buffers of one grid; one instance per worker"""

    def __init__(self, config: SimConfig):
        self.config = config
        self.grid = config.grid
        self.alpha = config.alpha
        KX, KY = wavenumbers(self.grid)
        self.k2 = KX ** 2 + KY ** 2
        self.helmholtz = 1.0 / (self.k2 + self.alpha)
        self.dA = self.grid.dx * self.grid.dy
        self.x, self.y = cell_centres(self.grid)
        self.kernel_hat = _interaction_kernel_hat(self.grid, self.alpha)
        self.undershoot_events = 0

    def _face_gradients(self, n: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        c = np.real(np.fft.ifft2(np.fft.fft2(n) * self.helmholtz))
        gx = (np.roll(c, -1, axis=1) - c) / self.grid.dx
        gy = (np.roll(c, -1, axis=0) - c) / self.grid.dy
        return gx, gy

    def _aggregation(self, n: np.ndarray) -> np.ndarray:
        """-div(n grad c) in conservative flux form"""
        gx, gy = self._face_gradients(n)
        fx = 0.5 * (n + np.roll(n, -1, axis=1)) * gx
        fy = 0.5 * (n + np.roll(n, -1, axis=0)) * gy
        div = (fx - np.roll(fx, 1, axis=1)) / self.grid.dx + (fy - np.roll(fy, 1, axis=0)) / self.grid.dy
        return -div

    def cfl_limit(self, n: np.ndarray) -> float:
        """cfl_safety * min(dx^2/4, dx / max|grad c|)"""
        gx, gy = self._face_gradients(n)
        h = min(self.grid.dx, self.grid.dy)
        speed = float(max(np.max(np.abs(gx)), np.max(np.abs(gy))))
        limit = h * h / 4.0
        if speed > 0:
            limit = min(limit, h / speed)
        return self.config.cfl_safety * limit

    def _clip_undershoots(self, n: np.ndarray) -> np.ndarray:
        """Zero negative cells and take the added mass back without moving M, B or I.

        The removed part is n+ * (c0 + c1 x + c2 y + c3 |x|^2), with the coefficients
        chosen so that its mass, first and second moments equal those of the clipped
        negative part. V is therefore unchanged by the correction.
        """
        peak = float(np.max(n))
        floor = -UNDERSHOOT_REL * peak
        if float(np.min(n)) >= floor:
            return n
        count = int(np.count_nonzero(n < floor))
        positive = np.where(n < 0, 0.0, n)
        added = positive - n
        xs = self.x - float(np.sum(self.x * positive)) / float(np.sum(positive))
        ys = self.y - float(np.sum(self.y * positive)) / float(np.sum(positive))
        basis = np.stack([np.ones_like(n), xs, ys, xs ** 2 + ys ** 2]).reshape(4, -1)
        weights = positive.ravel()
        gram = (basis * weights) @ basis.T
        target = basis @ added.ravel()
        try:
            coeffs = np.linalg.solve(gram, target)
        except np.linalg.LinAlgError as e:
            raise SimulationAbort(f"Undershoot correction is singular: {e}") from e
        correction = (coeffs @ basis).reshape(n.shape)
        self.undershoot_events += 1
        logger.warning(f"Clipped {count} undershoot cell(s), most negative {float(np.min(n)):.3e}")
        return positive * (1.0 - correction)

    def smooth(self, n: np.ndarray) -> np.ndarray:
        """Gaussian filter of width initial_smoothing cells, applied in Fourier space"""
        width = self.config.initial_smoothing * min(self.grid.dx, self.grid.dy)
        if width == 0:
            return n
        return np.real(np.fft.ifft2(np.fft.fft2(n) * np.exp(-0.5 * self.k2 * width * width)))

    def step(self, state: SimState, dt: float) -> SimState:
        """One integrating-factor RK2 step of size dt"""
        limit = self.cfl_limit(state.n)
        if dt > limit * (1.0 + 1e-12):
            raise CflViolation(f"dt={dt:.3e} exceeds CFL limit {limit:.3e} at t={state.t:.6g}",
                               detail={"dt": dt, "limit": limit, "t": state.t})
        decay = np.exp(-self.k2 * dt)
        n_hat = np.fft.fft2(state.n)
        rate1 = np.fft.fft2(self._aggregation(state.n))
        predictor = np.real(np.fft.ifft2(decay * (n_hat + dt * rate1)))
        rate2 = np.fft.fft2(self._aggregation(predictor))
        new = np.real(np.fft.ifft2(decay * n_hat + 0.5 * dt * (decay * rate1 + rate2)))
        if not np.all(np.isfinite(new)):
            raise SimulationAbort(f"Non-finite density at t={state.t + dt:.6g} (step {state.steps + 1})",
                                  detail={"t": state.t + dt, "dt": dt})
        return SimState(t=state.t + dt, n=self._clip_undershoots(new), steps=state.steps + 1)

    def diagnostics(self, n: np.ndarray) -> Dict[str, float]:
        mass = float(np.sum(n)) * self.dA
        bx = float(np.sum(self.x * n)) * self.dA / mass
        by = float(np.sum(self.y * n)) * self.dA / mass
        second = float(np.sum((self.x ** 2 + self.y ** 2) * n)) * self.dA
        variance = float(np.sum(((self.x - bx) ** 2 + (self.y - by) ** 2) * n)) * self.dA / mass
        pairs = _pair_sum(n, self.kernel_hat, self.grid)
        k = BOUNDARY_CELLS
        inner = float(np.sum(n[k:-k, k:-k])) * self.dA
        return {
            "mass": mass,
            "I": second,
            "V": variance,
            "max_density": float(np.max(n)),
            "center_x": bx,
            "center_y": by,
            "g_mean": pairs / (mass * mass),
            "Iprime_interaction": 4.0 * mass - pairs / (2.0 * math.pi),
            "boundary_mass_fraction": max(0.0, (mass - inner) / mass),
        }

    def run(self, n0: Density) -> SimTrace:
        cfg = self.config
        initial = sample_on_grid(n0, self.grid)
        state = SimState(t=0.0, n=self.smooth(np.array(initial.values, dtype=float)))
        initial_peak = float(np.max(state.n))
        raw: List[Tuple[float, Dict[str, float]]] = [(0.0, self.diagnostics(state.n))]
        if raw[0][1]["boundary_mass_fraction"] > 1e-8:
            logger.warning(f"Initial boundary mass fraction {raw[0][1]['boundary_mass_fraction']:.2e}; "
                           f"envelope checks assume negligible mass at the box edge")
        logger.info(f"Simulation start: {self.grid.nx}x{self.grid.ny}, L={self.grid.L}, alpha={self.alpha}, "
                    f"M={raw[0][1]['mass']:.6g}, t_end={cfg.t_end}")

        dt = cfg.dt0
        next_sample = cfg.sample_interval
        terminated_by = "t_end"
        proxy_time = None
        rejected = 0
        while state.t < cfg.t_end:
            remaining = cfg.t_end - state.t
            if remaining < cfg.dt_min:
                break
            if state.steps >= cfg.max_steps:
                raise SimulationAbort(f"Step budget {cfg.max_steps} exhausted at t={state.t:.6g}")
            attempt = min(cfg.dt0, 2.0 * dt, remaining)
            while True:
                try:
                    state = self.step(state, attempt)
                    break
                except CflViolation:
                    rejected += 1
                    attempt /= 2.0
                    if attempt < cfg.dt_min:
                        break
            if attempt < cfg.dt_min:
                terminated_by = "dt_collapse"
                logger.info(f"Time step collapsed below {cfg.dt_min:g} at t={state.t:.6g}")
                break
            dt = attempt
            peak = float(np.max(state.n))
            if peak >= cfg.blowup_density_factor * initial_peak:
                terminated_by = "blowup_proxy"
                proxy_time = state.t
                raw.append((state.t, self.diagnostics(state.n)))
                logger.info(f"Blow-up proxy at t={state.t:.6g}: peak density {peak:.4g} "
                            f"({peak / initial_peak:.1f}x initial)")
                break
            if state.t >= next_sample - 1e-15 or cfg.sample_interval == 0:
                raw.append((state.t, self.diagnostics(state.n)))
                next_sample = state.t + cfg.sample_interval
                logger.debug(f"t={state.t:.6g} dt={dt:.3e} V={raw[-1][1]['V']:.6g} peak={peak:.4g}")

        if raw[-1][0] != state.t:
            raw.append((state.t, self.diagnostics(state.n)))
        trace = _assemble_trace(raw, terminated_by, proxy_time, state.steps, rejected, self.undershoot_events)
        trace.alpha = self.alpha
        logger.info(f"Simulation stopped by {terminated_by} at t={state.t:.6g} after {state.steps} steps; "
                    f"mass drift {trace.mass_drift:.2e}")
        return trace


def _assemble_trace(raw, terminated_by, proxy_time, steps, rejected, undershoots) -> SimTrace:
    times = np.array([t for t, _ in raw])
    variances = np.array([d["V"] for _, d in raw])
    if len(times) >= 3:
        vprime = np.gradient(variances, times)
    elif len(times) == 2:
        slope = (variances[1] - variances[0]) / (times[1] - times[0])
        vprime = np.array([slope, slope])
    else:
        vprime = np.zeros(1)
    samples = [Sample(t=float(t), Vprime_fd=float(vp), **d) for (t, d), vp in zip(raw, vprime)]
    mass0 = samples[0].mass
    mass_drift = max(abs(s.mass / mass0 - 1.0) for s in samples)
    center_drift = max(math.hypot(s.center_x - samples[0].center_x, s.center_y - samples[0].center_y)
                       for s in samples)
    return SimTrace(samples=samples, terminated_by=terminated_by, blowup_proxy_time=proxy_time,
                    mass_drift=mass_drift, center_drift=center_drift, steps=steps,
                    rejected_steps=rejected, undershoot_events=undershoots)


def run(config: SimConfig, n0: Density) -> SimTrace:
    """Advance n0 until t_end, the blow-up proxy, or time-step collapse"""
    return PksSimulator(config).run(n0)


@dataclass
class EnvelopeCheck:
    theta_zero: float
    samples_checked: int
    sharp_violations: List[float] = field(default_factory=list)
    weak_violations: List[float] = field(default_factory=list)
    derivative_violations: List[float] = field(default_factory=list)
    jensen_violations: List[float] = field(default_factory=list)
    max_sharp_ratio: float = 0.0
    initial_variance_error: float = 0.0

    @property
    def passed(self) -> bool:
        return not (self.sharp_violations or self.weak_violations
                    or self.derivative_violations or self.jensen_violations)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def check_envelope(trace: SimTrace, M: float, alpha: float, V2: float, tol: float = 0.05,
                   derivative_tol: float = 1e-3, jensen_tol: float = 1e-8) -> EnvelopeCheck:
    """Compare a trace with Theta^{-1}(t), the affine envelope, V' <= 4 and the Jensen inequality"""
    M = require_supercritical(M)
    threshold = require_criterion(alpha, M, V2)
    rate = PksRate(M, alpha)
    problem = InequalityProblem(rate=rate, V0=V2, lambda_star=threshold)
    horizon = blowup_time_sharp(problem)
    slope = rate(V2)

    checked = [s for s in trace.samples if s.t < horizon]
    times = np.array([s.t for s in checked])
    sharp = envelope_curve(problem, times) if len(times) else np.array([])
    report = EnvelopeCheck(theta_zero=horizon, samples_checked=len(checked))
    if trace.samples:
        report.initial_variance_error = abs(trace.samples[0].V - V2)
    for sample, bound in zip(checked, sharp):
        if bound > 0:
            report.max_sharp_ratio = max(report.max_sharp_ratio, sample.V / bound)
        if sample.V > bound * (1.0 + tol):
            report.sharp_violations.append(sample.t)
        if sample.V > V2 + sample.t * slope + tol:
            report.weak_violations.append(sample.t)
    for sample in trace.samples:
        if sample.Vprime_fd > 4.0 + derivative_tol:
            report.derivative_violations.append(sample.t)
        # concavity of Psi_alpha: -E[g] <= -g_alpha(sqrt(2V))
        if -sample.g_mean > -g_alpha(alpha, math.sqrt(2.0 * sample.V)) + jensen_tol:
            report.jensen_violations.append(sample.t)
    logger.info(f"Envelope check on {report.samples_checked} samples: "
                f"{len(report.sharp_violations)} sharp, {len(report.weak_violations)} weak, "
                f"{len(report.jensen_violations)} Jensen violations")
    return report
