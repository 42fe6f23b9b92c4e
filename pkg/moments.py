"""
Initial data n_0 and its moments.

A density is either a nonnegative field sampled at the cell centres of the
box [-L, L]^2 or a weighted sum of analytic primitives (uniform balls and
isotropic Gaussians). Moments are mass M, second moment I0, centre of mass
B0 and variance V2 = I0/M - |B0|^2.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from config import DensityDocument, GridSpec
from errors import InvalidInputError, require_finite, require_positive

logger = logging.getLogger(__name__)

BOUNDARY_CELLS = 3
BOUNDARY_MASS_TOLERANCE = 1e-8
DEFAULT_SUPERSAMPLE = 4


def _as_center(center: Sequence[float]) -> Tuple[float, float]:
    if len(center) != 2:
        raise InvalidInputError(f"center must have two components, got {center!r}")
    return (require_finite("center.x", center[0]), require_finite("center.y", center[1]))


@dataclass(frozen=True)
class UniformBall:
    """amplitude * indicator of the disc |x - center| < radius"""
    center: Tuple[float, float]
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_center(self.center))
        require_positive("radius", self.radius)
        require_positive("amplitude", self.amplitude)

    @property
    def mass(self) -> float:
        return math.pi * self.radius ** 2 * self.amplitude

    @property
    def variance(self) -> float:
        return self.radius ** 2 / 2.0

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        inside = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2 < self.radius ** 2
        return np.where(inside, self.amplitude, 0.0)


@dataclass(frozen=True)
class Gaussian:
    """Isotropic Gaussian with per-axis standard deviation std and total mass"""
    center: Tuple[float, float]
    std: float
    mass: float

    def __post_init__(self):
        object.__setattr__(self, "center", _as_center(self.center))
        require_positive("std", self.std)
        require_positive("mass", self.mass)

    @property
    def variance(self) -> float:
        return 2.0 * self.std ** 2

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return self.mass / (2.0 * math.pi * self.std ** 2) * np.exp(-r2 / (2.0 * self.std ** 2))


Primitive = Union[UniformBall, Gaussian]


@dataclass(frozen=True)
class AnalyticDensity:
    """weight * sum of primitives; scaling only touches the weight"""
    primitives: Tuple[Primitive, ...]
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise InvalidInputError("analytic density needs at least one primitive")
        require_positive("weight", self.weight)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        total = np.zeros(np.broadcast(x, y).shape)
        for primitive in self.primitives:
            total = total + primitive.evaluate(x, y)
        return self.weight * total


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Cell-centre samples on [-L, L]^2; values has shape (ny, nx), axis 1 along x"""
    L: float
    values: np.ndarray

    def __post_init__(self):
        require_positive("L", self.L)
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError(f"grid values must be two-dimensional, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("grid values must be finite")
        if np.any(values < 0):
            raise InvalidInputError("grid values must be nonnegative")
        if not np.any(values > 0):
            raise InvalidInputError("grid density is identically zero")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def spec(self) -> GridSpec:
        return GridSpec(L=self.L, nx=self.nx, ny=self.ny)

    @property
    def cell_area(self) -> float:
        return (2.0 * self.L / self.nx) * (2.0 * self.L / self.ny)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        return cell_centres(self.spec)


Density = Union[GridDensity, AnalyticDensity]


@dataclass(frozen=True)
class Moments:
    mass: float
    second_moment: float
    center: Tuple[float, float]
    variance: float
    boundary_mass_fraction: Optional[float] = None
    boundary_warning: bool = False

    @property
    def center_norm_sq(self) -> float:
        return self.center[0] ** 2 + self.center[1] ** 2

    def to_dict(self) -> dict:
        out = {
            "M": self.mass,
            "I0": self.second_moment,
            "B0": list(self.center),
            "V2": self.variance,
        }
        if self.boundary_mass_fraction is not None:
            out["boundary_mass_fraction"] = self.boundary_mass_fraction
            out["boundary_warning"] = self.boundary_warning
        return out


def cell_centres(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Meshgrid of cell centres, shapes (ny, nx)"""
    xs = -grid.L + (np.arange(grid.nx) + 0.5) * grid.dx
    ys = -grid.L + (np.arange(grid.ny) + 0.5) * grid.dy
    return np.meshgrid(xs, ys, indexing="xy")


def boundary_mass_fraction(density: GridDensity, cells: int = BOUNDARY_CELLS) -> float:
    values = density.values
    inner = values[cells:values.shape[0] - cells, cells:values.shape[1] - cells]
    total = float(np.sum(values))
    return max(0.0, (total - float(np.sum(inner))) / total)


def _analytic_moments(density: AnalyticDensity) -> Moments:
    masses = np.array([p.mass for p in density.primitives])
    centers = np.array([p.center for p in density.primitives])
    variances = np.array([p.variance for p in density.primitives])
    base_mass = float(np.sum(masses))
    center = masses @ centers / base_mass
    spread = np.sum((centers - center) ** 2, axis=1)
    variance = float(masses @ (variances + spread) / base_mass)
    mass = density.weight * base_mass
    second = mass * (variance + float(center @ center))
    return Moments(mass=mass, second_moment=second,
                   center=(float(center[0]), float(center[1])), variance=variance)


def _grid_moments(density: GridDensity) -> Moments:
    x, y = density.coordinates()
    n = density.values
    dA = density.cell_area
    mass = float(np.sum(n)) * dA
    if mass <= 0:
        raise InvalidInputError("density has zero total mass")
    bx = float(np.sum(x * n)) * dA / mass
    by = float(np.sum(y * n)) * dA / mass
    second = float(np.sum((x * x + y * y) * n)) * dA
    variance = float(np.sum(((x - bx) ** 2 + (y - by) ** 2) * n)) * dA / mass
    fraction = boundary_mass_fraction(density)
    warn = fraction > BOUNDARY_MASS_TOLERANCE
    if warn:
        logger.warning(f"Boundary mass fraction {fraction:.3e} exceeds {BOUNDARY_MASS_TOLERANCE:g}; moments are truncated by the box")
    return Moments(mass=mass, second_moment=second, center=(bx, by), variance=variance,
                   boundary_mass_fraction=fraction, boundary_warning=warn)


def compute_moments(n0: Density) -> Moments:
    """Mass, second moment, centre of mass and variance of n0"""
    if isinstance(n0, AnalyticDensity):
        return _analytic_moments(n0)
    if isinstance(n0, GridDensity):
        return _grid_moments(n0)
    raise InvalidInputError(f"Unsupported density type {type(n0).__name__}")


def second_moment_from(mass: float, variance: float, center: Sequence[float]) -> float:
    """I0 = M (V2 + |B0|^2)"""
    return mass * (variance + center[0] ** 2 + center[1] ** 2)


def scale(n0: Density, lam: float) -> Density:
    """lambda * n0; preserves centre of mass and variance"""
    lam = require_positive("lambda", lam)
    if isinstance(n0, AnalyticDensity):
        return replace(n0, weight=n0.weight * lam)
    return GridDensity(L=n0.L, values=n0.values * lam)


def _shift_primitive(p: Primitive, b: Tuple[float, float]) -> Primitive:
    return replace(p, center=(p.center[0] + b[0], p.center[1] + b[1]))


def translate(n0: Density, b: Sequence[float]) -> Density:
    """n0(x - b); grids are shifted spectrally on the periodic box"""
    b = _as_center(b)
    if isinstance(n0, AnalyticDensity):
        return replace(n0, primitives=tuple(_shift_primitive(p, b) for p in n0.primitives))
    grid = n0.spec
    kx = 2.0 * math.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2.0 * math.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    KX, KY = np.meshgrid(kx, ky, indexing="xy")
    phase = np.exp(-1j * (KX * b[0] + KY * b[1]))
    shifted = np.real(np.fft.ifft2(np.fft.fft2(n0.values) * phase))
    return GridDensity(L=n0.L, values=np.clip(shifted, 0.0, None))


def ball_with_variance(v: float, center: Sequence[float] = (0.0, 0.0), mass: float = 1.0) -> AnalyticDensity:
    """Uniform ball of radius sqrt(2v): centre of mass `center`, variance v"""
    v = require_positive("v", v)
    mass = require_positive("mass", mass)
    radius = math.sqrt(2.0 * v)
    ball = UniformBall(center=_as_center(center), radius=radius, amplitude=mass / (math.pi * radius ** 2))
    return AnalyticDensity(primitives=(ball,))


def sample_on_grid(n0: Density, grid: GridSpec, supersample: int = DEFAULT_SUPERSAMPLE) -> GridDensity:
    """Cell averages of n0 on the grid, using supersample^2 points per cell"""
    if isinstance(n0, GridDensity):
        if (n0.nx, n0.ny) != (grid.nx, grid.ny) or n0.L != grid.L:
            raise InvalidInputError("grid density does not match the requested grid")
        return n0
    if supersample < 1:
        raise InvalidInputError(f"supersample must be >= 1, got {supersample}")
    fine = GridSpec(L=grid.L, nx=grid.nx * supersample, ny=grid.ny * supersample)
    x, y = cell_centres(fine)
    values = n0.evaluate(x, y)
    averaged = values.reshape(grid.ny, supersample, grid.nx, supersample).mean(axis=(1, 3))
    return GridDensity(L=grid.L, values=averaged)


def density_from_document(doc: DensityDocument) -> Density:
    if doc.grid is not None:
        g = doc.grid
        values = np.asarray(g.values, dtype=float).reshape(g.ny, g.nx)
        return GridDensity(L=g.L, values=values)
    primitives = []
    for item in doc.analytic:
        if item.type == "ball":
            primitives.append(UniformBall(center=tuple(item.center), radius=item.radius, amplitude=item.amplitude))
        else:
            primitives.append(Gaussian(center=tuple(item.center), std=item.std, mass=item.mass))
    return AnalyticDensity(primitives=tuple(primitives))
