"""
Configuration models and document loaders.

Pydantic models describe numerical tolerances, simulator settings and the
density document format. Files are YAML or JSON (JSON parses as YAML), read
with yaml.safe_load and validated here; validation failures surface as
InvalidInputError so the CLI exits with the usage code.
"""
import logging
import math
from pathlib import Path
from typing import Annotated, Any, List, Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from errors import InvalidInputError

logger = logging.getLogger(__name__)


class Tolerances(BaseModel):
    """Numerical tolerances shared by every module"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    quad_rel_tol: float = Field(1e-12, gt=0, lt=1)
    inverse_abs_tol: float = Field(1e-12, gt=0)
    theta_rel_tol: float = Field(1e-10, gt=0, lt=1)
    envelope_abs_tol: float = Field(1e-12, gt=0)
    root_abs_tol: float = Field(1e-10, gt=0)
    lambda_abs_tol: float = Field(1e-12, gt=0)
    series_rel_tol: float = Field(1e-15, gt=0, lt=1)
    series_max_terms: int = Field(1_000_000, gt=0)
    # rho_eps is existential; smaller eps may need a smaller threshold
    validity_threshold: float = Field(1e-2, gt=0, lt=1)
    near_boundary_rel: float = Field(1e-10, gt=0)


DEFAULT_TOLERANCES = Tolerances()


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


class GridSpec(BaseModel):
    """Square box [-L, L]^2 sampled at nx * ny cell centres"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    L: float = Field(gt=0)
    nx: int = Field(gt=0)
    ny: int = Field(gt=0)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.L / self.ny


class SimConfig(BaseModel):
    """Settings of a single simulator run"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    grid: GridSpec
    alpha: float = Field(gt=0)
    dt0: float = Field(gt=0)
    t_end: float = Field(gt=0)
    cfl_safety: float = Field(0.4, gt=0, lt=1)
    blowup_density_factor: float = Field(1e3, gt=1)
    dt_min: float = Field(1e-9, gt=0)
    # 0 samples after every accepted step
    sample_interval: float = Field(0.0, ge=0)
    max_steps: int = Field(2_000_000, gt=0)
    # Gaussian filter width in cells applied to the sampled initial field
    initial_smoothing: float = Field(1.0, ge=0)

    @field_validator("grid")
    @classmethod
    def _grid_is_fft_friendly(cls, grid: GridSpec) -> GridSpec:
        if not (_is_power_of_two(grid.nx) and _is_power_of_two(grid.ny)):
            raise ValueError(f"nx and ny must be powers of two, got {grid.nx}x{grid.ny}")
        return grid

    @model_validator(mode="after")
    def _dt_ordering(self) -> "SimConfig":
        if not self.dt_min < self.dt0:
            raise ValueError(f"dt_min ({self.dt_min}) must be smaller than dt0 ({self.dt0})")
        return self


class GridDocument(BaseModel):
    """Gridded density; values are row-major with rows along y"""
    model_config = ConfigDict(extra="forbid")

    L: float = Field(gt=0)
    nx: int = Field(gt=0)
    ny: int = Field(gt=0)
    values: List[float]

    @model_validator(mode="after")
    def _check_values(self) -> "GridDocument":
        if len(self.values) != self.nx * self.ny:
            raise ValueError(f"expected {self.nx * self.ny} values, got {len(self.values)}")
        if any(not math.isfinite(v) or v < 0 for v in self.values):
            raise ValueError("grid values must be finite and nonnegative")
        if not any(v > 0 for v in self.values):
            raise ValueError("grid density is identically zero")
        return self


class BallDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["ball"]
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0], min_length=2, max_length=2)
    radius: float = Field(gt=0)
    amplitude: float = Field(gt=0)


class GaussianDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    type: Literal["gaussian"]
    center: List[float] = Field(default_factory=lambda: [0.0, 0.0], min_length=2, max_length=2)
    std: float = Field(gt=0)
    mass: float = Field(gt=0)


PrimitiveDocument = Annotated[Union[BallDocument, GaussianDocument], Field(discriminator="type")]


class DensityDocument(BaseModel):
    """Either {"grid": {...}} or {"analytic": [...]}"""
    model_config = ConfigDict(extra="forbid")

    grid: Optional[GridDocument] = None
    analytic: Optional[List[PrimitiveDocument]] = None

    @model_validator(mode="after")
    def _exactly_one(self) -> "DensityDocument":
        if (self.grid is None) == (self.analytic is None):
            raise ValueError("density document needs exactly one of 'grid' or 'analytic'")
        if self.analytic is not None and not self.analytic:
            raise ValueError("analytic density needs at least one primitive")
        return self


def _read_structured(path: Union[str, Path]) -> Any:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh)
    except OSError as e:
        raise InvalidInputError(f"Cannot read {path}: {e}") from e
    except yaml.YAMLError as e:
        raise InvalidInputError(f"Malformed document {path}: {e}") from e


def _validate(model, data: Any, source: str):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(
            f"Invalid {model.__name__} in {source}",
            detail={"errors": e.errors(include_url=False, include_context=False)},
        ) from e


def load_sim_config(path: Union[str, Path]) -> SimConfig:
    """Load a simulator configuration from YAML or JSON"""
    config = _validate(SimConfig, _read_structured(path), str(path))
    logger.info(f"Loaded simulator config from {path}: {config.grid.nx}x{config.grid.ny}, alpha={config.alpha}")
    return config


def load_density_document(path: Union[str, Path]) -> DensityDocument:
    """Load a density document from YAML or JSON"""
    doc = _validate(DensityDocument, _read_structured(path), str(path))
    kind = "grid" if doc.grid is not None else f"{len(doc.analytic)} analytic primitive(s)"
    logger.info(f"Loaded density from {path}: {kind}")
    return doc


def parse_density_document(data: Any, source: str = "<memory>") -> DensityDocument:
    return _validate(DensityDocument, data, source)


def parse_sim_config(data: Any, source: str = "<memory>") -> SimConfig:
    return _validate(SimConfig, data, source)
