"""
Pydantic Schemas for the alpha-SDE engine.
Domain types, result reports and the run configuration used across modules.
"""
import math
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import MASS_TOL, MAX_GRID_DIM, MIN_GRID_POINTS, MIN_WDW_STEPS, PRESET_CATALOG
from .errors import ParameterError
from .tables import FieldTables
from .utils import local_maxima, refine_peak


# ==============================================================================
# INTEGRATION SENSE
# ==============================================================================

ALPHA_NAMES = {"ito": 0.0, "stratonovich": 0.5, "anti-ito": 1.0}


def _parse_alpha(value: Any) -> float:
    if isinstance(value, str):
        key = value.strip().lower().replace("_", "-")
        if key not in ALPHA_NAMES:
            raise ValueError(f"unknown integration sense '{value}' (use {', '.join(ALPHA_NAMES)} or a number)")
        return ALPHA_NAMES[key]
    return value


def _check_alpha(value: float) -> float:
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"alpha must satisfy 0 <= alpha <= 1 (got {value})")
    return value


class Alpha(BaseModel):
    """Position of the evaluation point inside each interval: 0 Ito, 1/2 Stratonovich, 1 anti-Ito."""
    model_config = ConfigDict(frozen=True)

    value: float

    @field_validator("value", mode="before")
    @classmethod
    def _named(cls, v):
        return _parse_alpha(v)

    @field_validator("value")
    @classmethod
    def _ranged(cls, v):
        return _check_alpha(v)

    @classmethod
    def ito(cls) -> "Alpha":
        return cls(value=0.0)

    @classmethod
    def stratonovich(cls) -> "Alpha":
        return cls(value=0.5)

    @classmethod
    def anti_ito(cls) -> "Alpha":
        return cls(value=1.0)

    @property
    def name(self) -> str:
        for label, v in ALPHA_NAMES.items():
            if v == self.value:
                return label
        return f"alpha={self.value:g}"

    def __float__(self) -> float:
        return float(self.value)


AlphaLike = Union[Alpha, float, str]


def alpha_value(alpha: AlphaLike) -> float:
    """Plain float of a number, a name or an Alpha, validated to [0, 1]."""
    if isinstance(alpha, Alpha):
        return alpha.value
    return Alpha(value=alpha).value


# ==============================================================================
# GRIDS AND DENSITIES
# ==============================================================================

class Axis(BaseModel):
    """One axis of a cell-centred grid: nodes at lower + (i + 1/2) h."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    lower: float
    upper: float
    points: int = Field(ge=MIN_GRID_POINTS)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.upper > self.lower:
            raise ValueError(f"upper bound {self.upper} must exceed lower bound {self.lower}")
        return self

    @property
    def spacing(self) -> float:
        return (self.upper - self.lower) / self.points

    def nodes(self) -> np.ndarray:
        return self.lower + (np.arange(self.points) + 0.5) * self.spacing

    def faces(self) -> np.ndarray:
        return self.lower + np.arange(self.points + 1) * self.spacing


class Grid(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    axes: List[Axis] = Field(min_length=1, max_length=MAX_GRID_DIM)

    @classmethod
    def line(cls, lower: float, upper: float, points: int) -> "Grid":
        return cls(axes=[Axis(lower=lower, upper=upper, points=points)])

    @classmethod
    def box(cls, *bounds: Tuple[float, float, int]) -> "Grid":
        return cls(axes=[Axis(lower=lo, upper=up, points=n) for lo, up, n in bounds])

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(ax.points for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(ax.spacing for ax in self.axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def points(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), C order over the axes."""
        mesh = np.meshgrid(*[ax.nodes() for ax in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def unravel(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape + np.asarray(values).shape[1:])

    def nearest_index(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        multi = [
            int(np.clip(np.floor((x[k] - ax.lower) / ax.spacing), 0, ax.points - 1))
            for k, ax in enumerate(self.axes)
        ]
        return int(np.ravel_multi_index(multi, self.shape))


class GridDensity(BaseModel):
    """
    Non-negative profile w on grid nodes; negative values are clamped to 0.

    Probability densities are built with from_weights, which enforces unit
    mass. Snapshots under absorbing boundaries keep their survival mass.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray
    t: float = 0.0

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v):
        arr = np.array(v, dtype=float).ravel()
        return np.where(arr < 0.0, 0.0, arr)

    @model_validator(mode="after")
    def _sized(self):
        if self.values.size != self.grid.size:
            raise ValueError(f"{self.values.size} values for a grid of {self.grid.size} nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density values must be finite")
        return self

    @classmethod
    def from_weights(cls, grid: Grid, weights, t: float = 0.0) -> "GridDensity":
        """
        Probability density proportional to non-negative node weights.

        Raises:
            ParameterError: wrong size, a sum that is not positive and finite,
                or a mass off 1 by more than MASS_TOL after clamping
        """
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != grid.size:
            raise ParameterError(f"{w.size} weights for a grid of {grid.size} nodes")
        total = float(w.sum()) * grid.cell_volume
        if not (np.isfinite(total) and total > 0.0):
            raise ParameterError(f"weights must have a positive finite sum (got {total})")
        density = cls(grid=grid, values=w / total, t=t)
        if abs(density.mass() - 1.0) > MASS_TOL:
            raise ParameterError(f"density mass is {density.mass():.12g} after clamping negative weights")
        return density

    @classmethod
    def gaussian(cls, grid: Grid, mean, variance: float, t: float = 0.0) -> "GridDensity":
        """Isotropic Gaussian sampled on the nodes and normalized on the grid."""
        mu = np.asarray(mean, dtype=float).ravel()
        if mu.size not in (1, grid.dim):
            raise ParameterError(f"mean has {mu.size} components for a {grid.dim}-D grid")
        w = np.exp(-0.5 * np.sum((grid.points() - mu) ** 2, axis=-1) / variance)
        return cls.from_weights(grid, w, t)

    @classmethod
    def point_mass(cls, grid: Grid, x, t: float = 0.0) -> "GridDensity":
        w = np.zeros(grid.size)
        w[grid.nearest_index(x)] = 1.0
        return cls.from_weights(grid, w, t)

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def mean(self) -> np.ndarray:
        p = self.values * self.grid.cell_volume
        return (p[:, None] * self.grid.points()).sum(axis=0) / p.sum()

    def covariance(self) -> np.ndarray:
        p = self.values * self.grid.cell_volume
        centred = self.grid.points() - self.mean()
        return np.einsum("n,ni,nj->ij", p, centred, centred) / p.sum()

    def variance(self) -> float:
        return float(np.trace(self.covariance()))


# ==============================================================================
# MODEL VALIDATION
# ==============================================================================

class ProbeCheck(BaseModel):
    x: List[float]
    finite: bool
    symmetric: bool = True
    psd: bool = True
    min_eigenvalue: Optional[float] = None
    degenerate: bool = False
    jacobian_discrepancy: Optional[float] = None
    jacobian_ok: Optional[bool] = None
    message: str = ""


class ValidationReport(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_name: str
    probes: List[ProbeCheck]

    @property
    def passed(self) -> bool:
        return all(p.finite and p.symmetric and p.psd and p.jacobian_ok is not False for p in self.probes)

    @property
    def degenerate_points(self) -> List[List[float]]:
        return [p.x for p in self.probes if p.degenerate]


# ==============================================================================
# NOISE-INDUCED DRIFT
# ==============================================================================

class SymmetrizationResult(BaseModel):
    """B_star = B . O with B_star symmetric and O orthogonal."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    B_star: np.ndarray
    O: np.ndarray


# ==============================================================================
# SIMULATION
# ==============================================================================

class WienerIncrements(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    steps: int
    dt: float
    m: int
    increments: np.ndarray = Field(description="shape (steps, m), i.i.d. N(0, dt)")
    seed: int


class PathFailure(BaseModel):
    path_id: int
    step: int
    reason: str = "non-finite state"


class Ensemble(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, protected_namespaces=())

    model_name: str
    alpha: float
    scheme: Literal["ito_form", "alpha_point"]
    x0: List[float]
    T: float
    dt: float
    steps: int
    n_paths: int
    seed: int
    endpoints: np.ndarray = Field(description="shape (n_paths, state_dim)")
    paths: Optional[np.ndarray] = Field(default=None, description="shape (n_paths, steps + 1, state_dim)")
    failures: List[PathFailure] = Field(default_factory=list)

    def increments(self) -> np.ndarray:
        return self.endpoints - np.asarray(self.x0)

    def finite_endpoints(self) -> np.ndarray:
        return self.endpoints[np.all(np.isfinite(self.endpoints), axis=-1)]


# ==============================================================================
# FOKKER-PLANCK OPERATORS
# ==============================================================================

class OperatorMatrix(BaseModel):
    """Sparse discrete L (forward), L+ (backward) or their difference."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    matrix: Any = Field(description="scipy.sparse CSR matrix, size x size")
    kind: Literal["forward", "backward", "gap"]
    alpha: float
    boundary: Literal["no_flux", "absorbing"] = "no_flux"

    def apply(self, values) -> np.ndarray:
        return self.matrix @ np.asarray(values, dtype=float).ravel()

    def max_norm(self) -> float:
        data = self.matrix.tocsr().data
        return float(np.max(np.abs(data))) if data.size else 0.0

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()


class CurrentField(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray = Field(description="shape (size, dim)")


class DensityEvolution(BaseModel):
    snapshots: List[GridDensity]
    dt: float
    steps: int
    alpha: float
    boundary: str
    max_step_mass_change: float
    min_relative_value: float
    warnings: List[str] = Field(default_factory=list)


class ExtremumRecord(BaseModel):
    t: float
    index: int
    position: List[float]
    on_boundary: bool
    unique: bool


# ==============================================================================
# STEADY STATES
# ==============================================================================

class Quasipotential(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    phi: np.ndarray
    epsilon: float
    flagged_nodes: List[int] = Field(default_factory=list, description="nodes with w = 0 (phi = +inf)")

    def minima(self) -> List[float]:
        """Interior local minima of phi on a 1-D grid, refined to sub-cell positions."""
        if self.grid.dim != 1:
            raise ValueError("minima are only located on 1-D grids")
        axis = self.grid.axes[0]
        nodes = axis.nodes()
        neg = np.where(np.isfinite(self.phi), -self.phi, -np.inf)
        return [float(nodes[i] + refine_peak(neg, i) * axis.spacing) for i in local_maxima(neg)]


# ==============================================================================
# STATISTICS
# ==============================================================================

class EmpiricalDensity(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: Grid
    counts: np.ndarray = Field(description="bin counts, flat in grid order")
    n_samples: int = Field(description="samples inside the grid")
    out_of_range: int = 0
    non_finite: int = 0
    warnings: List[str] = Field(default_factory=list)

    def density(self) -> np.ndarray:
        return self.counts / (self.n_samples * self.grid.cell_volume)

    def as_grid_density(self, t: float = 0.0) -> GridDensity:
        return GridDensity.from_weights(self.grid, self.counts, t)


class KSResult(BaseModel):
    statistic: float
    p_value: float
    n_a: int
    n_b: int


class KernelSymmetryResult(BaseModel):
    z: float
    p_forward: float = Field(description="estimate of P(X_t in [y-d, y+d] | X_0 = x)")
    p_backward: float = Field(description="estimate of P(X_t in [x-d, x+d] | X_0 = y)")
    hits_forward: int
    hits_backward: int
    n_paths: int
    inconclusive: bool = False


class CheckResult(BaseModel):
    """One row of the acceptance summary."""
    test_name: str
    quantity: str
    expected: float
    observed: float
    tolerance: float
    passed: bool


# ==============================================================================
# RUN CONFIGURATION
# ==============================================================================

class ModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: str
    params: Dict[str, float] = Field(default_factory=dict)
    tables: Optional[FieldTables] = None
    pure_noise: bool = Field(default=False, description="zero the external drift")

    @model_validator(mode="after")
    def _known(self):
        if self.preset not in PRESET_CATALOG:
            raise ValueError(f"unknown preset '{self.preset}' (known: {', '.join(PRESET_CATALOG)})")
        if (self.preset == "custom") != (self.tables is not None):
            raise ValueError("coefficient tables are required for, and only allowed with, preset 'custom'")
        return self


class GridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    axes: List[Axis] = Field(min_length=1, max_length=MAX_GRID_DIM)

    def to_grid(self) -> Grid:
        return Grid(axes=self.axes)


class SimSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_paths: int = Field(default=10_000, ge=1)
    dt: float = Field(default=1e-3, gt=0)
    T: float = Field(default=1.0, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    x0: List[float] = Field(default_factory=lambda: [1.0])
    steps: int = Field(default=1000, ge=MIN_WDW_STEPS, description="subintervals of the W dW integral")
    keep_paths: bool = False

    @model_validator(mode="after")
    def _dt_within_horizon(self):
        if self.dt > self.T:
            raise ValueError(f"dt={self.dt} exceeds the horizon T={self.T}")
        return self


class FPESpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(default=0.3, gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    snapshots: int = Field(default=10, ge=1)
    boundary: Literal["no_flux", "absorbing"] = "no_flux"
    initial_mean: List[float] = Field(default_factory=lambda: [0.0])
    initial_variance: float = Field(default=0.04, gt=0)


class SteadySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epsilon: float = Field(default=1.0, gt=0)


class ReversalSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: float = -0.8
    y: float = 0.8
    t: float = Field(default=0.25, gt=0)
    delta: float = Field(default=0.1, gt=0)


class ReportSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sample_scale: float = Field(default=1.0, gt=0, le=1, description="multiplies every ensemble size")


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Optional[str] = None
    format: Literal["csv"] = "csv"


EXPERIMENTS = ("simulate", "wdw", "fpe-evolve", "operators", "steady", "reversal", "report-all")
NEEDS_MODEL = {"simulate", "fpe-evolve", "operators", "steady", "reversal"}
NEEDS_GRID = {"fpe-evolve", "operators", "steady"}


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = 1
    experiment: Literal["simulate", "wdw", "fpe-evolve", "operators", "steady", "reversal", "report-all"]
    model: Optional[ModelSpec] = None
    alpha: float = 1.0
    scheme: Literal["ito_form", "alpha_point"] = "ito_form"
    picard_iters: int = Field(default=2, ge=1)
    grid: Optional[GridSpec] = None
    sim: SimSpec = Field(default_factory=SimSpec)
    fpe: FPESpec = Field(default_factory=FPESpec)
    steady: SteadySpec = Field(default_factory=SteadySpec)
    reversal: ReversalSpec = Field(default_factory=ReversalSpec)
    report: ReportSpec = Field(default_factory=ReportSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @field_validator("alpha", mode="before")
    @classmethod
    def _named_alpha(cls, v):
        return _parse_alpha(v)

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v):
        return _check_alpha(v)

    @model_validator(mode="after")
    def _complete(self):
        if self.experiment in NEEDS_MODEL and self.model is None:
            raise ValueError(f"experiment '{self.experiment}' needs a 'model' section")
        if self.experiment in NEEDS_GRID and self.grid is None:
            raise ValueError(f"experiment '{self.experiment}' needs a 'grid' section")
        if self.grid is not None and len(self.fpe.initial_mean) not in (1, len(self.grid.axes)):
            raise ValueError(
                f"fpe.initial_mean has {len(self.fpe.initial_mean)} components for a {len(self.grid.axes)}-D grid"
            )
        return self
