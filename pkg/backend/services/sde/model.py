"""
SDE problem statement: dX = a(X) dt + b(X) dW.

Defines the model type, the derived diffusion matrix D = b b^T, a probe-based
validation report, and the builders behind the named preset registry.
"""
import logging
from typing import Callable, Dict, Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .config import JACOBIAN_TOL, PRESET_CATALOG, PSD_TOL, SYMMETRY_TOL, resolve_params
from .errors import EvaluationError, ParameterError
from .schemas import ProbeCheck, ValidationReport
from .tables import Component, FieldTables, Term, constant, monomial
from .utils import central_jacobian

logger = logging.getLogger(__name__)


# ==============================================================================
# MODEL
# ==============================================================================

class SDEModel(BaseModel):
    """
    Immutable SDE definition. Field callables are vectorized: they take states
    of shape (..., n) and return (..., n) for the drift, (..., n, m) for the
    noise and (..., n, m, n) for the optional noise Jacobian.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    state_dim: int = Field(gt=0)
    noise_dim: int = Field(gt=0)
    drift: Callable[[np.ndarray], np.ndarray]
    noise: Callable[[np.ndarray], np.ndarray]
    noise_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: Dict[str, float] = Field(default_factory=dict)
    pure_noise: bool = False

    def states(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        if xs.ndim == 0:
            xs = xs.reshape(1)
        if xs.shape[-1] != self.state_dim:
            raise ParameterError(f"state has {xs.shape[-1]} components, model '{self.name}' has {self.state_dim}")
        return xs

    def drift_at(self, x) -> np.ndarray:
        xs = self.states(x)
        if self.pure_noise:
            return np.zeros(xs.shape)
        return np.broadcast_to(np.asarray(self.drift(xs), dtype=float), xs.shape)

    def noise_at(self, x) -> np.ndarray:
        xs = self.states(x)
        shape = xs.shape[:-1] + (self.state_dim, self.noise_dim)
        return np.broadcast_to(np.asarray(self.noise(xs), dtype=float), shape)

    def jacobian_at(self, x) -> np.ndarray:
        """d b_ik / d x_j, analytic when supplied, central differences otherwise."""
        xs = self.states(x)
        if self.noise_jacobian is not None:
            shape = xs.shape[:-1] + (self.state_dim, self.noise_dim, self.state_dim)
            return np.broadcast_to(np.asarray(self.noise_jacobian(xs), dtype=float), shape)
        return central_jacobian(self.noise_at, xs)

    def without_drift(self) -> "SDEModel":
        """The pure-noise companion (a = 0) of this model."""
        if self.pure_noise:
            return self
        return self.model_copy(update={"pure_noise": True, "name": f"{self.name}[pure-noise]"})


def diffusion_at(model: SDEModel, x) -> np.ndarray:
    """D(x) = b(x) b(x)^T; vectorized over leading axes of x."""
    xs = model.states(x)
    b = model.noise_at(xs)
    if not np.all(np.isfinite(b)):
        bad = xs if xs.ndim == 1 else xs[~np.all(np.isfinite(b), axis=(-2, -1))][0]
        raise EvaluationError("noise evaluated to a non-finite value", x=bad)
    return np.einsum("...ik,...jk->...ij", b, b)


# ==============================================================================
# VALIDATION
# ==============================================================================

def validate_model(model: SDEModel, probes: Iterable) -> ValidationReport:
    """
    Check every probe point for finite fields, a symmetric PSD diffusion matrix
    and, when an analytic Jacobian is attached, agreement with central
    differences. Failures become report entries; nothing is raised.
    """
    points = [model.states(p) for p in probes]
    if not points:
        raise ParameterError("validate_model needs at least one probe point")

    checks = []
    for x in points:
        a = model.drift_at(x)
        b = model.noise_at(x)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            checks.append(ProbeCheck(x=x.tolist(), finite=False, message="non-finite drift or noise"))
            continue

        D = b @ b.T
        scale = float(np.max(np.abs(D)))
        symmetric = bool(np.max(np.abs(D - D.T)) <= SYMMETRY_TOL * scale)
        min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (D + D.T))))
        psd = min_eig >= -PSD_TOL * scale
        degenerate = min_eig <= PSD_TOL * scale
        check = ProbeCheck(
            x=x.tolist(), finite=True, symmetric=symmetric, psd=psd,
            min_eigenvalue=min_eig, degenerate=degenerate,
        )

        if model.noise_jacobian is not None:
            analytic = model.jacobian_at(x)
            numeric = central_jacobian(model.noise_at, x)
            discrepancy = float(np.max(np.abs(analytic - numeric)) / max(1.0, float(np.max(np.abs(numeric)))))
            check.jacobian_discrepancy = discrepancy
            check.jacobian_ok = discrepancy <= JACOBIAN_TOL

        if degenerate:
            check.message = "diffusion matrix is singular here"
            logger.warning("Model '%s': degenerate diffusion at x=%s", model.name, x.tolist())
        checks.append(check)

    return ValidationReport(model_name=model.name, probes=checks)


# ==============================================================================
# PRESET BUILDERS
# ==============================================================================

def _zero_drift(n: int):
    return [Component() for _ in range(n)]


def _linear_noise(p):
    return FieldTables(
        drift=[Component(terms=[monomial(-p["k"], [1])] if p["k"] else [])],
        noise=[[Component(terms=[monomial(p["sigma"], [1])])]],
    )


def _ou(p):
    return FieldTables(
        drift=[Component(terms=[monomial(-p["k"], [1])])],
        noise=[[constant(p["sigma"])]],
    )


def _tanh_diffusion(p):
    return FieldTables(
        drift=_zero_drift(1),
        noise=[[Component(terms=[Term(coef=1.0), Term(coef=p["c"], func="tanh")])]],
    )


def _sine_diffusion(p):
    return FieldTables(
        drift=_zero_drift(1),
        noise=[[Component(terms=[Term(coef=1.0), Term(coef=p["amplitude"], func="sin")], transform="sqrt")]],
    )


def _quadratic_diffusion(p):
    return FieldTables(
        drift=_zero_drift(1),
        noise=[[Component(terms=[Term(coef=1.0), monomial(p["q"], [2])], transform="sqrt")]],
    )


def _double_well(p):
    eps = p["eps"]
    return FieldTables(
        drift=[Component(terms=[monomial(1.0, [1]), monomial(-1.0, [3])])],
        noise=[[Component(terms=[Term(coef=eps), monomial(0.5 * eps, [2])], transform="sqrt")]],
    )


def _planar(p):
    s1sq = p["s1"] ** 2
    return FieldTables(
        drift=[
            Component(terms=[monomial(-p["k"], [1, 0])]),
            Component(terms=[monomial(-p["k"], [0, 1])]),
        ],
        noise=[
            [Component(terms=[Term(coef=s1sq), monomial(0.5 * s1sq, [2, 0])], transform="sqrt"), Component()],
            [Component(), Component(terms=[Term(coef=p["s2"]), Term(coef=p["s2"] * p["c"], func="tanh", axis=1)])],
        ],
    )


def _rotated(p):
    c, s = np.cos(p["theta"]), np.sin(p["theta"])
    q = np.array([[c, -s], [s, c]])
    diag = [
        [Term(coef=1.0), monomial(0.5, [2, 0])],
        [Term(coef=1.0), Term(coef=p["c"], func="tanh", axis=1)],
    ]
    noise = [
        [Component(terms=[t.model_copy(update={"coef": t.coef * q[i, k]}) for t in diag[i]]) for k in range(2)]
        for i in range(2)
    ]
    return FieldTables(drift=_zero_drift(2), noise=noise)


_PRESET_BUILDERS = {
    "linear-noise": _linear_noise,
    "ou": _ou,
    "tanh-diffusion": _tanh_diffusion,
    "sine-diffusion": _sine_diffusion,
    "quadratic-diffusion": _quadratic_diffusion,
    "double-well": _double_well,
    "planar": _planar,
    "rotated": _rotated,
}


def table_model(name: str, tables: FieldTables, params: Optional[Dict[str, float]] = None,
                pure_noise: bool = False) -> SDEModel:
    """Wrap coefficient tables into an SDEModel with an analytic noise Jacobian."""
    return SDEModel(
        name=name,
        state_dim=tables.state_dim,
        noise_dim=tables.noise_dim,
        drift=tables.drift_fn(),
        noise=tables.noise_fn(),
        noise_jacobian=tables.noise_jacobian_fn(),
        params=dict(params or {}),
        pure_noise=pure_noise,
    )


def build_model(preset: str, params: Optional[Dict[str, float]] = None,
                tables: Optional[FieldTables] = None, pure_noise: bool = False) -> SDEModel:
    """
    Build a model from the preset registry.

    Args:
        preset: a name from PRESET_CATALOG
        params: overrides of the preset's default parameters
        tables: coefficient tables, only for preset 'custom'
        pure_noise: drop the external drift
    """
    if preset not in PRESET_CATALOG:
        raise ParameterError(f"Unknown preset '{preset}' (known: {', '.join(PRESET_CATALOG)})")
    try:
        resolved = resolve_params(preset, params)
    except KeyError as e:
        raise ParameterError(str(e.args[0])) from e

    if preset == "custom":
        if tables is None:
            raise ParameterError("preset 'custom' needs coefficient tables")
        built = tables
    else:
        built = _PRESET_BUILDERS[preset](resolved)
    return table_model(preset, built, resolved, pure_noise=pure_noise)
