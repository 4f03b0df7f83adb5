"""
Configuration constants and the model preset catalog for the alpha-SDE engine.
Contains numeric tolerances shared across modules and the registry of named presets.
"""
from typing import Dict


# ==============================================================================
# NUMERIC CONSTANTS
# ==============================================================================

# Central finite differences: h = max(FD_FLOOR, FD_REL * |x|) per component
FD_FLOOR = 1e-5
FD_REL = 1e-5

# Symmetry / PSD checks on D(x), relative to max|D|
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10

# Analytic-vs-finite-difference Jacobian agreement
JACOBIAN_TOL = 1e-5

# Fixed-point iterations of the evaluation-point scheme
DEFAULT_PICARD_ITERS = 2

# Paths per work unit handed to a worker thread; every path owns its RNG stream
PATH_BLOCK = 8192
WDW_BLOCK = 1024

# Steps of noise drawn per path at a time
NOISE_CHUNK = 256

# Stream purposes, used as the first spawn-key entry of every SeedSequence
STREAM_PATHS = 0
STREAM_WDW = 1
STREAM_INCREMENTS = 2
STREAM_PROBES = 3

# Minimum subinterval count for the discretized W dW integral
MIN_WDW_STEPS = 100

# Grid limits
MIN_GRID_POINTS = 8
MAX_GRID_DIM = 2

# Density positivity: undershoot below this (relative to max w) is reported
NEGATIVE_LOBE_TOL = 1e-6

# Nodes within this fraction of the maximum count as tied with it
PEAK_TIE_TOL = 1e-6

# Gauss-Legendre nodes per cell in the zero-current quadrature
QUADRATURE_NODES = 4

# GridDensity.from_weights: accepted deviation of the mass from 1
MASS_TOL = 1e-9

# Null-space inverse iteration
NULLSPACE_SHIFT_SCALE = 1e12
NULLSPACE_TOL = 1e-10
NULLSPACE_MAX_ITERS = 200

# Empirical densities warn above this out-of-range fraction
OUT_OF_RANGE_WARN = 0.01

# CSV artifacts
CSV_FLOAT_FORMAT = "%.17g"


# ==============================================================================
# MODEL PRESET CATALOG
# ==============================================================================

PRESET_CATALOG: Dict[str, dict] = {
    "linear-noise": {
        "description": "b(x) = sigma*x, a(x) = -k*x (k = 0: pure noise, geometric Brownian motion)",
        "state_dim": 1,
        "params": {"sigma": 1.0, "k": 0.0},
    },
    "ou": {
        "description": "Ornstein-Uhlenbeck: a(x) = -k*x, constant b = sigma (D = sigma^2)",
        "state_dim": 1,
        "params": {"k": 1.0, "sigma": 1.4142135623730951},
    },
    "tanh-diffusion": {
        "description": "pure noise, b(x) = 1 + c*tanh(x), D = (1 + c*tanh(x))^2",
        "state_dim": 1,
        "params": {"c": 0.5},
    },
    "sine-diffusion": {
        "description": "pure noise, D(x) = 1 + amplitude*sin(x)",
        "state_dim": 1,
        "params": {"amplitude": 0.5},
    },
    "quadratic-diffusion": {
        "description": "pure noise, D(x) = 1 + q*x^2",
        "state_dim": 1,
        "params": {"q": 1.0},
    },
    "double-well": {
        "description": "a(x) = x - x^3, D(x) = eps*(1 + x^2/2)",
        "state_dim": 1,
        "params": {"eps": 0.05},
    },
    "planar": {
        "description": "2-D diagonal: a = -k*x, b = diag(s1*sqrt(1 + x1^2/2), s2*(1 + c*tanh(x2)))",
        "state_dim": 2,
        "params": {"k": 1.0, "s1": 1.0, "s2": 1.0, "c": 0.5},
    },
    "rotated": {
        "description": "2-D pure noise, non-symmetric b = diag(1 + x1^2/2, 1 + c*tanh(x2)) . Q(theta)",
        "state_dim": 2,
        "params": {"theta": 0.5, "c": 0.5},
    },
    "custom": {
        "description": "drift and noise given as coefficient tables in the run config",
        "state_dim": 0,
        "params": {},
    },
}


# ==============================================================================
# CATALOG HELPERS
# ==============================================================================

def preset_defaults(name: str) -> Dict[str, float]:
    """Default parameters of a preset (a fresh copy)."""
    if name not in PRESET_CATALOG:
        raise KeyError(f"Unknown preset '{name}'. Known presets: {', '.join(PRESET_CATALOG)}")
    return dict(PRESET_CATALOG[name]["params"])


def resolve_params(name: str, overrides: Dict[str, float] = None) -> Dict[str, float]:
    """
    Merge user parameters over the preset defaults.

    Unknown parameter names are rejected so a typo cannot silently fall back to
    a default.
    """
    params = preset_defaults(name)
    for key, value in (overrides or {}).items():
        if name != "custom" and key not in params:
            raise KeyError(
                f"Preset '{name}' has no parameter '{key}' (known: {', '.join(params) or 'none'})"
            )
        params[key] = float(value)
    return params
