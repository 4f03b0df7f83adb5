"""
Acceptance Node - the full battery of property checks behind `report-all`.

Each check is a function (seed, scale, threads) -> list of CheckResult and is
registered in ACCEPTANCE_CHECKS, in the order the rows are produced.
`report.sample_scale` multiplies every Monte Carlo ensemble size; values below 1
trade statistical power for run time.
"""
import logging
from typing import Callable, Dict, List

import numpy as np

from db.artifact_store import csv_bytes, endpoints_frame
from ..config import PATH_BLOCK, STREAM_PROBES, WDW_BLOCK
from ..errors import SDEError
from ..fpe import build_backward, build_forward, evolve_density, extremum_track, operator_gap, probability_current
from ..integrate import simulate_ensemble, wdw_samples
from ..model import build_model
from ..noise_drift import a_n_from_b, a_n_from_D, symmetrize, symmetrized_noise
from ..schemas import CheckResult, Grid, GridDensity, RunConfig
from ..stats import empirical_density, kernel_symmetry, sup_distance
from ..steady import quasipotential, steady_1d_zero_current, steady_nullspace
from ..utils import refine_peak, stream
from .base import ExperimentOutput, check

logger = logging.getLogger(__name__)

CheckFn = Callable[[int, float, int], List[CheckResult]]


def _scaled(n: int, scale: float, floor: int = 1000) -> int:
    return max(floor, int(round(n * scale)))


def _operator_difference(model, grid, alpha) -> float:
    diff = (build_forward(model, grid, alpha, "no_flux").matrix - build_backward(model, grid, alpha).matrix).tocsr()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


# ==============================================================================
# STOCHASTIC INTEGRAL AND ONE-STEP MOMENTS
# ==============================================================================

def _wdw_moments(seed: int, scale: float, threads: int) -> List[CheckResult]:
    n = _scaled(100_000, scale)
    t = 1.0
    rows = []
    for alpha in (0.0, 0.5, 1.0):
        samples = wdw_samples(seed, t, 1000, alpha, n, threads=threads)
        band = 5.0 * np.sqrt(0.5 * t ** 2 / n)
        mean = samples.mean()
        var = samples.var(ddof=1)
        rows.append(check("wdw_moments", f"mean_alpha_{alpha:g}", alpha * t, mean, band, abs(mean - alpha * t) <= band))
        rows.append(check("wdw_moments", f"variance_alpha_{alpha:g}", 0.5 * t ** 2, var, 0.025 * t ** 2,
                          abs(var - 0.5 * t ** 2) <= 0.025 * t ** 2))
    return rows


def _one_step_moments(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("linear-noise", {"sigma": 1.0})
    n = _scaled(100_000, scale)
    dt, x0 = 1e-3, 1.0
    D = x0 ** 2
    a_n = x0
    rows = []
    for scheme in ("ito_form", "alpha_point"):
        for alpha in (0.0, 1.0):
            ensemble = simulate_ensemble(model, [x0], dt, dt, alpha, scheme, n, seed, threads=threads)
            inc = ensemble.increments()[:, 0]
            band = 5.0 * np.sqrt(D * dt / n)
            expected = alpha * a_n * dt
            rows.append(check("one_step_moments", f"{scheme}_mean_alpha_{alpha:g}", expected, inc.mean(), band,
                              abs(inc.mean() - expected) <= band))
            var = inc.var(ddof=1)
            rows.append(check("one_step_moments", f"{scheme}_variance_alpha_{alpha:g}", D * dt, var, 0.05 * D * dt,
                              abs(var - D * dt) <= 0.05 * D * dt))
    return rows


# ==============================================================================
# OPERATORS
# ==============================================================================

def _operator_identity(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("sine-diffusion", pure_noise=True)
    grid = Grid.line(-4.0, 4.0, 256)
    diff = _operator_difference(model, grid, 1.0)
    return [check("operator_identity", "forward_minus_backward_max", 0.0, diff, 1e-12, diff <= 1e-12)]


def _gap_proportionality(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("sine-diffusion", pure_noise=True)
    grid = Grid.line(-4.0, 4.0, 256)
    ratios = np.array([operator_gap(model, grid, a).max_norm() / (1.0 - a) for a in (0.0, 0.25, 0.5, 0.75)])
    spread = float((ratios.max() - ratios.min()) / ratios.mean()) if ratios.mean() > 0 else np.inf
    at_one = operator_gap(model, grid, 1.0).max_norm()
    return [
        check("gap_proportionality", "relative_spread_of_gap_over_one_minus_alpha", 0.0, spread, 1e-10, spread <= 1e-10),
        check("gap_proportionality", "gap_max_alpha_1", 0.0, at_one, 1e-12, at_one <= 1e-12),
        check("gap_proportionality", "gap_max_alpha_0", ratios[0], ratios[0], 0.0, ratios[0] > 0),
    ]


def _constant_diffusion(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("ou", pure_noise=True)
    grid = Grid.line(-4.0, 4.0, 256)
    rows = []
    for alpha in (0.0, 0.5, 1.0):
        diff = _operator_difference(model, grid, alpha)
        rows.append(check("constant_diffusion", f"forward_minus_backward_max_alpha_{alpha:g}", 0.0, diff, 1e-12,
                          diff <= 1e-12))
    return rows


# ==============================================================================
# EXTREMA OF EVOLVING DENSITIES
# ==============================================================================

def _peak_shift(model, grid: Grid, alpha: float, snapshots: int = 10):
    """Initial-to-final displacement of the maximum, in cells toward negative x."""
    centre = float(grid.points()[grid.nearest_index(0.0), 0])
    w0 = GridDensity.gaussian(grid, centre, 0.04)
    evolution = evolve_density(model, grid, w0, 0.3, alpha=alpha, snapshots=snapshots)
    track = extremum_track(evolution.snapshots)
    shift = (track[0].position[0] - track[-1].position[0]) / grid.spacing[0]
    return shift, evolution, w0


def _extrema(seed: int, scale: float, threads: int) -> List[CheckResult]:
    tanh = build_model("tanh-diffusion", pure_noise=True)
    grid = Grid.line(-4.0, 4.0, 512)
    shift_0, _, w0 = _peak_shift(tanh, grid, 0.0)
    shift_1, _, _ = _peak_shift(tanh, grid, 1.0)
    constant_shift, _, _ = _peak_shift(build_model("ou", pure_noise=True), grid, 0.0)

    J = probability_current(tanh, grid, w0, 1.0).values[:, 0]
    centre = int(np.argmax(w0.values))
    relative = float(abs(J[centre]) / np.max(np.abs(J)))
    return [
        check("extrema", "alpha_0_shift_cells_toward_lower_D", 5.0, shift_0, 0.0, shift_0 >= 5.0),
        check("extrema", "alpha_0_minus_alpha_1_shift_cells", 0.0, shift_0 - shift_1, 0.0, shift_0 > shift_1),
        check("extrema", "alpha_1_current_at_maximum_relative", 0.0, relative, 1e-8, relative <= 1e-8),
        check("extrema", "constant_D_shift_cells", 0.0, abs(constant_shift), 1.0, abs(constant_shift) <= 1.0),
    ]


def _monotone_flattening(seed: int, scale: float, threads: int) -> List[CheckResult]:
    rows = []
    grid = Grid.line(-4.0, 4.0, 512)
    for preset in ("tanh-diffusion", "sine-diffusion"):
        _, evolution, _ = _peak_shift(build_model(preset, pure_noise=True), grid, 1.0, snapshots=30)
        maxima = np.array([s.values.max() for s in evolution.snapshots])
        rise = float(max(0.0, np.max(np.diff(maxima))))
        tol = 1e-12 * maxima[0]
        rows.append(check("monotone_flattening", f"{preset}_max_rise", 0.0, rise, tol, rise <= tol))
    return rows


# ==============================================================================
# KERNEL SYMMETRY
# ==============================================================================

def _kernel_symmetry(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("tanh-diffusion", pure_noise=True)
    n = _scaled(400_000, scale)
    z1 = kernel_symmetry(model, -0.8, 0.8, 0.25, 0.1, n, 1.0, seed=seed, dt=1e-3, threads=threads)
    z0 = kernel_symmetry(model, -0.8, 0.8, 0.25, 0.1, n, 0.0, seed=seed, dt=1e-3, threads=threads)
    return [
        check("kernel_symmetry", "abs_z_alpha_1", 0.0, abs(z1.z), 4.0, abs(z1.z) <= 4.0 and not z1.inconclusive),
        check("kernel_symmetry", "abs_z_alpha_0", 8.0, abs(z0.z), 0.0, abs(z0.z) >= 8.0),
    ]


# ==============================================================================
# NOISE-INDUCED DRIFT
# ==============================================================================

IDENTITY_PRESETS = ("linear-noise", "ou", "tanh-diffusion", "sine-diffusion", "quadratic-diffusion",
                    "double-well", "planar", "rotated")


def _noise_drift_identity(seed: int, scale: float, threads: int) -> List[CheckResult]:
    rows = []
    for preset in IDENTITY_PRESETS:
        model = build_model(preset)
        probes = stream(seed, STREAM_PROBES).uniform(-2.0, 2.0, size=(100, model.state_dim))
        variants = [(preset, model)]
        if preset == "rotated":
            variants.append(("rotated_symmetrized", symmetrized_noise(model)))
        for label, m in variants:
            gap = float(np.max(np.abs(a_n_from_b(m, probes) - a_n_from_D(m, probes))))
            rows.append(check("noise_drift_identity", f"{label}_max_abs_difference", 0.0, gap, 1e-4, gap <= 1e-4))
    return rows


def _symmetrize_invariants(seed: int, scale: float, threads: int) -> List[CheckResult]:
    rows = []
    for label, B in (("rotation", np.array([[0.0, 1.0], [-1.0, 0.0]])), ("shear", np.array([[1.0, 1.0], [0.0, 1.0]]))):
        result = symmetrize(B)
        Bs, O = result.B_star, result.O
        measures = {
            "symmetry": np.max(np.abs(Bs - Bs.T)),
            "orthogonality": np.max(np.abs(O @ O.T - np.eye(2))),
            "product": np.max(np.abs(B @ O - Bs)),
            "diffusion_preserved": np.max(np.abs(Bs @ Bs.T - B @ B.T)),
            "positive_semidefinite": max(0.0, -float(np.min(np.linalg.eigvalsh(Bs)))),
        }
        for name, value in measures.items():
            rows.append(check("symmetrize", f"{label}_{name}", 0.0, value, 1e-10, value <= 1e-10))
    return rows


# ==============================================================================
# STEADY STATES
# ==============================================================================

def _steady_states(seed: int, scale: float, threads: int) -> List[CheckResult]:
    rows = []

    w = steady_nullspace(build_forward(build_model("tanh-diffusion", pure_noise=True), Grid.line(-4.0, 4.0, 256), 1.0))
    spread = float((w.values.max() - w.values.min()) / w.values.mean())
    rows.append(check("steady_states", "pure_noise_relative_spread", 0.0, spread, 1e-6, spread <= 1e-6))

    eps = 0.05
    well = build_model("double-well", {"eps": eps})
    grid = Grid.line(-2.0, 2.0, 1024)
    h = grid.spacing[0]
    minima = quasipotential(steady_nullspace(build_forward(well, grid, 1.0)), eps).minima()
    for target in (-1.0, 1.0):
        miss = min((abs(m - target) / h for m in minima), default=np.inf)
        rows.append(check("steady_states", f"double_well_minimum_at_{target:+g}_cells", 0.0, miss, 2.0, miss <= 2.0))

    ito = steady_1d_zero_current(well, grid, 0.0).values
    nodes = grid.axes[0].nodes()
    right = int(np.argmax(np.where(nodes > 0, ito, -np.inf)))
    peak = nodes[right] + refine_peak(ito, right) * h
    displacement = (1.0 - peak) / h
    rows.append(check("steady_states", "double_well_alpha_0_displacement_cells", 2.0, displacement, 0.0,
                      displacement > 2.0))

    ou = build_model("ou")
    grid = Grid.line(-6.0, 6.0, 512)
    l1 = float(np.sum(np.abs(steady_nullspace(build_forward(ou, grid, 1.0)).values
                             - steady_1d_zero_current(ou, grid, 1.0).values)) * grid.cell_volume)
    rows.append(check("steady_states", "ou_nullspace_vs_quadrature_l1", 0.0, l1, 1e-3, l1 <= 1e-3))
    return rows


# ==============================================================================
# MONTE CARLO AGAINST THE FORWARD EQUATION
# ==============================================================================

def _mc_pde_consistency(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("linear-noise", {"sigma": 0.4})
    grid = Grid.line(-1.0, 3.0, 255)
    h = grid.spacing[0]
    T, dt = 0.25, 1e-3
    n = _scaled(1_000_000, scale)

    evolved = evolve_density(model, grid, GridDensity.point_mass(grid, 1.0), T, alpha=1.0, snapshots=1)
    final = evolved.snapshots[-1]
    ensemble = simulate_ensemble(model, [1.0], T, dt, 1.0, "ito_form", n, seed, threads=threads)
    distance = sup_distance(empirical_density(ensemble, grid), final)

    w = final.values
    curvature = float(np.max(np.abs(np.diff(w, 2)))) / h ** 2
    band = 4.0 * np.sqrt(w.max() / (n * h)) + dt * w.max() + h ** 2 * curvature
    return [check("mc_pde_consistency", "sup_distance", 0.0, distance, 3.0 * band, distance <= 3.0 * band)]


# ==============================================================================
# DETERMINISM
# ==============================================================================

def _determinism(seed: int, scale: float, threads: int) -> List[CheckResult]:
    model = build_model("tanh-diffusion", pure_noise=True)
    n = 2 * PATH_BLOCK + 17
    single = simulate_ensemble(model, [0.0], 0.05, 1e-3, 0.5, "alpha_point", n, seed, threads=1)
    pooled = simulate_ensemble(model, [0.0], 0.05, 1e-3, 0.5, "alpha_point", n, seed, threads=4)
    same_paths = csv_bytes(endpoints_frame(single)) == csv_bytes(endpoints_frame(pooled))

    m = 3 * WDW_BLOCK + 5
    same_wdw = np.array_equal(wdw_samples(seed, 1.0, 200, 0.5, m, threads=1),
                              wdw_samples(seed, 1.0, 200, 0.5, m, threads=4))
    return [
        check("determinism", "ensemble_csv_threads_1_vs_4", 0.0, 0.0 if same_paths else 1.0, 0.0, same_paths),
        check("determinism", "wdw_samples_threads_1_vs_4", 0.0, 0.0 if same_wdw else 1.0, 0.0, same_wdw),
    ]


ACCEPTANCE_CHECKS: Dict[str, CheckFn] = {
    "wdw_moments": _wdw_moments,
    "operator_identity": _operator_identity,
    "gap_proportionality": _gap_proportionality,
    "constant_diffusion": _constant_diffusion,
    "extrema": _extrema,
    "monotone_flattening": _monotone_flattening,
    "kernel_symmetry": _kernel_symmetry,
    "noise_drift_identity": _noise_drift_identity,
    "symmetrize": _symmetrize_invariants,
    "steady_states": _steady_states,
    "mc_pde_consistency": _mc_pde_consistency,
    "one_step_moments": _one_step_moments,
    "determinism": _determinism,
}


def run_report_all(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    """Run every registered check; a check that raises is recorded as one failing row."""
    seed = config.sim.seed
    scale = config.report.sample_scale
    out = ExperimentOutput()
    for name, fn in ACCEPTANCE_CHECKS.items():
        logger.info("Acceptance check '%s'", name)
        try:
            out.checks.extend(fn(seed, scale, threads))
        except SDEError as e:
            msg = f"check '{name}' raised {type(e).__name__}: {e}"
            logger.error(msg)
            out.warnings.append(msg)
            out.checks.append(check(name, "error", 0.0, np.nan, 0.0, False))

    failed = sorted({c.test_name for c in out.checks if not c.passed})
    out.summary = {
        "sample_scale": scale,
        "checks": len(out.checks),
        "failed": len(failed),
        "failed_tests": failed,
    }
    return out
