"""
Statistics Node - empirical densities, two-sample tests and kernel symmetry.

kernel_symmetry turns time-reversal invariance into a finite check: for pure
noise the transition kernel satisfies p(x -> y, t) = p(y -> x, t) exactly when
the generator is self-adjoint.
"""
import logging
from typing import Union

import numpy as np
from scipy import stats

from .config import DEFAULT_PICARD_ITERS, OUT_OF_RANGE_WARN
from .errors import ParameterError
from .integrate import Scheme, simulate_ensemble
from .model import SDEModel
from .schemas import (
    AlphaLike,
    EmpiricalDensity,
    Ensemble,
    Grid,
    GridDensity,
    KernelSymmetryResult,
    KSResult,
)

logger = logging.getLogger(__name__)


# ==============================================================================
# EMPIRICAL DENSITY
# ==============================================================================

def empirical_density(samples: Union[Ensemble, np.ndarray], grid: Grid) -> EmpiricalDensity:
    """
    Histogram of ensemble endpoints on the cells of `grid`.

    Samples outside the box and non-finite samples are counted separately and
    excluded; more than 1% out of range adds a warning.
    """
    points = samples.endpoints if isinstance(samples, Ensemble) else np.asarray(samples, dtype=float)
    if points.size == 0:
        raise ParameterError("empty ensemble")
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] != grid.dim:
        raise ParameterError(f"samples have {points.shape[1]} components, grid has {grid.dim} axes")

    finite = np.all(np.isfinite(points), axis=1)
    non_finite = int(np.count_nonzero(~finite))
    counts, _ = np.histogramdd(points[finite], bins=[ax.faces() for ax in grid.axes])
    inside = int(counts.sum())
    out_of_range = int(np.count_nonzero(finite)) - inside
    if inside == 0:
        raise ParameterError("no sample falls inside the grid")

    warnings = []
    fraction = out_of_range / len(points)
    if fraction > OUT_OF_RANGE_WARN:
        msg = f"{fraction:.2%} of samples lie outside the grid"
        logger.warning(msg)
        warnings.append(msg)
    if non_finite:
        warnings.append(f"{non_finite} non-finite samples ignored")

    return EmpiricalDensity(
        grid=grid, counts=counts.ravel(), n_samples=inside,
        out_of_range=out_of_range, non_finite=non_finite, warnings=warnings,
    )


def sup_distance(empirical: EmpiricalDensity, density: GridDensity) -> float:
    """max over nodes of |histogram density - grid density|."""
    if empirical.grid != density.grid:
        raise ParameterError("densities live on different grids")
    return float(np.max(np.abs(empirical.density() - density.values)))


# ==============================================================================
# TWO-SAMPLE TEST
# ==============================================================================

def ks_two_sample(a, b) -> KSResult:
    """Kolmogorov-Smirnov two-sample statistic with the asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for name, s in (("a", a), ("b", b)):
        if s.ndim > 1 and s.shape[1] != 1:
            raise ParameterError(f"sample set {name} is not one-dimensional")
        if s.size == 0:
            raise ParameterError(f"sample set {name} is empty")
    a, b = a.ravel(), b.ravel()
    result = stats.ks_2samp(a, b, method="asymp")
    return KSResult(statistic=float(result.statistic), p_value=float(result.pvalue), n_a=a.size, n_b=b.size)


# ==============================================================================
# KERNEL SYMMETRY
# ==============================================================================

def _is_pure_noise(model: SDEModel, x: float, y: float) -> bool:
    if model.pure_noise:
        return True
    lo, hi = min(x, y) - 1.0, max(x, y) + 1.0
    probes = np.linspace(lo, hi, 41)[:, None]
    return bool(np.all(model.drift_at(probes) == 0.0))


def kernel_symmetry(model: SDEModel, x: float, y: float, t: float, delta: float, n_paths: int,
                    alpha: AlphaLike, scheme: Scheme = "ito_form", seed: int = 0, dt: float = 1e-3,
                    picard_iters: int = DEFAULT_PICARD_ITERS, threads: int = 1) -> KernelSymmetryResult:
    """
    z-score of P(x -> [y - delta, y + delta]) against P(y -> [x - delta, x + delta]).

    Both ensembles use the same seed, so x == y gives z = 0 exactly. Each hit
    fraction has binomial variance p (1 - p) / N. Zero hits on both sides set
    the inconclusive flag.
    """
    if model.state_dim != 1:
        raise ParameterError("kernel_symmetry is one-dimensional")
    if not (t > 0 and delta > 0 and n_paths >= 1):
        raise ParameterError(f"t, delta and n_paths must be positive (got {t}, {delta}, {n_paths})")
    if not _is_pure_noise(model, x, y):
        raise ParameterError(f"kernel symmetry needs a pure-noise model; '{model.name}' has a drift")

    step = min(dt, t)
    forward = simulate_ensemble(model, [x], t, step, alpha, scheme, n_paths, seed, picard_iters, threads=threads)
    backward = simulate_ensemble(model, [y], t, step, alpha, scheme, n_paths, seed, picard_iters, threads=threads)

    with np.errstate(invalid="ignore"):
        hits_f = int(np.count_nonzero(np.abs(forward.endpoints[:, 0] - y) <= delta))
        hits_b = int(np.count_nonzero(np.abs(backward.endpoints[:, 0] - x) <= delta))
    p_f = hits_f / n_paths
    p_b = hits_b / n_paths
    var = (p_f * (1 - p_f) + p_b * (1 - p_b)) / n_paths
    z = 0.0 if var == 0.0 else (p_f - p_b) / np.sqrt(var)
    inconclusive = hits_f == 0 and hits_b == 0
    if inconclusive:
        logger.warning("Kernel symmetry: no hits from either side, result inconclusive")

    logger.info("Kernel symmetry x=%g y=%g: hits %d / %d, z=%.3f", x, y, hits_f, hits_b, z)
    return KernelSymmetryResult(
        z=float(z), p_forward=p_f, p_backward=p_b, hits_forward=hits_f, hits_backward=hits_b,
        n_paths=n_paths, inconclusive=inconclusive,
    )
