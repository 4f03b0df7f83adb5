"""
Reversal Node - transition-kernel symmetry of the pure-noise companion.
Writes one row per statistic as (test_name, statistic, threshold, pass).
"""
import pandas as pd

from ..stats import kernel_symmetry
from ..schemas import RunConfig
from .base import ExperimentOutput, model_from_spec

SYMMETRIC_Z = 4.0


def run_reversal(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    model = model_from_spec(config.model).without_drift()
    spec = config.reversal
    result = kernel_symmetry(
        model, spec.x, spec.y, spec.t, spec.delta, config.sim.n_paths, config.alpha,
        config.scheme, config.sim.seed, dt=config.sim.dt, picard_iters=config.picard_iters, threads=threads,
    )

    out = ExperimentOutput()
    if result.inconclusive:
        out.warnings.append("no path reached either target ball; z is not informative")
    out.tables["kernel_symmetry.csv"] = pd.DataFrame({
        "test_name": ["kernel_symmetry_abs_z"],
        "statistic": [abs(result.z)],
        "threshold": [SYMMETRIC_Z],
        "pass": ["true" if abs(result.z) <= SYMMETRIC_Z and not result.inconclusive else "false"],
    })
    out.summary = result.model_dump()
    out.summary.update({"model": model.name, "alpha": config.alpha})
    return out
