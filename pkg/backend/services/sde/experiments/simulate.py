"""
Simulate Node - Monte Carlo ensembles of the configured model.
Writes endpoints (path_id, component_index, value), failures and, on request,
the full-path binary dump.
"""
import numpy as np

from db.artifact_store import endpoints_frame, failures_frame
from ..integrate import simulate_ensemble
from ..schemas import RunConfig
from .base import ExperimentOutput, model_from_spec


def run_simulate(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    model = model_from_spec(config.model)
    sim = config.sim
    ensemble = simulate_ensemble(
        model, sim.x0, sim.T, sim.dt, config.alpha, config.scheme, sim.n_paths, sim.seed,
        picard_iters=config.picard_iters, keep_paths=sim.keep_paths, threads=threads,
    )

    out = ExperimentOutput(failures=ensemble.failures)
    out.tables["ensemble_endpoints.csv"] = endpoints_frame(ensemble)
    if ensemble.failures:
        out.tables["ensemble_failures.csv"] = failures_frame(ensemble)
    if sim.keep_paths:
        out.binaries["ensemble_paths.bin"] = ensemble.paths

    finite = ensemble.finite_endpoints()
    increments = finite - np.asarray(ensemble.x0)
    out.summary = {
        "model": model.name,
        "alpha": ensemble.alpha,
        "scheme": ensemble.scheme,
        "steps": ensemble.steps,
        "dt": ensemble.dt,
        "n_paths": ensemble.n_paths,
        "failed_paths": len(ensemble.failures),
        "mean_increment": increments.mean(axis=0).tolist() if len(finite) else None,
        "increment_variance": increments.var(axis=0).tolist() if len(finite) else None,
    }
    return out
