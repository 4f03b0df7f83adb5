"""
FPE Evolve Node - Crank-Nicolson evolution of a Gaussian initial density.
Writes the snapshots (t, node_index, x(, y), w) and the tracked maximum.
"""
from db.artifact_store import extrema_frame, snapshots_frame
from ..fpe import evolve_density, extremum_track
from ..schemas import GridDensity, RunConfig
from .base import ExperimentOutput, grid_from_config, model_from_spec


def run_fpe_evolve(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    model = model_from_spec(config.model)
    grid = grid_from_config(config)
    spec = config.fpe

    w0 = GridDensity.gaussian(grid, spec.initial_mean, spec.initial_variance)
    evolution = evolve_density(
        model, grid, w0, spec.T, dt=spec.dt, alpha=config.alpha,
        boundary=spec.boundary, snapshots=spec.snapshots,
    )
    track = extremum_track(evolution.snapshots)

    out = ExperimentOutput(warnings=list(evolution.warnings))
    out.tables["density_snapshots.csv"] = snapshots_frame(evolution)
    out.tables["extremum_track.csv"] = extrema_frame(track)
    boundary_hits = [r.t for r in track if r.on_boundary]
    if boundary_hits:
        out.warnings.append(f"maximum on the grid boundary at t={boundary_hits}")

    out.summary = {
        "model": model.name,
        "alpha": evolution.alpha,
        "steps": evolution.steps,
        "dt": evolution.dt,
        "boundary": evolution.boundary,
        "final_mass": evolution.snapshots[-1].mass(),
        "max_step_mass_change": evolution.max_step_mass_change,
        "min_relative_value": evolution.min_relative_value,
        "peak_start": track[0].position,
        "peak_end": track[-1].position,
    }
    return out
