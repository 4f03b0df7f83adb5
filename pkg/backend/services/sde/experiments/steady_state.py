"""
Steady State Node - stationary density and quasipotential of the configured model.

The null vector of the no-flux forward operator is computed on any grid; 1-D
grids also get the zero-current quadrature and the L1 distance between the two.
"""
import numpy as np

from db.artifact_store import steady_frame
from ..fpe import build_forward
from ..steady import quasipotential, steady_1d_zero_current, steady_nullspace
from ..schemas import RunConfig
from .base import ExperimentOutput, grid_from_config, model_from_spec


def run_steady(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    model = model_from_spec(config.model)
    grid = grid_from_config(config)
    epsilon = config.steady.epsilon

    L = build_forward(model, grid, config.alpha, "no_flux")
    w = steady_nullspace(L)
    phi = quasipotential(w, epsilon)

    out = ExperimentOutput()
    out.tables["steady_state.csv"] = steady_frame(w, phi)
    out.summary = {
        "model": model.name,
        "alpha": config.alpha,
        "epsilon": epsilon,
        "residual_max": float(np.max(np.abs(L.apply(w.values)))),
        "flagged_nodes": len(phi.flagged_nodes),
    }

    if grid.dim == 1:
        w_q = steady_1d_zero_current(model, grid, config.alpha)
        phi_q = quasipotential(w_q, epsilon)
        out.tables["steady_quadrature.csv"] = steady_frame(w_q, phi_q)
        out.summary["l1_nullspace_vs_quadrature"] = float(np.sum(np.abs(w.values - w_q.values)) * grid.cell_volume)
        out.summary["phi_minima"] = phi.minima()
        out.summary["phi_minima_quadrature"] = phi_q.minima()
    return out
