"""
Operators Node - forward, backward and gap matrices on the configured grid.
Writes each matrix as a coordinate list (row, col, value) plus a norm summary.
"""
import numpy as np
import pandas as pd

from db.artifact_store import operator_frame
from ..fpe import build_backward, build_forward, operator_gap
from ..schemas import RunConfig
from .base import ExperimentOutput, grid_from_config, model_from_spec


def run_operators(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    model = model_from_spec(config.model)
    grid = grid_from_config(config)

    forward = build_forward(model, grid, config.alpha, config.fpe.boundary)
    backward = build_backward(model, grid, config.alpha)
    gap = operator_gap(model, grid, config.alpha)

    difference = (forward.matrix - backward.matrix).tocsr()
    diff_norm = float(np.max(np.abs(difference.data))) if difference.nnz else 0.0

    out = ExperimentOutput()
    out.tables["operator_forward.csv"] = operator_frame(forward)
    out.tables["operator_backward.csv"] = operator_frame(backward)
    out.tables["operator_gap.csv"] = operator_frame(gap)
    out.tables["operator_norms.csv"] = pd.DataFrame({
        "quantity": ["forward_max", "backward_max", "forward_minus_backward_max", "gap_max", "column_sum_max"],
        "value": [forward.max_norm(), backward.max_norm(), diff_norm, gap.max_norm(),
                  float(np.max(np.abs(forward.column_sums())))],
    })
    out.summary = {
        "model": model.name,
        "alpha": config.alpha,
        "boundary": forward.boundary,
        "nodes": grid.size,
        "forward_minus_backward_max": diff_norm,
        "gap_max": gap.max_norm(),
    }
    return out
