"""
W dW Node - samples of the discretized stochastic integral of W against itself.
Mean alpha t and variance t^2 / 2 land in the run summary.
"""
import numpy as np
import pandas as pd

from ..integrate import wdw_samples
from ..schemas import RunConfig
from .base import ExperimentOutput


def run_wdw(config: RunConfig, threads: int = 1) -> ExperimentOutput:
    sim = config.sim
    samples = wdw_samples(sim.seed, sim.T, sim.steps, config.alpha, sim.n_paths, threads=threads)

    out = ExperimentOutput()
    out.tables["wdw_samples.csv"] = pd.DataFrame({"sample_id": np.arange(samples.size), "value": samples})
    out.summary = {
        "alpha": config.alpha,
        "t": sim.T,
        "steps": sim.steps,
        "n_samples": int(samples.size),
        "mean": float(samples.mean()),
        "expected_mean": config.alpha * sim.T,
        "variance": float(samples.var(ddof=1)) if samples.size > 1 else 0.0,
        "expected_variance": 0.5 * sim.T ** 2,
    }
    return out
