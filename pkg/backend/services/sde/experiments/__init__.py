"""
Experiment nodes, one per RunConfig experiment kind.
"""
from typing import Callable, Dict

from ..schemas import RunConfig
from .acceptance import ACCEPTANCE_CHECKS, run_report_all
from .base import ExperimentOutput
from .fpe_evolve import run_fpe_evolve
from .operators import run_operators
from .reversal import run_reversal
from .simulate import run_simulate
from .steady_state import run_steady
from .wdw import run_wdw

ExperimentFn = Callable[[RunConfig, int], ExperimentOutput]

EXPERIMENT_REGISTRY: Dict[str, ExperimentFn] = {
    "simulate": run_simulate,
    "wdw": run_wdw,
    "fpe-evolve": run_fpe_evolve,
    "operators": run_operators,
    "steady": run_steady,
    "reversal": run_reversal,
    "report-all": run_report_all,
}

__all__ = ["ACCEPTANCE_CHECKS", "EXPERIMENT_REGISTRY", "ExperimentOutput"]
