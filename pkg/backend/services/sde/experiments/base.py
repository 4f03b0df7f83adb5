"""
Shared pieces of the experiment nodes: the output container and the
RunConfig-to-domain builders.
"""
from typing import Any, Dict, List

from pydantic import BaseModel, ConfigDict, Field

from ..model import SDEModel, build_model
from ..schemas import CheckResult, Grid, ModelSpec, PathFailure, RunConfig


class ExperimentOutput(BaseModel):
    """What an experiment node hands back to the runner."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tables: Dict[str, Any] = Field(default_factory=dict, description="CSV file name -> pandas DataFrame")
    binaries: Dict[str, Any] = Field(default_factory=dict, description="file name -> path array for the binary dump")
    checks: List[CheckResult] = Field(default_factory=list)
    failures: List[PathFailure] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)


def model_from_spec(spec: ModelSpec) -> SDEModel:
    return build_model(spec.preset, spec.params, spec.tables, pure_noise=spec.pure_noise)


def grid_from_config(config: RunConfig) -> Grid:
    return config.grid.to_grid()


def check(test_name: str, quantity: str, expected: float, observed: float, tolerance: float,
          passed: bool) -> CheckResult:
    return CheckResult(
        test_name=test_name, quantity=quantity, expected=float(expected),
        observed=float(observed), tolerance=float(tolerance), passed=bool(passed),
    )
