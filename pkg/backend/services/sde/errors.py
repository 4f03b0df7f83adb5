"""
Exception hierarchy for the alpha-SDE engine.
Hard failures raise one of these; soft failures become report entries instead.
"""
from typing import List, Optional, Sequence

import numpy as np


class SDEError(Exception):
    """Base class for every error raised by the engine."""


class ParameterError(SDEError):
    """A precondition on an argument does not hold."""


class InputError(SDEError):
    """Matrix or array input contains non-finite entries."""


class EvaluationError(SDEError):
    """A model field evaluated to a non-finite value."""

    def __init__(self, message: str, x: Optional[Sequence[float]] = None):
        self.x = None if x is None else np.asarray(x, dtype=float).tolist()
        if self.x is not None:
            message = f"{message} (at x={self.x})"
        super().__init__(message)


class DivergenceError(SDEError):
    """An iterate of the evaluation-point scheme became non-finite."""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} (iteration {iteration})")


class BuildError(SDEError):
    """Operator assembly failed on specific grid nodes."""

    def __init__(self, message: str, nodes: List[int]):
        self.nodes = list(nodes)
        shown = ", ".join(str(n) for n in self.nodes[:10])
        more = f" ... (+{len(self.nodes) - 10})" if len(self.nodes) > 10 else ""
        super().__init__(f"{message}: nodes [{shown}{more}]")


class DomainError(SDEError):
    """Steady-state quadrature needs D > 0 on every node."""


class ConvergenceError(SDEError):
    """An iteration hit its limit before reaching tolerance."""

    def __init__(self, message: str, residual: float):
        self.residual = float(residual)
        super().__init__(f"{message} (residual {self.residual:.3e})")


class EvolutionError(SDEError):
    """The linear solver of a density evolution failed."""


class ConfigError(ParameterError):
    """A run configuration failed validation; messages carry JSON line numbers."""

    def __init__(self, messages: List[str]):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))
