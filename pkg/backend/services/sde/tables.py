"""
Coefficient tables for drift and noise fields.

Every drift component and every noise-matrix entry is a sum of terms
    coef * prod_j x_j**p_j * g(scale * x[axis]),   g in {one, sin, cos, tanh, exp}
optionally wrapped in a square root. Tables serialize to JSON and give exact
Jacobians, so presets never need an expression interpreter.
"""
from typing import Callable, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# ==============================================================================
# BASIS FUNCTIONS
# ==============================================================================

_BASIS = {
    "one": (lambda u: np.ones_like(u), lambda u: np.zeros_like(u)),
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda u: -np.sin(u)),
    "tanh": (np.tanh, lambda u: 1.0 - np.tanh(u) ** 2),
    "exp": (np.exp, np.exp),
}


# ==============================================================================
# TABLE SCHEMAS
# ==============================================================================

class Term(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    coef: float
    powers: List[int] = Field(default_factory=list, description="exponent per state component")
    func: Literal["one", "sin", "cos", "tanh", "exp"] = "one"
    axis: int = Field(default=0, ge=0)
    scale: float = 1.0

    @model_validator(mode="after")
    def _nonnegative_powers(self):
        if any(p < 0 for p in self.powers):
            raise ValueError(f"powers must be non-negative, got {self.powers}")
        return self

    def _monomial(self, x: np.ndarray, skip: int = -1) -> np.ndarray:
        out = np.ones(x.shape[:-1])
        for j, p in enumerate(self.powers):
            if p and j != skip:
                out = out * x[..., j] ** p
        return out

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        g, _ = _BASIS[self.func]
        return self.coef * self._monomial(x) * g(self.scale * x[..., self.axis])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g, dg = _BASIS[self.func]
        u = self.scale * x[..., self.axis]
        grad = np.zeros(x.shape)
        for k, p in enumerate(self.powers):
            if p:
                partial = p * x[..., k] ** (p - 1) * self._monomial(x, skip=k)
                grad[..., k] += self.coef * partial * g(u)
        if self.func != "one":
            grad[..., self.axis] += self.coef * self._monomial(x) * dg(u) * self.scale
        return grad


class Component(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    terms: List[Term] = Field(default_factory=list)
    transform: Literal["identity", "sqrt"] = "identity"

    def _sum(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(x.shape[:-1])
        for term in self.terms:
            total = total + term.evaluate(x)
        return total

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        s = self._sum(x)
        if self.transform == "sqrt":
            with np.errstate(invalid="ignore"):
                return np.sqrt(s)
        return s

    def gradient(self, x: np.ndarray) -> np.ndarray:
        grad = np.zeros(x.shape)
        for term in self.terms:
            grad = grad + term.gradient(x)
        if self.transform == "sqrt":
            with np.errstate(invalid="ignore", divide="ignore"):
                grad = grad / (2.0 * np.sqrt(self._sum(x)))[..., None]
        return grad


class FieldTables(BaseModel):
    """Drift (n components) and noise (n rows of m entries) of an SDE."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    drift: List[Component] = Field(min_length=1)
    noise: List[List[Component]] = Field(min_length=1)

    @model_validator(mode="after")
    def _consistent(self):
        n = len(self.drift)
        if len(self.noise) != n:
            raise ValueError(f"noise has {len(self.noise)} rows but drift has {n} components")
        widths = {len(row) for row in self.noise}
        if len(widths) != 1 or 0 in widths:
            raise ValueError("noise rows must all have the same positive length")
        for comp in self.drift + [c for row in self.noise for c in row]:
            for term in comp.terms:
                if len(term.powers) > n or term.axis >= n:
                    raise ValueError(f"term {term.model_dump()} refers to a component beyond state_dim={n}")
        return self

    @property
    def state_dim(self) -> int:
        return len(self.drift)

    @property
    def noise_dim(self) -> int:
        return len(self.noise[0])

    # ------------------------------------------------------------------
    # Vectorized callables: x has shape (..., n)
    # ------------------------------------------------------------------

    def drift_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        def drift(x):
            return np.stack([c.evaluate(x) for c in self.drift], axis=-1)
        return drift

    def noise_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        def noise(x):
            rows = [np.stack([c.evaluate(x) for c in row], axis=-1) for row in self.noise]
            return np.stack(rows, axis=-2)
        return noise

    def noise_jacobian_fn(self) -> Callable[[np.ndarray], np.ndarray]:
        """J[..., i, k, j] = d b_ik / d x_j."""
        def jacobian(x):
            rows = [np.stack([c.gradient(x) for c in row], axis=-2) for row in self.noise]
            return np.stack(rows, axis=-3)
        return jacobian


def constant(value: float) -> Component:
    return Component(terms=[Term(coef=value)] if value else [])


def monomial(coef: float, powers: List[int]) -> Term:
    return Term(coef=coef, powers=powers)
