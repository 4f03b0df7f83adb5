"""
Steady State Node - stationary densities and the weak-noise quasipotential.

Two routes to w with L w = 0:
- 1-D zero-current quadrature: w ~ D^(alpha-1) exp(int 2a/D dx)
- the null vector of the discrete forward operator (any grid dimension)
"""
import logging

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .config import NULLSPACE_MAX_ITERS, NULLSPACE_SHIFT_SCALE, NULLSPACE_TOL, QUADRATURE_NODES
from .errors import ConvergenceError, DomainError, EvolutionError, ParameterError
from .model import SDEModel
from .schemas import AlphaLike, Grid, GridDensity, OperatorMatrix, Quasipotential, alpha_value

logger = logging.getLogger(__name__)


# ==============================================================================
# ZERO-CURRENT QUADRATURE
# ==============================================================================

def _positive_diffusion(model: SDEModel, x: np.ndarray) -> np.ndarray:
    b = model.noise_at(x[:, None])
    D = np.einsum("nk,nk->n", b[:, 0, :], b[:, 0, :])
    bad = ~np.isfinite(D) | (D <= 0.0)
    if np.any(bad):
        raise DomainError(f"D must be positive; fails at x={x[bad][:5].tolist()}")
    return D


def steady_1d_zero_current(model: SDEModel, grid: Grid, alpha: AlphaLike) -> GridDensity:
    """
    Normalized 1-D density with zero probability current.

    The exponent int 2a/D is accumulated cell by cell with QUADRATURE_NODES
    Gauss-Legendre points (exact for polynomial 2a/D up to degree 7). The
    anchor at the left node only changes the normalization.

    Raises:
        DomainError: D <= 0 (or non-finite) on some node or quadrature point
    """
    if grid.dim != 1 or model.state_dim != 1:
        raise ParameterError("zero-current quadrature is one-dimensional")
    value = alpha_value(alpha)
    x = grid.axes[0].nodes()
    D = _positive_diffusion(model, x)

    nodes, weights = np.polynomial.legendre.leggauss(QUADRATURE_NODES)
    half = 0.5 * grid.spacing[0]
    inner = (0.5 * (x[:-1] + x[1:]))[:, None] + half * nodes[None, :]
    flat = inner.ravel()
    integrand = 2.0 * model.drift_at(flat[:, None])[:, 0] / _positive_diffusion(model, flat)
    exponent = np.concatenate([[0.0], np.cumsum(half * integrand.reshape(inner.shape) @ weights)])
    if value != 1.0:
        exponent = exponent + (value - 1.0) * np.log(D)
    return GridDensity.from_weights(grid, np.exp(exponent - exponent.max()))


# ==============================================================================
# NULL SPACE OF THE FORWARD OPERATOR
# ==============================================================================

def steady_nullspace(L: OperatorMatrix, max_iters: int = NULLSPACE_MAX_ITERS) -> GridDensity:
    """
    Normalized non-negative null vector of a no-flux forward operator.

    Inverse iteration on the implicit Euler map (I - tau L) with a very large
    tau; the null vector is its dominant eigenvector. Converged when
    max|L w| <= NULLSPACE_TOL * max|L| * max|w|.

    Raises:
        ConvergenceError: tolerance not reached within max_iters; carries the residual
    """
    if L.kind != "forward" or L.boundary != "no_flux":
        raise ParameterError("steady_nullspace needs a forward operator with no_flux boundaries")
    grid = L.grid
    norm = L.max_norm()
    if norm == 0.0:
        return GridDensity.from_weights(grid, np.ones(grid.size))

    tau = NULLSPACE_SHIFT_SCALE / norm
    A = (sparse.identity(grid.size, format="csc") - tau * L.matrix).tocsc()
    try:
        lu = splu(A)
    except RuntimeError as e:
        raise EvolutionError(f"implicit Euler matrix could not be factorized: {e}") from e

    w = np.full(grid.size, 1.0 / grid.size)
    residual = np.inf
    for it in range(1, max_iters + 1):
        w = lu.solve(w)
        w = w / w.sum()
        residual = float(np.max(np.abs(L.apply(w))))
        if residual <= NULLSPACE_TOL * norm * float(np.max(np.abs(w))):
            logger.info("Null vector converged after %d iterations (residual %.2e)", it, residual)
            break
    else:
        raise ConvergenceError(f"inverse iteration did not converge in {max_iters} iterations", residual)

    return GridDensity.from_weights(grid, np.where(w < 0.0, 0.0, w))


# ==============================================================================
# QUASIPOTENTIAL
# ==============================================================================

def quasipotential(w: GridDensity, epsilon: float) -> Quasipotential:
    """phi = -epsilon ln(w / max w); nodes with w = 0 get phi = +inf and are flagged."""
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive (got {epsilon})")
    values = w.values
    peak = float(values.max())
    if peak <= 0.0:
        raise ParameterError("density is identically zero")

    positive = values > 0.0
    phi = np.full(values.shape, np.inf)
    phi[positive] = -epsilon * np.log(values[positive] / peak)
    flagged = np.flatnonzero(~positive).tolist()
    if flagged:
        logger.warning("Quasipotential: %d nodes with w = 0 set to +inf", len(flagged))
    return Quasipotential(grid=w.grid, phi=phi, epsilon=epsilon, flagged_nodes=flagged)
