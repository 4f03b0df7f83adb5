"""
Noise-Induced Drift - the alpha-dependent drift created by state-dependent noise.

a_N is computed two independent ways: from the noise matrix and its Jacobian
(a_N^i = db_ik/dx_m * b_mk) and from the diffusion matrix (a_N^i = dD_ik/dx_k / 2).
Also holds the orthogonal symmetrization of the noise matrix and the drift
reinterpretation between integration senses.
"""
import logging

import numpy as np
from scipy.linalg import polar

from .config import SYMMETRY_TOL
from .errors import EvaluationError, InputError, ParameterError
from .model import SDEModel
from .schemas import AlphaLike, SymmetrizationResult, alpha_value
from .utils import central_jacobian

logger = logging.getLogger(__name__)


def _raise_non_finite(xs: np.ndarray, values: np.ndarray, what: str):
    bad = ~np.all(np.isfinite(values), axis=-1)
    if np.any(bad):
        point = xs if xs.ndim == 1 else xs[bad][0]
        raise EvaluationError(f"{what} is not finite", x=point)


# ==============================================================================
# a_N FROM THE NOISE MATRIX
# ==============================================================================

def a_n_from_b(model: SDEModel, x, check: bool = True) -> np.ndarray:
    """
    Noise-induced drift from b and its Jacobian, vectorized over states.

    Args:
        model: the SDE
        x: state(s), shape (..., n)
        check: raise EvaluationError on non-finite values; ensembles pass False
            and deal with non-finite states per path

    Returns:
        Array of shape (..., n).
    """
    xs = model.states(x)
    J = model.jacobian_at(xs)
    b = model.noise_at(xs)
    a_n = np.einsum("...ikm,...mk->...i", J, b)
    if check:
        _raise_non_finite(xs, a_n, "noise derivative")
    return a_n


# ==============================================================================
# a_N FROM THE DIFFUSION MATRIX
# ==============================================================================

def a_n_from_D(model: SDEModel, x) -> np.ndarray:
    """Half the divergence of the rows of D, by central differences of D = b b^T."""
    xs = model.states(x)

    def diffusion(y):
        b = model.noise_at(y)
        return np.einsum("...ik,...jk->...ij", b, b)

    dD = central_jacobian(diffusion, xs)
    a_n = 0.5 * np.einsum("...ikk->...i", dD)
    _raise_non_finite(xs, a_n, "diffusion derivative")
    return a_n


def effective_drift(model: SDEModel, x, alpha: AlphaLike, check: bool = True) -> np.ndarray:
    """Ito-form drift a + alpha * a_N; a_N is never evaluated at alpha = 0."""
    value = alpha_value(alpha)
    a = model.drift_at(x)
    if value == 0.0:
        return a
    return a + value * a_n_from_b(model, x, check=check)


# ==============================================================================
# SYMMETRIZATION
# ==============================================================================

def symmetrize(B) -> SymmetrizationResult:
    """
    Find an orthogonal O with B . O symmetric.

    Rectangular inputs are completed by zeros to a square matrix first. The
    left polar decomposition B = P . U gives O = U^T and B . O = P, the
    symmetric positive semidefinite factor. Already symmetric inputs return
    O = I unchanged.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.ndim != 2:
        raise ParameterError(f"symmetrize expects a matrix, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise InputError("matrix has non-finite entries")

    n = max(B.shape)
    if B.shape != (n, n):
        padded = np.zeros((n, n))
        padded[: B.shape[0], : B.shape[1]] = B
        B = padded

    scale = float(np.max(np.abs(B)))
    if np.max(np.abs(B - B.T)) <= SYMMETRY_TOL * scale:
        return SymmetrizationResult(B_star=B.copy(), O=np.eye(n))

    U, _ = polar(B, side="left")
    O = U.T
    product = B @ O
    return SymmetrizationResult(B_star=0.5 * (product + product.T), O=O)


def symmetrized_noise(model: SDEModel) -> SDEModel:
    """
    The model with b(x) replaced by b(x) . O(x), O chosen pointwise.

    Square noise only. O(x) comes from the singular value decomposition at each
    state and is not made continuous across sign changes of singular values.
    """
    if model.state_dim != model.noise_dim:
        raise ParameterError("symmetrized_noise needs a square noise matrix")

    def noise(x):
        b = model.noise_at(x)
        W, _, Vh = np.linalg.svd(b)
        O = np.swapaxes(Vh, -1, -2) @ np.swapaxes(W, -1, -2)
        return b @ O

    return model.model_copy(update={
        "name": f"{model.name}[symmetrized]",
        "noise": noise,
        "noise_jacobian": None,
    })


# ==============================================================================
# REINTERPRETATION
# ==============================================================================

def reinterpret(model: SDEModel, alpha_from: AlphaLike, alpha_to: AlphaLike) -> SDEModel:
    """
    Model whose alpha_to dynamics match the alpha_from dynamics of `model`.

    The drift becomes a + (alpha_from - alpha_to) a_N; the noise is unchanged.
    """
    src = alpha_value(alpha_from)
    dst = alpha_value(alpha_to)
    if src == dst:
        return model
    shift = src - dst
    base = model

    def drift(x):
        return base.drift_at(x) + shift * a_n_from_b(base, x, check=False)

    logger.info("Reinterpreting '%s' from alpha=%g to alpha=%g", model.name, src, dst)
    return model.model_copy(update={
        "name": f"{model.name}[alpha {src:g}->{dst:g}]",
        "drift": drift,
        "pure_noise": False,
    })
