"""
Integration Node - simulates dX = a dt + b dW under any evaluation point alpha.

Two schemes:
- ito_form:    the equivalent Ito step x + b dW + (a + alpha a_N) dt
- alpha_point: b evaluated at x + alpha dX, solved by fixed-point iteration

Plus Wiener increments, Wiener paths and the discretized W dW integral.
Every path draws its noise from its own Philox stream keyed by (seed, path
index), so a path is bitwise identical for any ensemble size or thread count.
"""
import logging
from typing import List, Literal, Sequence, Tuple

import numpy as np

from .config import (
    DEFAULT_PICARD_ITERS,
    MIN_WDW_STEPS,
    NOISE_CHUNK,
    PATH_BLOCK,
    STREAM_INCREMENTS,
    STREAM_PATHS,
    STREAM_WDW,
    WDW_BLOCK,
)
from .errors import DivergenceError, EvaluationError, ParameterError
from .model import SDEModel
from .noise_drift import a_n_from_b
from .schemas import AlphaLike, Ensemble, PathFailure, WienerIncrements, alpha_value
from .utils import blocks, map_ordered, path_streams, stream

logger = logging.getLogger(__name__)

Scheme = Literal["ito_form", "alpha_point"]


# ==============================================================================
# WIENER PROCESS
# ==============================================================================

def wiener_increments(seed: int, m: int, dt: float, steps: int) -> WienerIncrements:
    """i.i.d. N(0, dt) increments of m independent Wiener processes."""
    if not dt > 0:
        raise ParameterError(f"dt must be positive (got {dt})")
    if steps < 1:
        raise ParameterError(f"steps must be at least 1 (got {steps})")
    if m < 1:
        raise ParameterError(f"noise dimension must be at least 1 (got {m})")

    rng = stream(seed, STREAM_INCREMENTS)
    increments = rng.standard_normal((steps, m)) * np.sqrt(dt)
    return WienerIncrements(steps=steps, dt=dt, m=m, increments=increments, seed=seed)


def wiener_path(increments: WienerIncrements) -> np.ndarray:
    """W at the grid times 0, dt, ..., steps*dt; shape (steps + 1, m), W(0) = 0."""
    path = np.zeros((increments.steps + 1, increments.m))
    np.cumsum(increments.increments, axis=0, out=path[1:])
    return path


# ==============================================================================
# SINGLE STEPS
# ==============================================================================

def _noise_term(model: SDEModel, x: np.ndarray, dW: np.ndarray) -> np.ndarray:
    return np.einsum("...ik,...k->...i", model.noise_at(x), dW)


def _ito_form(model: SDEModel, x: np.ndarray, dt: float, dW: np.ndarray, alpha: float,
              check: bool) -> np.ndarray:
    drift = model.drift_at(x)
    if alpha != 0.0:
        drift = drift + alpha * a_n_from_b(model, x, check=check)
    return x + (_noise_term(model, x, dW) + drift * dt)


def _alpha_point(model: SDEModel, x: np.ndarray, dt: float, dW: np.ndarray, alpha: float,
                 picard_iters: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns (x + dX, first_bad) where first_bad is the first fixed-point
    iteration (0 = initial guess) at which a state went non-finite, or -1.
    """
    drift_dt = model.drift_at(x) * dt
    dX = _noise_term(model, x, dW) + drift_dt
    first_bad = np.where(np.all(np.isfinite(dX), axis=-1), -1, 0)
    for it in range(1, picard_iters + 1):
        dX = _noise_term(model, x + alpha * dX, dW) + drift_dt
        newly = (first_bad < 0) & ~np.all(np.isfinite(dX), axis=-1)
        first_bad = np.where(newly, it, first_bad)
    return x + dX, first_bad


def _step_args(model: SDEModel, x, dt: float, dW) -> Tuple[np.ndarray, np.ndarray]:
    if not dt > 0:
        raise ParameterError(f"dt must be positive (got {dt})")
    xs = model.states(x)
    dW = np.asarray(dW, dtype=float).reshape(xs.shape[:-1] + (model.noise_dim,))
    return xs, dW


def step_ito_form(model: SDEModel, x, dt: float, dW, alpha: AlphaLike) -> np.ndarray:
    """One step of the equivalent Ito form: x + b(x) dW + [a(x) + alpha a_N(x)] dt."""
    xs, dW = _step_args(model, x, dt, dW)
    out = _ito_form(model, xs, dt, dW, alpha_value(alpha), check=True)
    if not np.all(np.isfinite(out)):
        raise EvaluationError("step produced a non-finite state", x=xs if xs.ndim == 1 else None)
    return out


def step_alpha_point(model: SDEModel, x, dt: float, dW, alpha: AlphaLike,
                     picard_iters: int = DEFAULT_PICARD_ITERS) -> np.ndarray:
    """
    One step of the evaluation-point scheme.

    Solves dX = b(x + alpha dX) dW + a(x) dt by fixed-point iteration from
    dX_0 = b(x) dW + a(x) dt. The drift is always evaluated at x.

    Raises:
        DivergenceError: an iterate became non-finite; carries the iteration index
    """
    if picard_iters < 1:
        raise ParameterError(f"picard_iters must be at least 1 (got {picard_iters})")
    xs, dW = _step_args(model, x, dt, dW)
    with np.errstate(invalid="ignore", over="ignore"):
        out, first_bad = _alpha_point(model, xs, dt, dW, alpha_value(alpha), picard_iters)
    bad = np.atleast_1d(first_bad)
    if np.any(bad >= 0):
        raise DivergenceError("fixed-point iterate is not finite", iteration=int(bad[bad >= 0].min()))
    return out


# ==============================================================================
# ENSEMBLES
# ==============================================================================

def _run_block(model: SDEModel, x0: np.ndarray, dt: float, steps: int, alpha: float,
               scheme: Scheme, picard_iters: int, seed: int, keep_paths: bool,
               block: Tuple[int, int, int]):
    _, start, count = block
    streams = path_streams(seed, STREAM_PATHS, start, count)
    sqrt_dt = np.sqrt(dt)

    x = np.tile(x0, (count, 1))
    paths = np.empty((count, steps + 1, x0.size)) if keep_paths else None
    if keep_paths:
        paths[:, 0] = x
    failed_at = np.full(count, -1)
    reasons = {}

    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        for step in range(1, steps + 1):
            k = (step - 1) % NOISE_CHUNK
            if k == 0:
                width = min(NOISE_CHUNK, steps - step + 1)
                noise = np.stack([g.standard_normal((width, model.noise_dim)) for g in streams]) * sqrt_dt
            dW = noise[:, k]
            if scheme == "ito_form":
                x = _ito_form(model, x, dt, dW, alpha, check=False)
                newly = (failed_at < 0) & ~np.all(np.isfinite(x), axis=-1)
                for i in np.flatnonzero(newly):
                    reasons[int(i)] = "non-finite state"
            else:
                x, first_bad = _alpha_point(model, x, dt, dW, alpha, picard_iters)
                newly = (failed_at < 0) & ((first_bad >= 0) | ~np.all(np.isfinite(x), axis=-1))
                for i in np.flatnonzero(newly):
                    it = int(first_bad[i])
                    reasons[int(i)] = f"fixed-point iterate {it} diverged" if it >= 0 else "non-finite state"
            failed_at[newly] = step
            if keep_paths:
                paths[:, step] = x

    failures = [
        PathFailure(path_id=start + int(i), step=int(failed_at[i]), reason=reasons[int(i)])
        for i in np.flatnonzero(failed_at >= 0)
    ]
    return x, paths, failures


def simulate_ensemble(model: SDEModel, x0: Sequence[float], T: float, dt: float, alpha: AlphaLike,
                      scheme: Scheme = "ito_form", n_paths: int = 10_000, seed: int = 0,
                      picard_iters: int = DEFAULT_PICARD_ITERS, keep_paths: bool = False,
                      threads: int = 1) -> Ensemble:
    """
    Simulate n_paths independent paths from x0 up to time T.

    The step count is round(T / dt) and dt is adjusted to T / steps. Paths that
    go non-finite are recorded as failures and the run continues.
    """
    if not T > 0:
        raise ParameterError(f"T must be positive (got {T})")
    if not 0 < dt <= T:
        raise ParameterError(f"dt must satisfy 0 < dt <= T (got dt={dt}, T={T})")
    if n_paths < 1:
        raise ParameterError(f"n_paths must be at least 1 (got {n_paths})")
    if scheme not in ("ito_form", "alpha_point"):
        raise ParameterError(f"unknown scheme '{scheme}'")
    if picard_iters < 1:
        raise ParameterError(f"picard_iters must be at least 1 (got {picard_iters})")

    start = model.states(x0).astype(float).ravel()
    value = alpha_value(alpha)
    steps = max(1, int(round(T / dt)))
    step_dt = T / steps
    if abs(step_dt - dt) > 1e-12 * dt:
        logger.warning("dt adjusted from %g to %g to fit %d steps into T=%g", dt, step_dt, steps, T)

    logger.info(
        "Simulating %d paths of '%s' (alpha=%g, scheme=%s, %d steps)",
        n_paths, model.name, value, scheme, steps,
    )

    def run(block):
        return _run_block(model, start, step_dt, steps, value, scheme, picard_iters, seed, keep_paths, block)

    results = map_ordered(run, blocks(n_paths, PATH_BLOCK), threads)

    endpoints = np.concatenate([r[0] for r in results], axis=0)
    paths = np.concatenate([r[1] for r in results], axis=0) if keep_paths else None
    failures: List[PathFailure] = [f for r in results for f in r[2]]
    if failures:
        logger.warning("%d of %d paths failed", len(failures), n_paths)

    return Ensemble(
        model_name=model.name, alpha=value, scheme=scheme, x0=start.tolist(), T=T, dt=step_dt,
        steps=steps, n_paths=n_paths, seed=seed, endpoints=endpoints, paths=paths, failures=failures,
    )


# ==============================================================================
# W dW REFERENCE INTEGRAL
# ==============================================================================

def _wdw_block(seed: int, t: float, steps: int, alpha: float, block: Tuple[int, int, int]) -> np.ndarray:
    _, start, count = block
    streams = path_streams(seed, STREAM_WDW, start, count)
    dW = np.stack([g.standard_normal(steps) for g in streams]) * np.sqrt(t / steps)
    W_left = np.cumsum(dW, axis=1) - dW
    return np.sum((W_left + alpha * dW) * dW, axis=1)


def wdw_samples(seed: int, t: float, steps: int, alpha: AlphaLike, n_paths: int,
                threads: int = 1) -> np.ndarray:
    """
    Samples of sum_i W(tau_i + alpha dtau) dW_i over [0, t].

    W inside each subinterval is interpolated linearly, so the evaluation-point
    value is W(tau_i) + alpha dW_i. Mean alpha t, variance close to t^2 / 2.
    """
    if steps < MIN_WDW_STEPS:
        raise ParameterError(f"steps must be at least {MIN_WDW_STEPS} (got {steps})")
    if not t > 0:
        raise ParameterError(f"t must be positive (got {t})")
    if n_paths < 1:
        raise ParameterError(f"n_paths must be at least 1 (got {n_paths})")
    value = alpha_value(alpha)

    logger.info("Sampling %d W dW integrals (alpha=%g, %d subintervals)", n_paths, value, steps)
    parts = map_ordered(lambda b: _wdw_block(seed, t, steps, value, b), blocks(n_paths, WDW_BLOCK), threads)
    return np.concatenate(parts)

