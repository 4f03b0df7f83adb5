"""
Fokker-Planck Node - forward and backward operators on cell-centred grids.

Forward:  L w  = div[ -v w + (D/2) grad w ]
Backward: L+ u = v . grad u + div[ (D/2) grad u ]
with the effective drift v = a + (alpha - 1) a_N.

The forward operator is assembled in flux form: each interior face carries
one flux that enters its left cell with + and its right cell with -, so the
columns of L sum to zero under no-flux boundaries. Diffusive and advective
parts are assembled separately; the diffusive part is shared by L and L+, so
at alpha = 1 with a = 0 the two matrices agree entry for entry.
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import splu

from .config import NEGATIVE_LOBE_TOL, PEAK_TIE_TOL, PSD_TOL
from .errors import BuildError, EvolutionError, ParameterError
from .model import SDEModel
from .noise_drift import a_n_from_b
from .schemas import (
    AlphaLike,
    CurrentField,
    DensityEvolution,
    ExtremumRecord,
    Grid,
    GridDensity,
    OperatorMatrix,
    alpha_value,
)
from .utils import refine_peak

logger = logging.getLogger(__name__)

Boundary = Literal["no_flux", "absorbing"]


# ==============================================================================
# FIELD EVALUATION
# ==============================================================================

def _velocity(model: SDEModel, points: np.ndarray, alpha: float) -> np.ndarray:
    """v = a + (alpha - 1) a_N; a_N is not evaluated at alpha = 1."""
    v = model.drift_at(points)
    if alpha != 1.0:
        v = v + (alpha - 1.0) * a_n_from_b(model, points, check=False)
    return v


def _diffusion(model: SDEModel, points: np.ndarray) -> np.ndarray:
    b = model.noise_at(points)
    return np.einsum("...ik,...jk->...ij", b, b)


def _check_fields(D: Optional[np.ndarray], v: Optional[np.ndarray], owners: np.ndarray, what: str):
    bad = np.zeros(owners.shape, dtype=bool)
    if D is not None:
        bad |= ~np.all(np.isfinite(D), axis=(-2, -1))
    if v is not None:
        bad |= ~np.all(np.isfinite(v), axis=-1)
    if np.any(bad):
        raise BuildError(f"non-finite {what} coefficients", sorted(set(owners[bad].tolist())))
    if D is None:
        return

    scale = max(float(np.max(np.abs(D))), np.finfo(float).tiny)
    min_eig = np.linalg.eigvalsh(0.5 * (D + np.swapaxes(D, -1, -2)))[..., 0]
    indefinite = min_eig < -PSD_TOL * scale
    if np.any(indefinite):
        raise BuildError(f"diffusion matrix is not positive semidefinite at {what}", sorted(set(owners[indefinite].tolist())))


# ==============================================================================
# GRID TOPOLOGY
# ==============================================================================

def _index(grid: Grid) -> np.ndarray:
    return np.arange(grid.size).reshape(grid.shape)


def _interior_faces(grid: Grid, axis: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(left cells, right cells, face centres) of the faces normal to `axis`."""
    idx = _index(grid)
    lo = [slice(None)] * grid.dim
    hi = [slice(None)] * grid.dim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    left = idx[tuple(lo)].ravel()
    right = idx[tuple(hi)].ravel()
    centres = grid.points()[left]
    centres[:, axis] += 0.5 * grid.spacing[axis]
    return left, right, centres


def _boundary_faces(grid: Grid, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """(boundary cells, face centres) of the box faces normal to `axis`."""
    idx = _index(grid)
    pts = grid.points()
    cells, centres = [], []
    for end, sign in ((0, -1.0), (grid.shape[axis] - 1, 1.0)):
        sl = [slice(None)] * grid.dim
        sl[axis] = end
        c = idx[tuple(sl)].ravel()
        f = pts[c].copy()
        f[:, axis] += sign * 0.5 * grid.spacing[axis]
        cells.append(c)
        centres.append(f)
    return np.concatenate(cells), np.concatenate(centres)


def _neighbours(grid: Grid, cells: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clamped (up, down) neighbours along `axis` and the actual span between them."""
    multi = list(np.unravel_index(cells, grid.shape))
    j = multi[axis]
    up_j = np.minimum(j + 1, grid.shape[axis] - 1)
    dn_j = np.maximum(j - 1, 0)
    multi[axis] = up_j
    up = np.ravel_multi_index(tuple(multi), grid.shape)
    multi[axis] = dn_j
    dn = np.ravel_multi_index(tuple(multi), grid.shape)
    span = (up_j - dn_j) * grid.spacing[axis]
    return up, dn, span


class _Triplets:
    """COO accumulator in the (data, (row, col)) layout scipy.sparse takes."""

    def __init__(self, size: int):
        self.size = size
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add(self, rows, cols, vals):
        self.rows.append(np.asarray(rows))
        self.cols.append(np.asarray(cols))
        self.vals.append(np.asarray(vals, dtype=float))

    def to_csr(self) -> sparse.csr_matrix:
        if not self.rows:
            return sparse.csr_matrix((self.size, self.size))
        data = np.concatenate(self.vals)
        rows = np.concatenate(self.rows)
        cols = np.concatenate(self.cols)
        matrix = sparse.csr_matrix((data, (rows, cols)), shape=(self.size, self.size))
        matrix.sum_duplicates()
        return matrix


# ==============================================================================
# ASSEMBLY
# ==============================================================================

def _diffusive_part(model: SDEModel, grid: Grid, boundary: Boundary) -> sparse.csr_matrix:
    """div[(D/2) grad w] with face-centred D and a corner-averaged cross stencil."""
    acc = _Triplets(grid.size)
    for d in range(grid.dim):
        h = grid.spacing[d]
        left, right, centres = _interior_faces(grid, d)
        D = _diffusion(model, centres)
        _check_fields(D, None, left, "faces")

        c = 0.5 * D[:, d, d] / h
        # face flux G = c (w_R - w_L) + cross terms; +G/h on the left row, -G/h on the right row
        acc.add(left, right, c / h)
        acc.add(left, left, -c / h)
        acc.add(right, right, -c / h)
        acc.add(right, left, c / h)

        for b in range(grid.dim):
            if b == d:
                continue
            q = 0.25 * D[:, d, b] / h
            for cell in (left, right):
                up, dn, span = _neighbours(grid, cell, b)
                coef = q / span
                acc.add(left, up, coef)
                acc.add(left, dn, -coef)
                acc.add(right, up, -coef)
                acc.add(right, dn, coef)

        if boundary == "absorbing":
            cells, faces = _boundary_faces(grid, d)
            Db = _diffusion(model, faces)
            _check_fields(Db, None, cells, "boundary faces")
            acc.add(cells, cells, -Db[:, d, d] / h ** 2)
    return acc.to_csr()


def _forward_advection(model: SDEModel, grid: Grid, alpha: float) -> sparse.csr_matrix:
    """-div(v w) with face-centred v and the face average of w."""
    acc = _Triplets(grid.size)
    for d in range(grid.dim):
        h = grid.spacing[d]
        left, right, centres = _interior_faces(grid, d)
        v = _velocity(model, centres, alpha)
        _check_fields(None, v, left, "faces")
        half = 0.5 * v[:, d] / h
        acc.add(left, left, -half)
        acc.add(left, right, -half)
        acc.add(right, left, half)
        acc.add(right, right, half)
    return acc.to_csr()


def _backward_advection(model: SDEModel, grid: Grid, alpha: float) -> sparse.csr_matrix:
    """v . grad u at nodes; centred differences, one-sided at the box edges."""
    acc = _Triplets(grid.size)
    nodes = np.arange(grid.size)
    v = _velocity(model, grid.points(), alpha)
    _check_fields(None, v, nodes, "nodes")
    for d in range(grid.dim):
        up, dn, span = _neighbours(grid, nodes, d)
        coef = v[:, d] / span
        acc.add(nodes, up, coef)
        acc.add(nodes, dn, -coef)
    return acc.to_csr()


def _has_drift(model: SDEModel, alpha: float) -> bool:
    return not (model.pure_noise and alpha == 1.0)


def _check_grid(model: SDEModel, grid: Grid):
    if grid.dim != model.state_dim:
        raise ParameterError(f"grid has dimension {grid.dim}, model '{model.name}' has {model.state_dim}")


def build_forward(model: SDEModel, grid: Grid, alpha: AlphaLike, boundary: Boundary = "no_flux") -> OperatorMatrix:
    """
    Forward (Fokker-Planck) operator in flux form.

    Raises:
        BuildError: non-finite or indefinite coefficients; lists the nodes
    """
    _check_grid(model, grid)
    if boundary not in ("no_flux", "absorbing"):
        raise ParameterError(f"unknown boundary '{boundary}'")
    value = alpha_value(alpha)
    matrix = _diffusive_part(model, grid, boundary)
    if _has_drift(model, value):
        matrix = matrix + _forward_advection(model, grid, value)
    logger.debug("Built forward operator for '%s' (alpha=%g, %s, nnz=%d)", model.name, value, boundary, matrix.nnz)
    return OperatorMatrix(grid=grid, matrix=matrix.tocsr(), kind="forward", alpha=value, boundary=boundary)


def build_backward(model: SDEModel, grid: Grid, alpha: AlphaLike) -> OperatorMatrix:
    """Backward operator; its diffusive part is the no-flux forward one."""
    _check_grid(model, grid)
    value = alpha_value(alpha)
    matrix = _diffusive_part(model, grid, "no_flux")
    if _has_drift(model, value):
        matrix = matrix + _backward_advection(model, grid, value)
    return OperatorMatrix(grid=grid, matrix=matrix.tocsr(), kind="backward", alpha=value, boundary="no_flux")


def operator_gap(model: SDEModel, grid: Grid, alpha: AlphaLike) -> OperatorMatrix:
    """
    L - L+ of the pure-noise companion of `model`.

    The shared diffusive part cancels exactly, so only the two advective parts
    are assembled; the result is linear in (1 - alpha) entry by entry.
    """
    _check_grid(model, grid)
    value = alpha_value(alpha)
    pure = model.without_drift()
    if value == 1.0:
        matrix = sparse.csr_matrix((grid.size, grid.size))
    else:
        matrix = (_forward_advection(pure, grid, value) - _backward_advection(pure, grid, value)).tocsr()
    return OperatorMatrix(grid=grid, matrix=matrix, kind="gap", alpha=value, boundary="no_flux")


# ==============================================================================
# PROBABILITY CURRENT
# ==============================================================================

def _axis_slope(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """
    Fourth-order derivative along `axis`: five-point centred in the interior,
    five-point one-sided on the two outermost nodes of each end (axes have at
    least MIN_GRID_POINTS nodes).
    """
    f = np.moveaxis(f, axis, 0)
    out = np.empty_like(f)
    out[2:-2] = f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]
    out[0] = -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
    out[1] = -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
    out[-2] = 3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]
    out[-1] = 25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]
    return np.moveaxis(out / (12.0 * h), 0, axis)


def _density_gradient(grid: Grid, w: np.ndarray) -> np.ndarray:
    """
    grad w at nodes as w * grad(ln w) wherever the stencil sees positive w,
    second-order differences of w elsewhere.

    The logarithm is shifted by its maximum first, so a flat density has an
    exactly zero gradient.
    """
    values = grid.unravel(w)
    positive = values > 0.0
    with np.errstate(divide="ignore"):
        log_w = np.where(positive, np.log(np.where(positive, values, 1.0)), -np.inf)
    if np.any(positive):
        log_w = log_w - log_w[positive].max()

    grad = np.zeros((grid.size, grid.dim))
    for d, h in enumerate(grid.spacing):
        with np.errstate(invalid="ignore"):
            slope = _axis_slope(log_w, h, d)
        logarithmic = np.isfinite(slope) & positive
        with np.errstate(invalid="ignore"):
            estimate = np.where(logarithmic, values * slope, np.gradient(values, h, axis=d))
        grad[:, d] = estimate.ravel()
    return grad


def probability_current(model: SDEModel, grid: Grid, w: GridDensity, alpha: AlphaLike) -> CurrentField:
    """
    J = [a + (alpha - 1) a_N] w - (D/2) grad w at every node.

    grad w is w times a fourth-order difference of ln w, so the density from
    steady_1d_zero_current carries a current of order h^4 only.
    """
    _check_grid(model, grid)
    if w.grid != grid:
        raise ParameterError("density lives on a different grid")
    value = alpha_value(alpha)
    pts = grid.points()
    v = _velocity(model, pts, value)
    D = _diffusion(model, pts)
    g = _density_gradient(grid, w.values)
    J = v * w.values[:, None] - 0.5 * np.einsum("nij,nj->ni", D, g)
    if not np.all(np.isfinite(J)):
        bad = np.flatnonzero(~np.all(np.isfinite(J), axis=-1))
        raise BuildError("probability current is not finite", bad.tolist())
    return CurrentField(grid=grid, values=J)


# ==============================================================================
# TIME EVOLUTION
# ==============================================================================

def default_time_step(model: SDEModel, grid: Grid) -> float:
    """h_min^2 / (2 max D) over the nodes."""
    D = _diffusion(model, grid.points())
    d_max = float(np.max(np.abs(D)))
    if not np.isfinite(d_max) or d_max <= 0.0:
        raise ParameterError(f"cannot derive a time step from max D = {d_max}")
    return min(grid.spacing) ** 2 / (2.0 * d_max)


def evolve_density(model: SDEModel, grid: Grid, w0: GridDensity, T: float, dt: Optional[float] = None,
                   alpha: AlphaLike = 1.0, boundary: Boundary = "no_flux", snapshots: int = 10,
                   times: Optional[Sequence[float]] = None) -> DensityEvolution:
    """
    Crank-Nicolson evolution of w_t = L w.

    Args:
        model: the SDE
        grid: grid of w0
        w0: initial density
        T: final time
        dt: time step, default h_min^2 / (2 max D); adjusted so T is a whole number of steps
        alpha: integration sense
        boundary: no_flux or absorbing
        snapshots: number of equally spaced snapshots after t = 0 (ignored when times is given)
        times: explicit snapshot times in [0, T]

    Returns:
        DensityEvolution with clamped snapshots; negative lobes below
        NEGATIVE_LOBE_TOL * max w are reported as warnings.
    """
    if not T > 0:
        raise ParameterError(f"T must be positive (got {T})")
    if w0.grid != grid:
        raise ParameterError("initial density lives on a different grid")
    step = default_time_step(model, grid) if dt is None else float(dt)
    if not step > 0:
        raise ParameterError(f"dt must be positive (got {dt})")
    steps = max(1, int(np.ceil(T / step - 1e-9)))
    step = T / steps

    if times is None:
        if snapshots < 1:
            raise ParameterError(f"snapshots must be at least 1 (got {snapshots})")
        times = [T * k / snapshots for k in range(snapshots + 1)]
    wanted = sorted({int(round(t / step)) for t in times if -1e-12 <= t <= T * (1 + 1e-12)})
    if not wanted:
        raise ParameterError("no snapshot time lies in [0, T]")

    L = build_forward(model, grid, alpha, boundary).matrix.tocsc()
    eye = sparse.identity(grid.size, format="csc")
    try:
        lhs = splu((eye - 0.5 * step * L).tocsc())
    except RuntimeError as e:
        raise EvolutionError(f"Crank-Nicolson matrix could not be factorized: {e}") from e
    rhs = (eye + 0.5 * step * L).tocsr()

    logger.info("Evolving density of '%s' for %d steps (dt=%.3e, %s)", model.name, steps, step, boundary)
    w = w0.values.astype(float).copy()
    cell = grid.cell_volume
    mass = w.sum() * cell
    max_mass_change = 0.0
    min_relative = 0.0
    out: List[GridDensity] = []
    if 0 in wanted:
        out.append(GridDensity(grid=grid, values=w, t=0.0))

    for n in range(1, steps + 1):
        w = lhs.solve(rhs @ w)
        if not np.all(np.isfinite(w)):
            raise EvolutionError(f"density became non-finite at step {n}")
        new_mass = w.sum() * cell
        max_mass_change = max(max_mass_change, abs(new_mass - mass))
        mass = new_mass
        peak = float(np.max(w))
        if peak > 0:
            min_relative = min(min_relative, float(np.min(w)) / peak)
        if n in wanted:
            out.append(GridDensity(grid=grid, values=w, t=n * step))

    warnings: List[str] = []
    if min_relative < -NEGATIVE_LOBE_TOL:
        msg = f"negative density lobe of {min_relative:.2e} relative to the maximum"
        logger.warning(msg)
        warnings.append(msg)
    if boundary == "no_flux" and max_mass_change > 1e-12:
        msg = f"mass changed by up to {max_mass_change:.2e} per step"
        logger.warning(msg)
        warnings.append(msg)

    return DensityEvolution(
        snapshots=out, dt=step, steps=steps, alpha=alpha_value(alpha), boundary=boundary,
        max_step_mass_change=max_mass_change, min_relative_value=min_relative, warnings=warnings,
    )


# ==============================================================================
# EXTREMA
# ==============================================================================

def extremum_track(snapshots: Sequence[GridDensity]) -> List[ExtremumRecord]:
    """
    Position of the maximum of each snapshot, refined by a parabola per axis.

    A maximum is unique when the nodes within PEAK_TIE_TOL of it form one
    connected region; a flat top across neighbouring nodes is still unique.
    """
    records = []
    for snap in snapshots:
        grid = snap.grid
        values = grid.unravel(snap.values)
        flat = int(np.argmax(snap.values))
        multi = np.unravel_index(flat, grid.shape)
        peak = snap.values[flat]

        position = []
        for d, ax in enumerate(grid.axes):
            line = list(multi)
            line[d] = slice(None)
            offset = refine_peak(values[tuple(line)], int(multi[d]))
            position.append(float(ax.nodes()[multi[d]] + offset * ax.spacing))

        on_boundary = any(int(j) in (0, n - 1) for j, n in zip(multi, grid.shape))
        # one label per separate region within PEAK_TIE_TOL of the peak
        _, humps = ndimage.label(values >= peak * (1.0 - PEAK_TIE_TOL))
        unique = humps == 1
        if on_boundary:
            logger.warning("Maximum at t=%g sits on the grid boundary (node %d)", snap.t, flat)
        records.append(ExtremumRecord(t=snap.t, index=flat, position=position, on_boundary=on_boundary, unique=unique))
    return records
