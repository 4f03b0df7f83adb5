import numpy as np
import pytest

from conftest import scalar_model, zeros
from services.sde.errors import DomainError, ParameterError
from services.sde.fpe import build_backward, build_forward, probability_current
from services.sde.model import build_model
from services.sde.noise_drift import a_n_from_b
from services.sde.schemas import Grid, GridDensity
from services.sde.steady import quasipotential, steady_1d_zero_current, steady_nullspace


def l1(a, b):
    return float(np.sum(np.abs(a.values - b.values)) * a.grid.cell_volume)


# one-dimensional presets with D > 0 everywhere
POSITIVE_D_PRESETS = [
    ("ou", {}),
    ("tanh-diffusion", {}),
    ("sine-diffusion", {}),
    ("quadratic-diffusion", {}),
    ("double-well", {"eps": 0.05}),
    ("double-well", {"eps": 0.5}),
]


# ==============================================================================
# Null vector
# ==============================================================================

def test_ou_null_vector_is_the_standard_normal():
    model = build_model("ou")
    grid = Grid.line(-6.0, 6.0, 512)
    L = build_forward(model, grid, 1.0)
    w = steady_nullspace(L)
    x = grid.points()[:, 0]
    normal = np.exp(-0.5 * x ** 2) / np.sqrt(2 * np.pi)
    assert w.mass() == pytest.approx(1.0)
    assert np.max(np.abs(w.values - normal)) <= 1e-3
    assert w.variance() == pytest.approx(1.0, rel=5e-3)
    assert np.max(np.abs(L.apply(w.values))) <= 1e-8 * L.max_norm()


def test_anti_ito_pure_noise_null_vector_is_flat(tanh_pure, line_grid):
    w = steady_nullspace(build_forward(tanh_pure, line_grid, 1.0))
    spread = (w.values.max() - w.values.min()) / w.values.max()
    assert spread <= 1e-6


def test_zero_operator_gives_the_uniform_density(line_grid):
    frozen = scalar_model("frozen", zeros, lambda x: np.zeros(np.shape(x) + (1,)))
    w = steady_nullspace(build_forward(frozen, line_grid, 1.0))
    np.testing.assert_allclose(w.values, 1.0 / 8.0)


def test_nullspace_needs_a_no_flux_forward_operator(tanh_pure, line_grid):
    with pytest.raises(ParameterError):
        steady_nullspace(build_backward(tanh_pure, line_grid, 1.0))
    with pytest.raises(ParameterError):
        steady_nullspace(build_forward(tanh_pure, line_grid, 1.0, boundary="absorbing"))


# ==============================================================================
# Zero-current quadrature
# ==============================================================================

def test_ito_pure_noise_density_is_inverse_diffusion():
    model = build_model("quadratic-diffusion", {"q": 1.0}, pure_noise=True)
    grid = Grid.line(-3.0, 3.0, 64)
    x = grid.points()[:, 0]
    expected = 1.0 / (1.0 + x ** 2)
    expected /= expected.sum() * grid.cell_volume
    np.testing.assert_allclose(steady_1d_zero_current(model, grid, "ito").values, expected, rtol=1e-10)


@pytest.mark.parametrize("preset, alpha", [("ou", 1.0), ("quadratic-diffusion", 0.0), ("double-well", 0.5)])
def test_quadrature_matches_the_null_vector(preset, alpha):
    params = {"eps": 0.5} if preset == "double-well" else {}
    model = build_model(preset, params)
    grid = Grid.line(-3.0, 3.0, 512)
    exact = steady_1d_zero_current(model, grid, alpha)
    numeric = steady_nullspace(build_forward(model, grid, alpha))
    assert l1(exact, numeric) <= 1e-3


def test_vanishing_diffusion_is_a_domain_error(line_grid):
    frozen = scalar_model("frozen", zeros, lambda x: np.zeros(np.shape(x) + (1,)))
    with pytest.raises(DomainError):
        steady_1d_zero_current(frozen, line_grid, 1.0)


def test_quadrature_is_one_dimensional():
    with pytest.raises(ParameterError):
        steady_1d_zero_current(build_model("planar"), Grid.box((-1, 1, 8), (-1, 1, 8)), 1.0)


@pytest.mark.parametrize("alpha, expected", [(1.0, 1.0), (0.0, np.sqrt(1.0 - 0.05 / 2))])
def test_double_well_minima(alpha, expected):
    model = build_model("double-well", {"eps": 0.05})
    grid = Grid.line(-2.0, 2.0, 1024)
    phi = quasipotential(steady_1d_zero_current(model, grid, alpha), 0.05)
    minima = phi.minima()
    assert len(minima) == 2
    h = grid.spacing[0]
    assert minima[0] == pytest.approx(-expected, abs=h)
    assert minima[1] == pytest.approx(expected, abs=h)


# ==============================================================================
# Quasipotential
# ==============================================================================

def test_quasipotential_flags_empty_nodes():
    grid = Grid.line(0.0, 1.0, 8)
    w = GridDensity(grid=grid, values=[0, 1, 2, 4, 2, 1, 0, 0])
    phi = quasipotential(w, 0.5)
    assert phi.flagged_nodes == [0, 6, 7]
    assert np.all(np.isinf(phi.phi[[0, 6, 7]]))
    assert phi.phi[3] == 0.0
    assert phi.phi[2] == pytest.approx(0.5 * np.log(2.0))


def test_quasipotential_preconditions():
    grid = Grid.line(0.0, 1.0, 8)
    with pytest.raises(ParameterError):
        quasipotential(GridDensity(grid=grid, values=np.ones(8)), 0.0)
    with pytest.raises(ParameterError):
        quasipotential(GridDensity(grid=grid, values=np.zeros(8)), 1.0)


# ==============================================================================
# Agreement of the two routes on a fine grid
# ==============================================================================

@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("preset, params", POSITIVE_D_PRESETS)
def test_zero_current_density_carries_no_current(preset, params, alpha):
    model = build_model(preset, params)
    grid = Grid.line(-2.0, 2.0, 1024)
    w = steady_1d_zero_current(model, grid, alpha)
    assert abs(w.mass() - 1.0) <= 1e-9

    pts = grid.points()
    v = model.drift_at(pts)[:, 0] + (alpha - 1.0) * a_n_from_b(model, pts)[:, 0]
    J = probability_current(model, grid, w, alpha).values[:, 0]
    assert np.max(np.abs(J)) <= 1e-6 * np.max(np.abs(v * w.values)) + 1e-12


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("preset, params", POSITIVE_D_PRESETS)
def test_null_vector_matches_quadrature_on_a_fine_grid(preset, params, alpha):
    model = build_model(preset, params)
    grid = Grid.line(-2.0, 2.0, 1024)
    exact = steady_1d_zero_current(model, grid, alpha)
    numeric = steady_nullspace(build_forward(model, grid, alpha))
    assert l1(exact, numeric) <= 2.5e-4
