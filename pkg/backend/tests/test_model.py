import numpy as np
import pytest
from pydantic import ValidationError

from conftest import scalar_model, zeros
from services.sde.config import PRESET_CATALOG
from services.sde.errors import EvaluationError, ParameterError
from services.sde.model import SDEModel, build_model, diffusion_at, validate_model
from services.sde.schemas import Alpha, Grid, GridDensity, alpha_value
from services.sde.tables import Component, FieldTables, Term, constant, monomial


def constant_model(b):
    b = np.asarray(b, dtype=float)
    n, m = b.shape
    return SDEModel(
        name="constant", state_dim=n, noise_dim=m,
        drift=zeros, noise=lambda x: np.broadcast_to(b, np.shape(x)[:-1] + b.shape),
    )


# ==============================================================================
# diffusion_at
# ==============================================================================

def test_diffusion_of_constant_diagonal_noise():
    D = diffusion_at(constant_model([[1.0, 0.0], [0.0, 2.0]]), [0.3, -1.0])
    np.testing.assert_allclose(D, [[1.0, 0.0], [0.0, 4.0]])


def test_diffusion_of_single_row_noise():
    D = diffusion_at(constant_model([[1.0, 1.0]]), [0.0])
    np.testing.assert_allclose(D, [[2.0]])


def test_diffusion_of_linear_noise():
    model = build_model("linear-noise", {"sigma": 0.5})
    assert diffusion_at(model, [2.0])[0, 0] == pytest.approx(1.0)


def test_diffusion_is_invariant_under_orthogonal_rotation():
    theta = 0.7
    Q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    B = np.array([[1.0, 0.3], [-0.2, 2.0]])
    D1 = diffusion_at(constant_model(B), [0.0, 0.0])
    D2 = diffusion_at(constant_model(B @ Q), [0.0, 0.0])
    np.testing.assert_allclose(D1, D2, atol=1e-12)


def test_diffusion_vectorized_over_states():
    model = build_model("planar")
    x = np.random.default_rng(0).uniform(-1, 1, size=(7, 2))
    D = diffusion_at(model, x)
    assert D.shape == (7, 2, 2)
    np.testing.assert_allclose(D, np.swapaxes(D, -1, -2))


def test_non_finite_noise_raises_with_state():
    model = scalar_model("sqrt", zeros, lambda x: np.sqrt(np.asarray(x))[..., None])
    with pytest.raises(EvaluationError) as info:
        diffusion_at(model, [-1.0])
    assert info.value.x == [-1.0]


# ==============================================================================
# validate_model
# ==============================================================================

def test_constant_noise_passes_every_probe():
    report = validate_model(constant_model([[1.0, 0.0], [0.5, 1.0]]), [[0.0, 0.0], [1.0, -2.0], [5.0, 5.0]])
    assert report.passed
    assert len(report.probes) == 3


def test_exact_jacobian_is_accepted(identity_noise):
    report = validate_model(identity_noise, [[0.5], [1.0], [3.0]])
    assert all(p.jacobian_discrepancy <= 1e-5 for p in report.probes)
    assert report.passed


def test_wrong_jacobian_is_reported():
    model = scalar_model(
        "wrong-jacobian", zeros,
        lambda x: np.asarray(x)[..., None],
        lambda x: np.full(np.shape(x)[:-1] + (1, 1, 1), 2.0),
    )
    report = validate_model(model, [[1.0]])
    probe = report.probes[0]
    assert probe.jacobian_discrepancy == pytest.approx(1.0, rel=1e-6)
    assert probe.jacobian_ok is False
    assert not report.passed


def test_non_finite_probe_is_an_entry_not_an_error():
    model = scalar_model("sqrt", zeros, lambda x: np.sqrt(np.asarray(x))[..., None])
    report = validate_model(model, [[1.0], [-1.0]])
    assert [p.finite for p in report.probes] == [True, False]
    assert not report.passed


def test_degenerate_points_are_flagged():
    report = validate_model(build_model("linear-noise"), [[0.0], [1.0]])
    assert report.degenerate_points == [[0.0]]
    assert report.passed


def test_validate_needs_probes(identity_noise):
    with pytest.raises(ParameterError):
        validate_model(identity_noise, [])


@pytest.mark.parametrize("preset", [p for p in PRESET_CATALOG if p != "custom"])
def test_presets_have_consistent_jacobians(preset):
    model = build_model(preset)
    probes = np.random.default_rng(1).uniform(-1.5, 1.5, size=(20, model.state_dim))
    report = validate_model(model, probes)
    assert report.passed
    assert model.state_dim == PRESET_CATALOG[preset]["state_dim"]


# ==============================================================================
# Presets and tables
# ==============================================================================

def test_unknown_preset_and_parameter():
    with pytest.raises(ParameterError):
        build_model("no-such-preset")
    with pytest.raises(ParameterError):
        build_model("ou", {"kappa": 1.0})


def test_custom_preset_needs_tables():
    with pytest.raises(ParameterError):
        build_model("custom")


def test_custom_tables_build_a_model():
    tables = FieldTables(
        drift=[Component(terms=[monomial(-2.0, [1])])],
        noise=[[Component(terms=[Term(coef=1.0), Term(coef=0.5, func="sin")])]],
    )
    model = build_model("custom", tables=tables)
    x = np.array([[0.3]])
    assert model.drift_at(x)[0, 0] == pytest.approx(-0.6)
    assert model.noise_at(x)[0, 0, 0] == pytest.approx(1.0 + 0.5 * np.sin(0.3))
    assert model.jacobian_at(x)[0, 0, 0, 0] == pytest.approx(0.5 * np.cos(0.3))


def test_tables_reject_terms_beyond_the_state():
    with pytest.raises(ValidationError):
        FieldTables(drift=[constant(0.0)], noise=[[Component(terms=[monomial(1.0, [0, 1])])]])


def test_without_drift_zeroes_the_drift():
    model = build_model("ou", {"k": 3.0})
    pure = model.without_drift()
    assert pure.pure_noise
    np.testing.assert_array_equal(pure.drift_at([[1.0], [2.0]]), 0.0)
    assert model.drift_at([1.0])[0] == pytest.approx(-3.0)


def test_state_dimension_is_checked():
    with pytest.raises(ParameterError):
        build_model("planar").drift_at([1.0, 2.0, 3.0])


# ==============================================================================
# Integration sense, grids and densities
# ==============================================================================

@pytest.mark.parametrize("name, value", [("ito", 0.0), ("stratonovich", 0.5), ("anti-ito", 1.0), ("Anti_Ito", 1.0)])
def test_named_alpha(name, value):
    assert alpha_value(name) == value
    assert Alpha(value=value).name == name.lower().replace("_", "-")


def test_alpha_outside_unit_interval_is_rejected():
    with pytest.raises(ValidationError, match="0 <= alpha <= 1"):
        Alpha(value=1.5)
    assert Alpha.stratonovich().value == 0.5
    assert (Alpha.ito().name, Alpha.anti_ito().name) == ("ito", "anti-ito")


def test_grid_is_cell_centred():
    grid = Grid.line(-1.0, 1.0, 9)
    nodes = grid.axes[0].nodes()
    assert nodes[0] == pytest.approx(-1.0 + 1.0 / 9)
    assert nodes[4] == pytest.approx(0.0, abs=1e-15)
    assert grid.nearest_index([0.0]) == 4


def test_grid_needs_enough_points():
    with pytest.raises(ValidationError):
        Grid.line(0.0, 1.0, 4)


def test_gaussian_density_moments():
    grid = Grid.line(-6.0, 6.0, 512)
    w = GridDensity.gaussian(grid, 0.5, 0.25)
    assert w.mass() == pytest.approx(1.0, abs=1e-9)
    assert w.mean()[0] == pytest.approx(0.5, abs=1e-9)
    assert w.variance() == pytest.approx(0.25, rel=1e-6)


def test_from_weights_normalizes_and_checks_the_mass():
    grid = Grid.line(0.0, 1.0, 8)
    w = GridDensity.from_weights(grid, np.arange(8.0), t=0.2)
    assert w.mass() == pytest.approx(1.0, abs=1e-12)
    assert w.t == 0.2
    for weights in (np.zeros(8), np.ones(7), np.full(8, np.inf), [-1.0, 2.0, 0, 0, 0, 0, 0, 0]):
        with pytest.raises(ParameterError):
            GridDensity.from_weights(grid, weights)


def test_gaussian_mean_must_fit_the_grid():
    box = Grid.box((-1.0, 1.0, 8), (-1.0, 1.0, 8))
    assert GridDensity.gaussian(box, [0.0], 0.5).mass() == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        GridDensity.gaussian(box, [0.0, 0.0, 0.0], 0.5)
    with pytest.raises(ParameterError):
        GridDensity.gaussian(Grid.line(-1.0, 1.0, 8), [0.0, 0.0], 0.5)


def test_density_clamps_negative_values():
    grid = Grid.line(0.0, 1.0, 8)
    w = GridDensity(grid=grid, values=[-1e-13, 1, 1, 1, 1, 1, 1, 1])
    assert w.values.min() == 0.0
