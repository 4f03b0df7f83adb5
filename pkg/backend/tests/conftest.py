import numpy as np
import pytest

from services.sde.model import SDEModel, build_model
from services.sde.schemas import Grid


def scalar_model(name, drift, noise, jacobian=None, pure_noise=False) -> SDEModel:
    """1-D model from plain callables of x with shape (..., 1)."""
    return SDEModel(
        name=name, state_dim=1, noise_dim=1,
        drift=drift, noise=noise, noise_jacobian=jacobian, pure_noise=pure_noise,
    )


def zeros(x):
    return np.zeros(np.shape(x))


@pytest.fixture
def identity_noise():
    """b(x) = x, a = 0, with its exact Jacobian."""
    return scalar_model(
        "identity-noise", zeros,
        lambda x: np.asarray(x)[..., None],
        lambda x: np.ones(np.shape(x)[:-1] + (1, 1, 1)),
    )


@pytest.fixture
def unit_noise():
    return scalar_model("unit-noise", zeros, lambda x: np.ones(np.shape(x) + (1,)))


@pytest.fixture
def tanh_pure():
    return build_model("tanh-diffusion", pure_noise=True)


@pytest.fixture
def sine_pure():
    return build_model("sine-diffusion", pure_noise=True)


@pytest.fixture
def line_grid():
    return Grid.line(-4.0, 4.0, 128)


@pytest.fixture
def run_dir(tmp_path):
    out = tmp_path / "run"
    out.mkdir()
    return out
