import numpy as np
import pytest

from covdesign.riccati import SystemModel, check_assumptions

PIXEL_F = np.array([[1., 0., 1., 0.],
                    [0., 1., 0., 1.],
                    [0., 0., 1., 0.],
                    [0., 0., 0., 1.]])
PIXEL_H = np.array([[1., 0., 0., 0.],
                    [0., 1., 0., 0.]])
PIXEL_Q = np.diag([0.1, 0.1, 50.0, 50.0])


@pytest.fixture(scope="session")
def pixel_system() -> SystemModel:
    return SystemModel(PIXEL_F, PIXEL_H, PIXEL_Q)


def rand_spd(rng: np.random.Generator, n: int, floor: float = 0.1) -> np.ndarray:
    a = rng.normal(size=(n, n))
    return a @ a.T + floor * np.eye(n)


def random_model(rng: np.random.Generator, n_x: int, n_y: int,
                 rho: float = 0.9) -> SystemModel:
    """Random detectable/stabilizable model with spectral radius <= rho."""
    for _ in range(100):
        F = rng.normal(size=(n_x, n_x))
        top = float(np.abs(np.linalg.eigvals(F)).max())
        if top > 0:
            F *= rho / top
        H = rng.normal(size=(n_y, n_x))
        Q = rand_spd(rng, n_x)
        model = SystemModel(F, H, Q)
        diag = check_assumptions(model)
        if diag.observable and diag.controllable:
            return model
    raise RuntimeError("could not sample a well-posed model")
