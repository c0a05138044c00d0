import numpy as np
import pytest

from jumprl.sde import PathSample, TimeGrid, build_grid, doubling_jump_spec


def synthetic_path(times, observed) -> PathSample:
    """PathSample with prescribed grid points and observations, no jumps."""
    times = np.asarray(times, dtype=float)
    observed = np.asarray(observed, dtype=float)
    grid = TimeGrid(horizon=float(times[-1]), n_steps=times.size - 1,
                    dt=float(times[1] - times[0]), times=times)
    return PathSample(grid=grid, observed=observed,
                      continuous_part=observed.copy(), jump_events=())


@pytest.fixture(scope="session")
def study_spec():
    """The simulation-study process: dX = dW + X dN, one uniform jump, x0 = 0.1."""
    return doubling_jump_spec()


@pytest.fixture(scope="session")
def grid_100():
    return build_grid(1.0, 100)


@pytest.fixture(scope="session")
def grid_1000():
    return build_grid(1.0, 1000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
