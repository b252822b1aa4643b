import numpy as np
import pytest

from riccilab.grid import (
    GridChart,
    MetricField,
    OneFormField,
    ScalarField,
    SymTensorField,
    random_band_limited,
)


@pytest.fixture(scope="session")
def chart16():
    return GridChart((16, 16, 16), (2 * np.pi,) * 3)


@pytest.fixture(scope="session")
def chart2d():
    return GridChart((32, 32), (2 * np.pi, 2 * np.pi))


@pytest.fixture(scope="session")
def flat16(chart16):
    return MetricField.flat(chart16)


@pytest.fixture(scope="session")
def curved16(chart16):
    u = random_band_limited(chart16, np.random.default_rng(101), max_mode=1,
                            amplitude=0.1)
    return MetricField.conformal_flat(chart16, u)


def random_sym(chart, seed, amplitude=0.5, max_mode=1, mean=None):
    hv = random_band_limited(chart, np.random.default_rng(seed),
                             max_mode=max_mode, amplitude=amplitude,
                             tensor_rank=2)
    hv = 0.5 * (hv + np.swapaxes(hv, -1, -2))
    if mean is not None:
        hv = hv + np.asarray(mean, dtype=float)
    return SymTensorField(chart, hv)


def random_oneform(chart, seed, amplitude=0.5, max_mode=1):
    wv = random_band_limited(chart, np.random.default_rng(seed),
                             max_mode=max_mode, amplitude=amplitude,
                             tensor_rank=1)
    return OneFormField(chart, wv)


def random_scalar(chart, seed, amplitude=1.0, max_mode=1):
    return ScalarField(chart, random_band_limited(
        chart, np.random.default_rng(seed), max_mode=max_mode,
        amplitude=amplitude))
