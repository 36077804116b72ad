import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_field(rng, height, width, channels=None):
    """Low-frequency random image in [0,1] for round-trip tests."""
    shape = (height, width) if channels is None else (height, width, channels)
    coarse = rng.random((8, 16) if channels is None else (8, 16, channels))
    yi = np.linspace(0, 7, height)
    xi = np.linspace(0, 15, width)
    y0 = np.floor(yi).astype(int)
    x0 = np.floor(xi).astype(int)
    y1 = np.minimum(y0 + 1, 7)
    x1 = np.minimum(x0 + 1, 15)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    if channels is not None:
        fy = fy[..., None]
        fx = fx[..., None]
    out = (
        coarse[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + coarse[np.ix_(y1, x0)] * fy * (1 - fx)
        + coarse[np.ix_(y0, x1)] * (1 - fy) * fx
        + coarse[np.ix_(y1, x1)] * fy * fx
    )
    assert out.shape == shape
    return out
