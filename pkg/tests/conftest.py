import numpy as np
import pytest


def make_ball_labels(dims, balls, dtype=np.int32):
    """Instance map with Euclidean balls; balls is [(center, radius), ...]."""
    labels = np.zeros(dims, dtype=dtype)
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    for lid, (center, radius) in enumerate(balls, start=1):
        d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        labels[d2 < radius * radius] = lid
    return labels


@pytest.fixture
def ball64():
    """A radius-10 ball centered in a 64^3 grid."""
    return make_ball_labels((64, 64, 64), [((32.0, 32.0, 32.0), 10.0)])
