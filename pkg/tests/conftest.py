import numpy as np
import pytest

from riplab.data import GenConfig, generate_synthetic, write_dataset
from riplab.data.dataset import Dataset, Sample
from riplab.data.labels import ManeuverLabel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """60-sample, 3-view synthetic dataset on disk (seed 3)."""
    ds, _ = generate_synthetic(GenConfig(n_samples=60), seed=3)
    out = tmp_path_factory.mktemp("tiny")
    write_dataset(ds, out)
    return out


@pytest.fixture(scope="session")
def default_synthetic():
    """The 1000-sample default dataset at seed 7, in memory."""
    return generate_synthetic(GenConfig(), seed=7)


def separable_samples(n=32, dim=8, T=(4, 9), n_views=3, seed=0):
    """Well-separated toy sequences: class prototype plus small noise, every class present."""
    rng = np.random.default_rng(seed)
    protos = 3.0 * rng.standard_normal((6, dim))
    views = ("front", "left", "right")[:n_views]
    out = []
    for i in range(n):
        c = i % 6
        length = int(rng.integers(T[0], T[1] + 1))
        frames = {v: (protos[c] + 0.1 * rng.standard_normal((length, dim))).astype(np.float32) for v in views}
        out.append(Sample(f"x{i:03d}", ManeuverLabel(c), frames))
    return out


def as_dataset(samples, dim):
    return Dataset(list(samples), dim, tuple(samples[0].views), 2.0)
