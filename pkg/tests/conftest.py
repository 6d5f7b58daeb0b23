import numpy as np
import pytest

from vfllab import generate_synthetic, one_hot_labels, make_federation, train


@pytest.fixture(scope="session")
def tiny_data():
    """4-class, 2-party dataset small enough for per-test federations."""
    return generate_synthetic(4, 160, [5, 3], 0.5, seed=11, test_samples=48)


@pytest.fixture()
def tiny_federation(tiny_data):
    train_ds, _ = tiny_data
    dists = one_hot_labels(train_ds.labels, train_ds.class_count)

    def build(mode="split", **kwargs):
        defaults = dict(
            mode=mode,
            bottom_hidden=[8],
            embedding_dim=4,
            top_hidden=[],
            embedding_activation="identity",
            optimizer="sgd",
            learning_rate=0.05,
            batch_size=32,
            seed=3,
        )
        defaults.update(kwargs)
        return make_federation(train_ds, dists, **defaults)

    return build


def run_rounds(fed, dataset, epochs):
    return train(fed, dataset, epochs)


def rng(seed=0):
    return np.random.default_rng(seed)
