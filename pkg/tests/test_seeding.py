import numpy as np

from vfllab.seeding import ATTACK, DATA, DEFENSE, INIT, SHUFFLE, TEACHER, derive_rng


def test_same_tags_same_stream():
    a = derive_rng(7, DATA, 3).normal(size=16)
    b = derive_rng(7, DATA, 3).normal(size=16)
    assert np.array_equal(a, b)


def test_different_tags_different_streams():
    base = derive_rng(7, DATA).normal(size=16)
    for tag in (INIT, SHUFFLE, TEACHER, DEFENSE, ATTACK):
        assert not np.array_equal(base, derive_rng(7, tag).normal(size=16))


def test_master_seed_separates_everything():
    a = derive_rng(1, INIT, 0).normal(size=16)
    b = derive_rng(2, INIT, 0).normal(size=16)
    assert not np.array_equal(a, b)
