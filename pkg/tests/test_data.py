import numpy as np
import pytest

from vfllab import (
    DataError,
    ParameterError,
    VerticalDataset,
    generate_synthetic,
    load_csv,
    sample_auxiliary,
)


# --- synthetic generator ---------------------------------------------------------


def test_shapes_and_alignment():
    train, test = generate_synthetic(4, 103, [5, 3], 0.5, seed=1, test_samples=29)
    assert train.party_count == 2 and test.party_count == 2
    assert train.party_features[0].shape == (103, 5)
    assert train.party_features[1].shape == (103, 3)
    assert test.sample_count == 29
    assert train.split_tag == "train" and test.split_tag == "test"
    train.validate(), test.validate()


def test_classes_balanced_within_one():
    train, _ = generate_synthetic(4, 103, [5, 3], 0.5, seed=1)
    counts = np.bincount(train.labels, minlength=4)
    assert counts.max() - counts.min() <= 1
    assert counts.sum() == 103


def test_determinism_and_seed_sensitivity():
    a1, _ = generate_synthetic(3, 60, [4], 0.5, seed=5)
    a2, _ = generate_synthetic(3, 60, [4], 0.5, seed=5)
    b, _ = generate_synthetic(3, 60, [4], 0.5, seed=6)
    assert np.array_equal(a1.party_features[0], a2.party_features[0])
    assert np.array_equal(a1.labels, a2.labels)
    assert not np.array_equal(a1.party_features[0], b.party_features[0])


def test_default_test_split_is_fifth():
    train, test = generate_synthetic(3, 100, [4], 0.5, seed=5)
    assert test.sample_count == 20


def test_zero_spread_collapses_to_means():
    train, _ = generate_synthetic(3, 30, [4], 0.0, seed=2, test_samples=3)
    for c in range(3):
        rows = train.party_features[0][train.labels == c]
        assert np.allclose(rows, rows[0])


def test_modes_per_class_spreads_clusters():
    one, _ = generate_synthetic(3, 300, [6], 0.1, seed=7, modes_per_class=1)
    two, _ = generate_synthetic(3, 300, [6], 0.1, seed=7, modes_per_class=2)

    def within_class_spread(ds):
        return np.mean([
            ds.party_features[0][ds.labels == c].std(axis=0).mean() for c in range(3)
        ])

    assert within_class_spread(two) > 2 * within_class_spread(one)


def test_shared_latent_views_are_rotations_of_each_other():
    train, _ = generate_synthetic(
        3, 200, [6, 6], 0.3, seed=9, shared_latent=True, view_noise=0.0
    )
    a, b = train.party_features
    # noiseless orthogonal views preserve row norms exactly
    assert np.allclose((a * a).sum(axis=1), (b * b).sum(axis=1), atol=1e-9)


def test_active_warp_requires_shared_latent():
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [4, 4], 0.5, seed=1, active_warp=1.0)


def test_shared_latent_requires_equal_dims():
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [4, 5], 0.5, seed=1, shared_latent=True)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        generate_synthetic(1, 30, [4], 0.5, seed=1)
    with pytest.raises(ParameterError):
        generate_synthetic(40, 30, [4], 0.5, seed=1)
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [], 0.5, seed=1)
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [4], -0.1, seed=1)
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [4], 0.5, seed=1, signal_scales=[1.0, 1.0])
    with pytest.raises(ParameterError):
        generate_synthetic(3, 30, [4, 4], 0.5, seed=1, view_noise=[0.1])


def test_validate_catches_misalignment():
    ds = VerticalDataset([np.zeros((5, 2))], np.zeros(4, dtype=int), 2)
    with pytest.raises(Exception):
        ds.validate()


# --- auxiliary sampling ------------------------------------------------------------


def test_auxiliary_size_and_label_match():
    train, _ = generate_synthetic(4, 200, [5], 0.5, seed=3)
    aux = sample_auxiliary(train, 0.05, seed=1)
    assert aux.indices.size == 10
    assert np.array_equal(aux.labels, train.labels[aux.indices])
    assert aux.fraction == 0.05
    assert np.unique(aux.indices).size == aux.indices.size


def test_auxiliary_stratified_covers_every_class():
    train, _ = generate_synthetic(8, 400, [5], 0.5, seed=3)
    aux = sample_auxiliary(train, 0.02, seed=1)
    assert set(np.unique(aux.labels)) == set(range(8))


def test_auxiliary_deterministic():
    train, _ = generate_synthetic(4, 200, [5], 0.5, seed=3)
    a = sample_auxiliary(train, 0.05, seed=1)
    b = sample_auxiliary(train, 0.05, seed=1)
    c = sample_auxiliary(train, 0.05, seed=2)
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, c.indices)


def test_auxiliary_fraction_bounds():
    train, _ = generate_synthetic(4, 200, [5], 0.5, seed=3)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ParameterError):
            sample_auxiliary(train, bad, seed=1)


# --- CSV loading ---------------------------------------------------------------------


@pytest.fixture()
def csv_pair(tmp_path):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    train.write_text(
        "a,b,color,label\n"
        "1.0,5.0,red,yes\n"
        "2.0,6.0,blue,no\n"
        "3.0,7.0,red,yes\n"
        "4.0,8.0,green,no\n"
    )
    test.write_text(
        "a,b,color,label\n"
        "2.5,6.5,red,yes\n"
        "0.5,9.0,violet,no\n"
    )
    return train, test


def test_load_csv_shapes_and_zscoring(csv_pair):
    train_path, _ = csv_pair
    train, test = load_csv(train_path, "label", [["a"], ["b", "color"]])
    assert test is None
    assert train.party_count == 2
    assert train.party_features[0].shape == (4, 1)
    assert train.party_features[1].shape == (4, 4)  # 1 numeric + 3 one-hot categories
    # z-scored with train statistics
    assert train.party_features[0].mean() == pytest.approx(0.0, abs=1e-12)
    assert train.party_features[0].std() == pytest.approx(1.0, abs=1e-12)
    # labels numbered by first appearance
    assert train.labels.tolist() == [0, 1, 0, 1]
    assert train.class_count == 2


def test_load_csv_unseen_category_counts_and_warns(csv_pair):
    train_path, test_path = csv_pair
    with pytest.warns(UserWarning):
        train, test = load_csv(train_path, "label", [["a"], ["b", "color"]], test_path=test_path)
    assert train.unknown_category_count == 0
    assert test.unknown_category_count == 1
    # the unseen category encodes as an all-zero one-hot block
    assert np.allclose(test.party_features[1][1, 1:], 0.0)


def test_load_csv_column_by_index(csv_pair):
    train_path, _ = csv_pair
    by_name, _ = load_csv(train_path, "label", [["a", "b"]])
    by_index, _ = load_csv(train_path, 3, [[0, 1]])
    assert np.array_equal(by_name.party_features[0], by_index.party_features[0])
    assert np.array_equal(by_name.labels, by_index.labels)


def test_load_csv_errors(csv_pair, tmp_path):
    train_path, _ = csv_pair
    with pytest.raises(DataError):
        load_csv(train_path, "missing", [["a"]])
    with pytest.raises(DataError):
        load_csv(train_path, "label", [[]])
    with pytest.raises(DataError):
        load_csv(tmp_path / "nope.csv", "label", [["a"]])
    short = tmp_path / "short.csv"
    short.write_text("a,label\n")
    with pytest.raises(DataError):
        load_csv(short, "label", [["a"]])


def test_load_csv_unseen_test_label_fails(tmp_path):
    train = tmp_path / "t.csv"
    test = tmp_path / "e.csv"
    train.write_text("a,label\n1.0,x\n2.0,y\n")
    test.write_text("a,label\n1.5,z\n")
    with pytest.raises(DataError):
        load_csv(train, "label", [["a"]], test_path=test)


def test_demo_csv_configs_load():
    train, test = load_csv(
        "configs/demo_train.csv", "label", [["f0", "f1"], ["f2", "band"]],
        test_path="configs/demo_test.csv",
    )
    assert train.class_count == 3
    assert train.sample_count == 90 and test.sample_count == 30
    assert train.party_features[1].shape[1] == 4  # f2 + 3 band categories
