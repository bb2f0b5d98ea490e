import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TABLE1_ACCURACIES
from _builders import model_from_trees, onehot_schema, sample_matrix, stump

from gbdtnas import bench
from gbdtnas.gbdt import (
    ArchPool,
    DegenerateTargetsError,
    Normalizer,
    TrainConfig,
    TrainingError,
    feature_importance,
    fit,
    load_model,
    model_to_dict,
    save_model,
)
from gbdtnas.search import pairwise_accuracy


# -- normalizers -----------------------------------------------------------------


def test_minmax_endpoints_from_reference_accuracies():
    norm = Normalizer.fit("minmax", np.array(TABLE1_ACCURACIES))
    assert norm.normalize(92.50) == 0.0
    assert norm.normalize(93.20) == 1.0


def test_standardize_two_points_is_unit():
    norm = Normalizer.fit("standardize", np.array([92.50, 93.20]))
    np.testing.assert_allclose(norm.normalize([92.50, 93.20]), [-1.0, 1.0])


def test_normalizer_round_trip():
    for mode in ("minmax", "standardize"):
        norm = Normalizer.fit(mode, np.array([92.50, 92.85, 93.20]))
        assert abs(norm.denormalize(norm.normalize(92.85)) - 92.85) < 1e-12


def test_normalizer_zero_spread():
    with pytest.raises(DegenerateTargetsError):
        Normalizer.fit("minmax", np.full(5, 0.93))
    with pytest.raises(DegenerateTargetsError):
        Normalizer.fit("standardize", np.full(5, 0.93))
    with pytest.raises(TrainingError):
        Normalizer.fit("sigmoid", np.array([0.0, 1.0]))


# -- fitting ---------------------------------------------------------------------


def test_fit_rejects_degenerate_targets():
    pool = ArchPool(np.array([[0], [1]], dtype=np.uint8), np.array([0.93, 0.93]))
    with pytest.raises(DegenerateTargetsError):
        fit(pool, TrainConfig(min_samples_per_leaf=1), "minmax")


def test_fit_rejects_empty_pool():
    pool = ArchPool(np.zeros((0, 3), dtype=np.uint8), np.zeros(0))
    with pytest.raises(TrainingError):
        fit(pool)


def test_single_stump_drives_mse_to_zero():
    # target equals the bit: one split separates the classes exactly
    X = np.array([[0], [1]] * 8, dtype=np.uint8)
    y = X[:, 0].astype(float)
    exact = fit(ArchPool(X, y), TrainConfig(num_trees=1, learning_rate=1.0, min_samples_per_leaf=1), "minmax")
    assert exact.train_mse[-1] < 1e-24
    shrunk = fit(ArchPool(X, y), TrainConfig(num_trees=100, min_samples_per_leaf=1), "minmax")
    assert shrunk.train_mse[-1] < 1e-6


def test_training_mse_non_increasing(rng):
    schema = onehot_schema(4, 3)
    X = sample_matrix(schema, 300, rng)
    y = 0.8 + X @ rng.uniform(0, 0.03, schema.total_dim) + rng.normal(0, 0.01, 300)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=60, min_samples_per_leaf=5))
    diffs = np.diff(model.train_mse)
    assert (diffs <= 1e-15).all()


def test_synthetic_additive_heldout_pairwise_accuracy(rng):
    schema = onehot_schema(6, 3)
    oracle = bench.make_synthetic(schema, noise_std=0.005, seed=1)
    X = sample_matrix(schema, 700, rng)
    y = np.array([oracle.query(b) for b in X])
    model = fit(ArchPool(X[:600], y[:600]), TrainConfig())
    score = pairwise_accuracy(model.predict_batch(X[600:].astype(float)), y[600:])
    assert score >= 0.90


def test_leaf_count_and_min_samples(rng):
    schema = onehot_schema(5, 3)
    X = sample_matrix(schema, 400, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim)
    cfg = TrainConfig(num_trees=10, max_leaves=8, min_samples_per_leaf=25)
    model = fit(ArchPool(X, y), cfg)
    for tree in model.trees:
        assert tree.n_leaves <= cfg.max_leaves
        leaves = tree.children_left < 0
        assert (tree.cover[leaves] >= cfg.min_samples_per_leaf).all()


def test_cover_consistency(rng):
    schema = onehot_schema(4, 3)
    X = sample_matrix(schema, 250, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=20, min_samples_per_leaf=5))
    for tree in model.trees:
        internal = np.flatnonzero(tree.children_left >= 0)
        for node in internal:
            left, right = tree.children_left[node], tree.children_right[node]
            assert tree.cover[node] == tree.cover[left] + tree.cover[right]


# -- prediction ------------------------------------------------------------------


def test_zero_tree_model_predicts_base_score():
    model = model_from_trees([], dim=4, base_score=0.37)
    assert model.predict(np.zeros(4, dtype=np.uint8)) == 0.37


def test_stump_flip_changes_prediction_by_leaf_gap():
    model = model_from_trees([stump(feature=2, left_value=0.3, right_value=0.7)], dim=5)
    x0 = np.zeros(5, dtype=np.uint8)
    x1 = x0.copy()
    x1[2] = 1
    assert model.predict(x1) - model.predict(x0) == pytest.approx(0.4, abs=1e-15)


def test_batch_predict_matches_single(rng):
    schema = onehot_schema(4, 3)
    X = sample_matrix(schema, 200, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim) + rng.normal(0, 0.01, 200)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=30, min_samples_per_leaf=5))
    Xq = sample_matrix(schema, 5000, rng)
    batch = model.predict_batch(Xq.astype(float))
    singles = np.array([model.predict(x) for x in Xq])
    np.testing.assert_array_equal(batch, singles)


def test_prediction_is_base_plus_leaf_values(rng):
    schema = onehot_schema(4, 3)
    X = sample_matrix(schema, 150, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=25, min_samples_per_leaf=5))
    x = sample_matrix(schema, 1, rng)[0]
    manual = model.base_score + sum(t.predict_one(x) for t in model.trees)
    assert model.predict(x) == manual


def test_flip_changes_only_trees_splitting_on_the_bit(rng):
    schema = onehot_schema(3, 2)
    X = sample_matrix(schema, 300, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim) + rng.normal(0, 0.005, 300)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=40, min_samples_per_leaf=10))
    x = X[0].copy()
    flipped = x.copy()
    j = 2
    flipped[j] = 1 - flipped[j]
    for tree in model.trees:
        if j not in set(tree.feature[tree.children_left >= 0]):
            assert tree.predict_one(x) == tree.predict_one(flipped)


def test_predict_dimension_mismatch(rng):
    model = model_from_trees([stump(0, 0.1, 0.2)], dim=3)
    with pytest.raises(TrainingError):
        model.predict(np.zeros(5, dtype=np.uint8))


# -- feature importance -----------------------------------------------------------


def test_importance_zero_for_never_split_features():
    model = model_from_trees([stump(1, 0.0, 1.0)], dim=4)
    imp = feature_importance(model)
    assert imp[0] == imp[2] == imp[3] == 0.0


def test_importance_single_stump_equals_its_gain():
    tree = stump(2, 0.0, 1.0)
    tree.gain[0] = 2.5
    imp = feature_importance(model_from_trees([tree], dim=4))
    assert imp[2] == 2.5
    assert imp.sum() == 2.5


def test_importance_mean_over_splits():
    t1 = stump(1, 0.0, 1.0)
    t1.gain[0] = 2.0
    t2 = stump(1, 0.0, 1.0)
    t2.gain[0] = 4.0
    imp = feature_importance(model_from_trees([t1, t2], dim=3))
    assert imp[1] == 3.0


def test_importance_finds_dominant_feature():
    schema = onehot_schema(4, 3)
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = sample_matrix(schema, 300, rng)
        w = rng.uniform(0, 0.01, schema.total_dim)
        w[5] = 0.2
        y = 0.5 + X @ w + rng.normal(0, 0.005, 300)
        model = fit(ArchPool(X, y), TrainConfig(num_trees=30, min_samples_per_leaf=10))
        hits += int(np.argmax(feature_importance(model)) == 5)
    assert hits >= 19


# -- determinism and serialization -------------------------------------------------


def test_fit_is_deterministic(rng):
    schema = onehot_schema(4, 3)
    X = sample_matrix(schema, 200, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim) + rng.normal(0, 0.01, 200)
    pool = ArchPool(X, y)
    a = json.dumps(model_to_dict(fit(pool, TrainConfig(num_trees=15, min_samples_per_leaf=5))))
    b = json.dumps(model_to_dict(fit(pool, TrainConfig(num_trees=15, min_samples_per_leaf=5))))
    assert a == b


def test_model_file_round_trip(tmp_path, rng):
    schema = onehot_schema(3, 3)
    X = sample_matrix(schema, 150, rng)
    y = 0.8 + X @ rng.uniform(0, 0.05, schema.total_dim)
    model = fit(ArchPool(X, y), TrainConfig(num_trees=10, min_samples_per_leaf=5))
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert json.dumps(model_to_dict(loaded)) == json.dumps(model_to_dict(model))
    Xq = sample_matrix(schema, 30, rng).astype(float)
    np.testing.assert_array_equal(loaded.predict_batch(Xq), model.predict_batch(Xq))
    np.testing.assert_array_equal(feature_importance(loaded), feature_importance(model))


def test_train_config_validation():
    with pytest.raises(TrainingError):
        TrainConfig(num_trees=0)
    with pytest.raises(TrainingError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(TrainingError):
        TrainConfig(learning_rate=1.5)
    with pytest.raises(TrainingError):
        TrainConfig(l2_reg=-1.0)


# -- pool files --------------------------------------------------------------------


def test_pool_csv_round_trip(tmp_path, rng):
    schema = onehot_schema(2, 2)
    X = sample_matrix(schema, 20, rng)
    y = rng.uniform(0.8, 0.95, 20)
    pool = ArchPool(X, y)
    path = tmp_path / "pool.csv"
    pool.to_csv(path, schema.feature_labels)
    loaded = ArchPool.from_csv(path)
    np.testing.assert_array_equal(loaded.X, pool.X)
    np.testing.assert_array_equal(loaded.y, pool.y)


def test_pool_csv_rejects_bad_rows(tmp_path):
    path = tmp_path / "pool.csv"
    path.write_text("a,b,accuracy\n1,2,0.9\n")
    with pytest.raises(TrainingError, match="0 or 1"):
        ArchPool.from_csv(path)
    path.write_text("a,b,score\n1,0,0.9\n")
    with pytest.raises(TrainingError, match="accuracy"):
        ArchPool.from_csv(path)


@given(st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=3, max_size=40))
@settings(max_examples=60)
def test_normalizer_round_trip_property(values):
    y = np.asarray(values)
    if y.max() - y.min() <= 1e-9:
        return
    for mode in ("minmax", "standardize"):
        norm = Normalizer.fit(mode, y)
        np.testing.assert_allclose(norm.denormalize(norm.normalize(y)), y, atol=1e-12)
