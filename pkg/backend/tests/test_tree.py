import math

import numpy as np
import pytest

from models.dataset import Dataset
from models.tree import LeafRegion, TreeParams
from services.tree_service import (
    apply_many,
    extract_leaf_regions,
    fit_tree,
    translate_tree,
    tree_predict_raw,
    tree_predict_raw_by_box,
    tree_predict_raw_many,
)
from utils.exceptions import ConfigurationError

def _dataset(X, y, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    return Dataset(features=X, targets=y, feature_names=names)

def _random_tree(seed, n=80, p=3, min_leaf=3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, p))
    y = np.sin(4.0 * X[:, 0]) + X[:, -1] + rng.normal(0.0, 0.2, size=n)
    dataset = _dataset(X, y)
    rows = rng.integers(0, n, size=n)
    return fit_tree(dataset, rows, TreeParams(min_samples_leaf=min_leaf, seed=seed)), dataset

def _exhaustive_root_split(X, y, min_leaf=1):
    """枚举所有 (特征, 相邻取值中点) 的分裂，返回 SSE 最小者；并列取特征最小、阈值最小"""
    def sse(values):
        return float(np.sum((values - values.mean()) ** 2)) if values.size else 0.0

    candidates = []
    for j in range(X.shape[1]):
        values = np.unique(X[:, j])
        for lo, hi in zip(values[:-1], values[1:]):
            t = 0.5 * (lo + hi)
            go_left = X[:, j] < t
            if min(go_left.sum(), (~go_left).sum()) < min_leaf:
                continue
            candidates.append((sse(y[go_left]) + sse(y[~go_left]), j, t))
    best = min(score for score, _, _ in candidates)
    tolerance = 1e-9 * max(sse(y), 1.0)
    return next((j, t) for score, j, t in candidates if score <= best + tolerance)

class TestFitTree:

    def test_step_gives_single_split_at_midpoint(self):
        x = np.arange(20.0)
        dataset = _dataset(x, (x >= 10).astype(float))
        tree = fit_tree(dataset, np.arange(20), TreeParams(min_samples_leaf=5))
        assert tree.feature == [0, -1, -1]
        assert tree.threshold[0] == 9.5
        assert tree.n_leaves == 2
        assert [leaf.constant for leaf in tree.leaves] == [0.0, 1.0]
        assert tree.leaves[0].upper == [9.5] and tree.leaves[0].lower == [-math.inf]
        assert tree.leaves[1].lower == [9.5] and tree.leaves[1].upper == [math.inf]

    def test_half_open_convention(self):
        x = np.arange(20.0)
        dataset = _dataset(x, (x >= 10).astype(float))
        tree = fit_tree(dataset, np.arange(20), TreeParams(min_samples_leaf=5))
        assert tree_predict_raw(tree, [9.4]) == 0.0
        assert tree_predict_raw(tree, [9.5]) == 1.0
        assert tree_predict_raw_by_box(tree, [9.5]) == 1.0

    def test_checkerboard_recovers_four_cells(self):
        coords = (np.arange(10) + 0.5) / 10.0
        g0, g1 = np.meshgrid(coords, coords, indexing="ij")
        X = np.column_stack([g0.ravel(), g1.ravel()])
        cells = np.array([[0.0, 1.0], [2.0, 5.0]])
        y = cells[(X[:, 0] >= 0.5).astype(int), (X[:, 1] >= 0.5).astype(int)]
        dataset = _dataset(X, y)
        tree = fit_tree(dataset, np.arange(len(y)), TreeParams(min_samples_leaf=5, mtry=2))
        assert tree.n_leaves == 4
        assert tree.feature[0] == 0
        np.testing.assert_array_equal(tree_predict_raw_many(tree, X), y)

    def test_ties_prefer_lowest_feature(self):
        x = np.arange(30.0)
        dataset = _dataset(np.column_stack([x, x]), (x >= 15).astype(float))
        tree = fit_tree(dataset, np.arange(30), TreeParams(min_samples_leaf=5, mtry=2))
        assert tree.feature[0] == 0

    def test_root_split_matches_exhaustive_search(self):
        for seed in range(30):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(6, 21))
            p = int(rng.integers(1, 5))
            # 保留一位小数，制造重复的特征取值
            X = np.round(rng.uniform(0.0, 1.0, size=(n, p)), 1)
            if p >= 3 and seed % 2 == 0:
                X[:, 2] = X[:, 0]
            y = rng.normal(0.0, 1.0, size=n)
            if np.ptp(X, axis=0).max() == 0:
                continue
            rows = np.arange(n) if seed % 3 else rng.integers(0, n, size=n)
            Xb, yb = X[rows], y[rows]
            if np.ptp(yb) == 0 or np.ptp(Xb, axis=0).max() == 0:
                continue
            tree = fit_tree(_dataset(X, y), rows, TreeParams(max_depth=1, min_samples_leaf=1, mtry=p))
            assert (tree.feature[0], tree.threshold[0]) == _exhaustive_root_split(Xb, yb), f"seed={seed}"

    def test_root_split_with_min_leaf_matches_exhaustive_search(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(0.0, 1.0, size=(20, 3))
        y = np.where(X[:, 1] > 0.9, 5.0, 0.0) + rng.normal(0.0, 0.1, size=20)
        tree = fit_tree(_dataset(X, y), np.arange(20), TreeParams(max_depth=1, min_samples_leaf=4, mtry=3))
        assert (tree.feature[0], tree.threshold[0]) == _exhaustive_root_split(X, y, min_leaf=4)

    def test_ties_prefer_lowest_threshold(self):
        # 切在 0.5 与 2.5 的 SSE 相同
        dataset = _dataset([0.0, 1.0, 2.0, 3.0], np.array([0.0, 1.0, 1.0, 0.0]))
        tree = fit_tree(dataset, np.arange(4), TreeParams(max_depth=1, min_samples_leaf=1))
        assert tree.feature[0] == 0
        assert tree.threshold[0] == 0.5
        assert _exhaustive_root_split(dataset.features, dataset.targets) == (0, 0.5)

    def test_min_samples_leaf_and_in_bag_means(self):
        tree, dataset = _random_tree(1, min_leaf=6)
        leaf_nodes = [leaf.node_id for leaf in tree.leaves]
        assert all(tree.n_node_samples[node] >= 6 for node in leaf_nodes)
        rows = np.asarray(tree.in_bag_indices)
        nodes = apply_many(tree, dataset.features[rows])
        for node in leaf_nodes:
            members = dataset.targets[rows][nodes == node]
            assert tree.value[node] == pytest.approx(members.mean(), rel=1e-12, abs=1e-12)

    def test_max_depth_zero_is_single_leaf(self):
        tree, dataset = _random_tree(2)
        stump = fit_tree(dataset, tree.in_bag_indices, TreeParams(max_depth=0))
        assert stump.n_leaves == 1
        assert stump.leaves[0].constant == pytest.approx(dataset.targets[tree.in_bag_indices].mean())

    def test_oob_defaults_to_complement(self):
        x = np.arange(12.0)
        dataset = _dataset(x, x)
        tree = fit_tree(dataset, [0, 0, 1, 2, 3, 3, 4, 5, 6, 7, 8, 8])
        assert tree.oob_indices == [9, 10, 11]

    def test_deterministic(self):
        first, _ = _random_tree(5)
        second, _ = _random_tree(5)
        assert first.dict() == second.dict()

    def test_empty_rows_rejected(self):
        dataset = _dataset(np.arange(5.0), np.zeros(5))
        with pytest.raises(ConfigurationError):
            fit_tree(dataset, [])

class TestLeafRegions:

    def test_regions_partition_space(self):
        rng = np.random.default_rng(8)
        for seed in range(5):
            tree, _ = _random_tree(seed)
            for x in rng.uniform(-0.5, 1.5, size=(50, 3)):
                assert sum(leaf.contains(x) for leaf in tree.leaves) == 1

    def test_box_lookup_matches_navigation(self):
        rng = np.random.default_rng(9)
        tree, _ = _random_tree(3)
        X = rng.uniform(-0.2, 1.2, size=(200, 3))
        navigated = tree_predict_raw_many(tree, X)
        for x, expected in zip(X, navigated):
            assert tree_predict_raw_by_box(tree, x) == expected
            assert tree_predict_raw(tree, x) == expected

    def test_extract_matches_stored_leaves(self):
        tree, _ = _random_tree(4)
        assert extract_leaf_regions(tree) == tree.leaves

    def test_leaf_region_validation(self):
        with pytest.raises(ValueError):
            LeafRegion(lower=[1.0], upper=[1.0], constant=0.0)
        with pytest.raises(ValueError):
            LeafRegion(lower=[0.0, 0.0], upper=[1.0], constant=0.0)

class TestTranslateTree:

    def test_translated_tree_matches_shifted_queries(self):
        rng = np.random.default_rng(12)
        # 四分之一网格上的数据，平移量与阈值的运算都是精确的
        X = rng.integers(0, 40, size=(60, 2)) / 4.0
        y = X[:, 0] - 2.0 * (X[:, 1] > 5.0)
        dataset = _dataset(X, y)
        tree = fit_tree(dataset, np.arange(60), TreeParams(min_samples_leaf=3, mtry=2))
        delta = np.array([0.25, -1.5])
        moved = translate_tree(tree, delta)
        queries = rng.integers(-8, 48, size=(100, 2)) / 4.0 + 1.0 / 16.0
        np.testing.assert_array_equal(tree_predict_raw_many(moved, queries + delta),
                                      tree_predict_raw_many(tree, queries))

    def test_original_tree_unchanged(self):
        tree, _ = _random_tree(6)
        before = tree.dict()
        translate_tree(tree, np.ones(3))
        assert tree.dict() == before

    def test_dimension_mismatch(self):
        tree, _ = _random_tree(6)
        with pytest.raises(ValueError):
            translate_tree(tree, [1.0])
