import numpy as np
import pytest
from pydantic import ValidationError

from models.dataset import Dataset
from services.data_service import (
    bootstrap,
    bootstrap_rows,
    feature_scale,
    ground_truth,
    load_csv,
    load_points,
    make_hetero_data,
    make_step_data,
    save_csv,
)
from utils.exceptions import DataFormatError

def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)

class TestLoadCsv:

    def test_last_column_is_default_target(self, tmp_path):
        path = _write(tmp_path / "toy.csv", "a,b,y\n1,2,3\n4,5,6\n")
        dataset = load_csv(path)
        np.testing.assert_array_equal(dataset.features, [[1.0, 2.0], [4.0, 5.0]])
        np.testing.assert_array_equal(dataset.targets, [3.0, 6.0])
        assert dataset.feature_names == ["a", "b"]
        assert dataset.name == "toy"

    def test_target_by_name_and_index(self, tmp_path):
        path = _write(tmp_path / "toy.csv", "a,b,y\n1,2,3\n4,5,6\n")
        by_name = load_csv(path, "a")
        by_index = load_csv(path, "0")
        assert by_name.feature_names == ["b", "y"]
        np.testing.assert_array_equal(by_name.targets, [1.0, 4.0])
        np.testing.assert_array_equal(by_index.features, by_name.features)

    def test_unknown_target(self, tmp_path):
        path = _write(tmp_path / "toy.csv", "a,b,y\n1,2,3\n")
        with pytest.raises(DataFormatError, match="目标列"):
            load_csv(path, "z")

    def test_non_numeric_cell_reports_position(self, tmp_path):
        path = _write(tmp_path / "bad.csv", "a,y\n1,2\nfoo,3\n")
        with pytest.raises(DataFormatError, match="第 3 行第 1 列"):
            load_csv(path)

    def test_missing_and_empty_files(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_csv(str(tmp_path / "missing.csv"))
        with pytest.raises(DataFormatError):
            load_csv(_write(tmp_path / "empty.csv", ""))
        with pytest.raises(DataFormatError):
            load_csv(_write(tmp_path / "header.csv", "a,y\n"))

    def test_single_column_rejected(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_csv(_write(tmp_path / "one.csv", "y\n1\n2\n"))

    def test_save_then_load_preserves_values(self, tmp_path):
        dataset = make_hetero_data(30, seed=4)
        path = str(tmp_path / "hetero.csv")
        save_csv(dataset, path)
        loaded = load_csv(path)
        np.testing.assert_array_equal(loaded.features, dataset.features)
        np.testing.assert_array_equal(loaded.targets, dataset.targets)

class TestLoadPoints:

    def test_selects_named_columns(self, tmp_path):
        path = _write(tmp_path / "q.csv", "b,a,extra\n1,2,9\n3,4,9\n")
        points = load_points(path, ["a", "b"])
        np.testing.assert_array_equal(points, [[2.0, 1.0], [4.0, 3.0]])

    def test_uses_all_columns_without_names(self, tmp_path):
        path = _write(tmp_path / "q.csv", "u,v\n1,2\n")
        np.testing.assert_array_equal(load_points(path, ["a", "b"]), [[1.0, 2.0]])

    def test_non_finite_rejected(self, tmp_path):
        path = _write(tmp_path / "q.csv", "u\n1\nnan\n")
        with pytest.raises(DataFormatError, match="第 3 行"):
            load_points(path)

class TestDataset:

    def test_one_dimensional_features_become_a_column(self):
        dataset = Dataset(features=[1.0, 2.0, 3.0], targets=[0.0, 1.0, 0.0], feature_names=["x"])
        assert dataset.features.shape == (3, 1)
        assert dataset.n == 3 and dataset.p == 1

    def test_rejects_non_finite_and_mismatched(self):
        with pytest.raises(ValidationError):
            Dataset(features=[[1.0], [np.nan]], targets=[0.0, 1.0], feature_names=["x"])
        with pytest.raises(ValidationError):
            Dataset(features=[[1.0], [2.0]], targets=[0.0], feature_names=["x"])
        with pytest.raises(ValidationError):
            Dataset(features=[[1.0], [2.0]], targets=[0.0, 1.0], feature_names=["x", "y"])

    def test_arrays_are_read_only_and_caller_array_untouched(self):
        X = np.zeros((4, 2))
        dataset = Dataset(features=X, targets=np.zeros(4), feature_names=["a", "b"])
        with pytest.raises(ValueError):
            dataset.features[0, 0] = 1.0
        X[0, 0] = 1.0
        assert dataset.features[0, 0] == 0.0

    def test_subset_allows_repeats(self):
        dataset = make_step_data(10, seed=0)
        sub = dataset.subset([0, 0, 3])
        assert sub.n == 3
        np.testing.assert_array_equal(sub.features[0], sub.features[1])

class TestBootstrap:

    def test_in_bag_and_oob_partition_rows(self):
        split = bootstrap_rows(50, seed=11)
        assert len(split.in_bag) == 50
        assert set(split.oob).isdisjoint(split.in_bag)
        assert set(split.oob) | set(split.in_bag) == set(range(50))
        assert split.oob == sorted(split.oob)

    def test_deterministic(self):
        dataset = make_step_data(40, seed=2)
        assert bootstrap(dataset, 5) == bootstrap(dataset, 5)
        assert bootstrap(dataset, 5) != bootstrap(dataset, 6)

    def test_subsample_without_replacement(self):
        split = bootstrap_rows(20, seed=1, size=12, replace=False)
        assert len(set(split.in_bag)) == 12
        assert len(split.oob) == 8
        with pytest.raises(DataFormatError):
            bootstrap_rows(5, seed=1, size=6, replace=False)

class TestSyntheticData:

    def test_noiseless_step_targets(self):
        dataset = make_step_data(100, b=0.0, w=1.0, seed=3)
        x = dataset.features[:, 0]
        assert np.all((x > -1.0) & (x < 1.0))
        np.testing.assert_array_equal(dataset.targets, (x > 0).astype(float))
        np.testing.assert_array_equal(ground_truth(dataset, x), dataset.targets)

    def test_hetero_ground_truth(self):
        dataset = make_hetero_data(200, seed=5, noise_sd=0.0)
        np.testing.assert_allclose(ground_truth(dataset, dataset.features), dataset.targets)
        flat = dataset.features[:, 0] < 0.5
        assert np.all(dataset.targets[flat] == 0.0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            make_step_data(1)
        with pytest.raises(ValueError):
            make_step_data(10, w=0.0)
        with pytest.raises(ValueError):
            make_hetero_data(5)

class TestFeatureScale:

    def test_median_of_standard_deviations(self):
        X = np.column_stack([np.zeros(4), [0.0, 2.0, 0.0, 2.0], [0.0, 4.0, 0.0, 4.0], [0.0, 6.0, 0.0, 6.0]])
        dataset = Dataset(features=X, targets=np.zeros(4), feature_names=["a", "b", "c", "d"])
        # 常数列被忽略，其余列标准差为 1, 2, 3
        assert feature_scale(dataset) == pytest.approx(2.0)

    def test_all_constant_falls_back_to_one(self):
        dataset = Dataset(features=np.ones((3, 2)), targets=np.zeros(3), feature_names=["a", "b"])
        assert feature_scale(dataset) == 1.0
