import os
import sys

import numpy as np
import pytest

# 测试以 backend/ 为根导入 config、models、services
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from models.dataset import Dataset
from models.forest import LambdaSearchSpec
from models.tree import TreeParams
from services.data_service import make_step_data
from services.forest_service import fit_forest, fit_smoothed_forest

@pytest.fixture
def random_dataset():
    """三维光滑回归数据"""
    rng = np.random.default_rng(3)
    X = rng.uniform(0.0, 1.0, size=(120, 3))
    y = np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2 + rng.normal(0.0, 0.1, size=120)
    return Dataset(features=X, targets=y, feature_names=["a", "b", "c"], name="random")

@pytest.fixture
def step_dataset():
    return make_step_data(200, noise_sd=0.1, seed=1)

@pytest.fixture
def small_search():
    return LambdaSearchSpec(grid_size=7, rel_tol=1e-2)

@pytest.fixture
def small_forest(random_dataset):
    return fit_forest(random_dataset, 5, TreeParams(min_samples_leaf=5), seed=7)

@pytest.fixture
def smoothed_model(random_dataset, small_search):
    return fit_smoothed_forest(random_dataset, n_trees=5, params=TreeParams(min_samples_leaf=5),
                               seed=7, calibration="local", search=small_search)
