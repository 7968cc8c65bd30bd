import math

import numpy as np
import pytest

from config import settings
from models.dataset import Dataset
from models.kernel import KernelSpec
from models.tree import LeafRegion, TreeParams
from services import kernel_service
from services.smoothing_service import (
    TreeSmoother,
    smoothed_derivative,
    smoothed_gradient,
    smoothed_predict,
    smoothed_variance,
)
from services.tree_service import apply_many, fit_tree, tree_predict_raw_many
from utils.exceptions import UnsupportedOperationError

def _step_tree():
    """阈值为 0 的阶跃树，常数 (0, 1)"""
    dataset = Dataset(features=[[-1.0], [1.0]], targets=[0.0, 1.0], feature_names=["x"])
    return fit_tree(dataset, [0, 1], TreeParams(min_samples_leaf=1))

def _single_leaf_tree(constant=3.0, p=2):
    dataset = Dataset(features=np.zeros((4, p)), targets=np.full(4, constant),
                      feature_names=[f"x{j}" for j in range(p)])
    return fit_tree(dataset, np.arange(4), TreeParams(max_depth=0))

def _random_tree(rng, p=None, n=60, min_leaf=5):
    p = p or int(rng.integers(1, 4))
    X = rng.uniform(-1.0, 1.0, size=(n, p))
    y = np.cos(2.0 * X[:, 0]) + X.sum(axis=1) + rng.normal(0.0, 0.2, size=n)
    dataset = Dataset(features=X, targets=y, feature_names=[f"x{j}" for j in range(p)])
    params = TreeParams(min_samples_leaf=min_leaf, mtry=p, seed=int(rng.integers(0, 1000)))
    return fit_tree(dataset, rng.integers(0, n, size=n), params)

def _kernel_draws(rng, family, lam, size):
    if family == "gaussian":
        return rng.normal(0.0, lam, size=size)
    return rng.laplace(0.0, lam, size=size)

class TestClosedForms:

    def test_cdf_reference_value(self):
        assert kernel_service.cdf(KernelSpec(lam=1.0), 1.96, 0.0) == pytest.approx(0.97500, abs=1e-5)

    def test_region_probability_symmetric_cases(self):
        tree = _step_tree()
        kernel = KernelSpec(lam=1.0)
        assert kernel_service.region_probability(kernel, tree.leaves[1], [0.0]) == 0.5
        whole = _single_leaf_tree(p=2).leaves[0]
        assert kernel_service.region_probability(kernel, whole, [5.0, -5.0]) == 1.0
        quadrant = LeafRegion(lower=[0.0, 0.0], upper=[math.inf, math.inf], constant=1.0)
        assert kernel_service.region_probability(kernel, quadrant, [0.0, 0.0]) == pytest.approx(0.25)

    def test_single_leaf_tree(self):
        smoother = TreeSmoother(_single_leaf_tree(3.0), KernelSpec(lam=0.4))
        for x0 in ([0.0, 0.0], [10.0, -3.0]):
            assert smoothed_predict(smoother, x0) == pytest.approx(3.0)
            assert smoothed_variance(smoother, x0) == 0.0
            assert smoothed_derivative(smoother, x0, 1) == 0.0

    def test_step_tree_at_threshold(self):
        smoother = TreeSmoother(_step_tree(), KernelSpec(lam=1.0))
        assert smoothed_predict(smoother, [0.0]) == 0.5
        assert smoothed_variance(smoother, [0.0]) == pytest.approx(0.25)
        assert smoothed_derivative(smoother, [0.0], 0) == pytest.approx(1.0 / math.sqrt(2.0 * math.pi), abs=1e-6)

    def test_derivative_vanishes_far_from_boundaries(self):
        smoother = TreeSmoother(_step_tree(), KernelSpec(lam=0.1))
        assert abs(smoothed_derivative(smoother, [2.0], 0)) < 1e-12

    def test_derivative_requires_gaussian(self):
        smoother = TreeSmoother(_step_tree(), KernelSpec(family="laplace", lam=1.0))
        with pytest.raises(UnsupportedOperationError):
            smoothed_derivative(smoother, [0.0], 0)

    def test_invalid_beta_rejected(self):
        with pytest.raises(ValueError):
            TreeSmoother(_step_tree(), KernelSpec(lam=1.0), beta0=math.nan)

class TestMonteCarloOracle:

    def test_mean_and_variance_match_kernel_draws(self):
        rng = np.random.default_rng(2024)
        n_draws = 1_000_000
        for case in range(10):
            tree = _random_tree(rng)
            family = "gaussian" if case % 2 == 0 else "laplace"
            lam = float(rng.uniform(0.1, 1.0))
            x0 = rng.uniform(-1.0, 1.0, size=tree.n_features)
            smoother = TreeSmoother(tree, KernelSpec(family=family, lam=lam))

            values = tree_predict_raw_many(tree, x0 + _kernel_draws(rng, family, lam, (n_draws, tree.n_features)))
            centered = values - values.mean()
            mc_var = float(np.mean(centered ** 2))
            mean_se = math.sqrt(mc_var / n_draws)
            var_se = math.sqrt(max(float(np.mean(centered ** 4)) - mc_var ** 2, 0.0) / n_draws)

            # 容差取 4 SE 而非 3 SE：10 个案例共 20 项同时检验，3 SE 下整体误报率约 5%
            assert abs(smoothed_predict(smoother, x0) - values.mean()) <= 4.0 * mean_se + 1e-12
            assert abs(smoothed_variance(smoother, x0) - mc_var) <= 4.0 * var_se + 1e-12

    def test_leaf_probabilities_match_frequencies(self):
        rng = np.random.default_rng(7)
        tree = _random_tree(rng, p=2)
        lam = 0.7
        x0 = np.array([0.1, -0.2])
        smoother = TreeSmoother(tree, KernelSpec(lam=lam))
        probabilities = smoother.probabilities(x0)[0]

        n_draws = 1_000_000
        nodes = apply_many(tree, x0 + rng.normal(0.0, lam, size=(n_draws, 2)))
        leaf_of_node = tree.arrays()["leaf_of_node"]
        counts = np.zeros(tree.n_leaves)
        unique, frequency = np.unique(nodes, return_counts=True)
        for node, count in zip(unique, frequency):
            counts[leaf_of_node[node]] = count
        frequencies = counts / n_draws
        se = np.sqrt(probabilities * (1.0 - probabilities) / n_draws)
        # 所有叶子同时检验，容差取 4 SE 而非 3 SE
        assert np.all(np.abs(frequencies - probabilities) <= 4.0 * se + 1e-12)

class TestLimitsAndProperties:

    def test_prediction_within_leaf_constant_range(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            tree = _random_tree(rng)
            constants = tree.arrays()["constants"]
            smoother = TreeSmoother(tree, KernelSpec(lam=float(rng.uniform(0.05, 3.0))))
            predictions = smoother.predict_many(rng.uniform(-3.0, 3.0, size=(50, tree.n_features)))
            assert np.all(predictions >= constants.min() - 1e-12)
            assert np.all(predictions <= constants.max() + 1e-12)

    def test_small_lambda_recovers_raw_tree(self):
        rng = np.random.default_rng(32)
        for _ in range(5):
            tree = _random_tree(rng)
            arrays = tree.arrays()
            X = rng.uniform(-1.5, 1.5, size=(400, tree.n_features))
            # 只保留离所有有限边界至少 0.01 的点
            bounds = np.concatenate([arrays["lower"], arrays["upper"]])
            gaps = np.abs(X[:, None, :] - bounds[None, :, :])
            X = X[np.all(gaps >= 0.01, axis=(1, 2))]
            assert X.shape[0] > 0
            smoother = TreeSmoother(tree, KernelSpec(lam=1e-10))
            np.testing.assert_allclose(smoother.predict_many(X), tree_predict_raw_many(tree, X), atol=1e-12)

    def test_calibration_is_linear(self):
        rng = np.random.default_rng(33)
        tree = _random_tree(rng, p=2)
        kernel = KernelSpec(lam=0.3)
        X = rng.uniform(-1.0, 1.0, size=(40, 2))
        plain = TreeSmoother(tree, kernel)
        calibrated = TreeSmoother(tree, kernel, beta0=-0.7, beta1=1.8)
        np.testing.assert_array_equal(calibrated.predict_many(X), 1.8 * plain.predict_many(X) + (-0.7))
        np.testing.assert_allclose(calibrated.variance_many(X), 1.8 ** 2 * plain.variance_many(X), rtol=1e-12)

    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(34)
        h = 1e-5
        for _ in range(50):
            tree = _random_tree(rng)
            p = tree.n_features
            smoother = TreeSmoother(tree, KernelSpec(lam=float(rng.uniform(0.1, 1.0))),
                                    beta0=float(rng.normal()), beta1=float(rng.uniform(0.5, 2.0)))
            x0 = rng.uniform(-1.0, 1.0, size=p)
            j = int(rng.integers(0, p))
            step = np.zeros(p)
            step[j] = h
            numeric = (smoothed_predict(smoother, x0 + step) - smoothed_predict(smoother, x0 - step)) / (2.0 * h)
            assert smoothed_derivative(smoother, x0, j) == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_gradient_collects_all_dimensions(self):
        rng = np.random.default_rng(35)
        tree = _random_tree(rng, p=3)
        smoother = TreeSmoother(tree, KernelSpec(lam=0.5))
        x0 = np.array([0.2, -0.1, 0.4])
        gradient = smoothed_gradient(smoother, x0)
        assert gradient.shape == (3,)
        for j in range(3):
            assert gradient[j] == pytest.approx(smoothed_derivative(smoother, x0, j), rel=1e-12, abs=1e-15)

    def test_chunking_does_not_change_results(self, monkeypatch):
        rng = np.random.default_rng(36)
        tree = _random_tree(rng, p=2)
        smoother = TreeSmoother(tree, KernelSpec(lam=0.4))
        X = rng.uniform(-1.0, 1.0, size=(25, 2))
        whole_mean, whole_var = smoother.moments_many(X)
        whole_derivative = smoother.derivative_many(X, 1)
        monkeypatch.setattr(settings, "PREDICT_CHUNK_SIZE", 4)
        mean, variance = smoother.moments_many(X)
        np.testing.assert_allclose(mean, whole_mean, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(variance, whole_var, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(smoother.derivative_many(X, 1), whole_derivative, rtol=1e-12, atol=1e-14)

    def test_with_params_shares_leaves(self):
        smoother = TreeSmoother(_step_tree(), KernelSpec(lam=1.0))
        narrow = smoother.with_params(lam=0.01, beta1=2.0)
        assert narrow.lam == 0.01 and narrow.beta1 == 2.0 and narrow.beta0 == 0.0
        assert smoother.lam == 1.0
        assert smoothed_predict(narrow, [0.5]) == pytest.approx(2.0)
