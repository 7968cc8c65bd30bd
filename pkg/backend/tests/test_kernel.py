import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from models.dataset import Dataset
from models.kernel import KernelSpec
from models.tree import LeafRegion, TreeParams
from services import kernel_service
from services.smoothing_service import TreeSmoother
from services.tree_service import fit_tree, translate_tree
from utils.exceptions import IntegrityError

GAUSSIAN = KernelSpec(family="gaussian", lam=0.7)
LAPLACE = KernelSpec(family="laplace", lam=0.7)

class TestKernelSpec:

    def test_lambda_alias(self):
        spec = KernelSpec.parse_obj({"family": "laplace", "lambda": 0.3})
        assert spec.lam == 0.3
        assert spec.family == "laplace"

    @pytest.mark.parametrize("lam", [0.0, -1.0, math.inf, math.nan])
    def test_invalid_lambda(self, lam):
        with pytest.raises(ValidationError):
            KernelSpec(lam=lam)

    def test_unknown_family(self):
        with pytest.raises(ValidationError):
            KernelSpec(family="uniform", lam=1.0)

class TestDistributionFunctions:

    def test_gaussian_matches_scipy(self):
        values = np.linspace(-5.0, 5.0, 101)
        np.testing.assert_allclose(kernel_service.cdf(GAUSSIAN, values, 0.3),
                                   stats.norm.cdf(values, loc=0.3, scale=0.7), rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(kernel_service.sf(GAUSSIAN, values, 0.3),
                                   stats.norm.sf(values, loc=0.3, scale=0.7), rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(kernel_service.pdf(GAUSSIAN, values, 0.3),
                                   stats.norm.pdf(values, loc=0.3, scale=0.7), rtol=1e-12)

    def test_laplace_matches_scipy(self):
        values = np.linspace(-5.0, 5.0, 101)
        np.testing.assert_allclose(kernel_service.cdf(LAPLACE, values, -0.2),
                                   stats.laplace.cdf(values, loc=-0.2, scale=0.7), rtol=1e-12)
        np.testing.assert_allclose(kernel_service.pdf(LAPLACE, values, -0.2),
                                   stats.laplace.pdf(values, loc=-0.2, scale=0.7), rtol=1e-12)

    @pytest.mark.parametrize("kernel", [GAUSSIAN, LAPLACE])
    def test_infinite_bounds(self, kernel):
        assert kernel_service.cdf(kernel, math.inf, 2.0) == 1.0
        assert kernel_service.cdf(kernel, -math.inf, 2.0) == 0.0
        assert kernel_service.sf(kernel, math.inf, 2.0) == 0.0
        assert kernel_service.pdf(kernel, -math.inf, 2.0) == 0.0
        assert kernel_service.cdf(kernel, 2.0, 2.0) == pytest.approx(0.5)

    def test_whole_line_has_unit_mass(self):
        mass = kernel_service.interval_mass(GAUSSIAN, -math.inf, math.inf, 3.0)
        assert float(mass) == 1.0

    def test_far_tail_keeps_relative_accuracy(self):
        kernel = KernelSpec(lam=1.0)
        mass = float(kernel_service.interval_mass(kernel, 30.0, math.inf, 0.0))
        assert mass > 0.0
        assert mass == pytest.approx(stats.norm.sf(30.0), rel=1e-10)
        left = float(kernel_service.interval_mass(kernel, -math.inf, -30.0, 0.0))
        assert left == pytest.approx(stats.norm.cdf(-30.0), rel=1e-10)

class TestRegionProbabilities:

    def test_product_over_dimensions(self):
        region = LeafRegion(lower=[0.0, -math.inf], upper=[1.0, 0.5], constant=1.0)
        x0 = np.array([0.2, 0.1])
        expected = ((stats.norm.cdf(1.0, 0.2, 0.7) - stats.norm.cdf(0.0, 0.2, 0.7))
                    * stats.norm.cdf(0.5, 0.1, 0.7))
        assert kernel_service.region_probability(GAUSSIAN, region, x0) == pytest.approx(expected, rel=1e-12)

    def test_non_partition_detected(self):
        whole = LeafRegion(lower=[-math.inf], upper=[math.inf], constant=0.0)
        with pytest.raises(IntegrityError):
            kernel_service.region_probabilities(GAUSSIAN, [whole, whole], [0.0])

    def test_random_trees_sum_to_one(self):
        rng = np.random.default_rng(21)
        for t in range(20):
            p = int(rng.integers(1, 5))
            X = rng.normal(size=(60, p))
            y = X @ rng.normal(size=p) + rng.normal(0.0, 0.3, size=60)
            dataset = Dataset(features=X, targets=y, feature_names=[f"x{j}" for j in range(p)])
            tree = fit_tree(dataset, rng.integers(0, 60, size=60), TreeParams(min_samples_leaf=3, mtry=p, seed=t))
            family = "gaussian" if t % 2 == 0 else "laplace"
            smoother = TreeSmoother(tree, KernelSpec(family=family, lam=float(rng.uniform(0.01, 2.0))))
            probabilities = smoother.probabilities(rng.normal(scale=2.0, size=(100, p)))
            np.testing.assert_allclose(probabilities.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(probabilities >= 0.0)

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_translation_invariance(self, family):
        rng = np.random.default_rng(22)
        X = rng.uniform(size=(50, 2))
        dataset = Dataset(features=X, targets=X[:, 0] + X[:, 1], feature_names=["a", "b"])
        tree = fit_tree(dataset, np.arange(50), TreeParams(min_samples_leaf=4, mtry=2))
        delta = np.array([0.7, -0.3])
        moved = translate_tree(tree, delta)
        kernel = KernelSpec(family=family, lam=0.2)
        queries = rng.uniform(-0.5, 1.5, size=(30, 2))
        np.testing.assert_allclose(TreeSmoother(moved, kernel).probabilities(queries + delta),
                                   TreeSmoother(tree, kernel).probabilities(queries), atol=1e-12)
