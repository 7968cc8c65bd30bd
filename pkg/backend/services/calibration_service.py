import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import Dataset
from models.forest import CalibrationResult, LambdaSearchSpec, SmootherParams
from models.kernel import KernelSpec
from models.tree import FittedTree
from services.cache_service import CacheService
from services.data_service import feature_scale
from services.smoothing_service import TreeSmoother
from config import settings
from utils.exceptions import ConfigurationError, SearchFailedError
from utils.metrics import record_calibration_metrics

logger = logging.getLogger("smoothing")

_INV_PHI = (math.sqrt(5) - 1) / 2
_INV_PHI_SQ = (3 - math.sqrt(5)) / 2

# 预测方差相对于 Σp² 低于该值时按常数预测处理
_DEGENERATE_RATIO = 1e-24

def fit_beta_ols(predictions, targets) -> Tuple[float, float]:
    """最小二乘拟合 y ≈ β1·ŷ + β0，返回 (β1, β0)

    预测为常数时取最小范数极限解：β1 = 0，β0 = mean(y)。
    """
    p = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if p.size != y.size or p.size == 0:
        raise ValueError(f"预测与目标长度必须相同且 ≥ 1，实际为 {p.size} 与 {y.size}")
    p_mean = float(np.mean(p))
    y_mean = float(np.mean(y))
    dp = p - p_mean
    sxx = float(np.dot(dp, dp))
    if sxx <= _DEGENERATE_RATIO * max(float(np.dot(p, p)), np.finfo(float).tiny):
        return 0.0, y_mean
    beta1 = float(np.dot(dp, y - y_mean)) / sxx
    beta0 = y_mean - beta1 * p_mean
    return beta1, beta0

def residual_sum_of_squares(predictions, targets, beta1: float = 1.0, beta0: float = 0.0) -> float:
    residuals = beta1 * np.asarray(predictions, dtype=float) + beta0 - np.asarray(targets, dtype=float)
    return float(np.dot(residuals, residuals))

def resolve_search(spec: Optional[LambdaSearchSpec], dataset: Dataset) -> LambdaSearchSpec:
    """补全 λ 搜索范围：未指定时取 [1e-3·s, 10·s]，s 为特征标准差中位数"""
    spec = spec or LambdaSearchSpec(grid_size=settings.DEFAULT_LAMBDA_GRID, rel_tol=settings.DEFAULT_LAMBDA_REL_TOL)
    scale = feature_scale(dataset)
    lambda_min = spec.lambda_min if spec.lambda_min is not None else settings.LAMBDA_MIN_FACTOR * scale
    lambda_max = spec.lambda_max if spec.lambda_max is not None else settings.LAMBDA_MAX_FACTOR * scale
    if not (0 < lambda_min < lambda_max and math.isfinite(lambda_max)):
        raise ConfigurationError(f"λ 搜索范围不合法: [{lambda_min}, {lambda_max}]")
    return LambdaSearchSpec(lambda_min=lambda_min, lambda_max=lambda_max,
                            grid_size=spec.grid_size, rel_tol=spec.rel_tol)

def lambda_grid(spec: LambdaSearchSpec) -> np.ndarray:
    return np.geomspace(spec.lambda_min, spec.lambda_max, spec.grid_size)

def lambda_line_search(objective: Callable[[float], float], spec: LambdaSearchSpec,
                       n_jobs: int = 1) -> Tuple[float, float]:
    """一维 λ 搜索

    先在对数网格上求值，再在最优网格点的相邻两点之间（对数尺度）做黄金分割细化，
    直到相对容差 rel_tol。返回所有已求值点中目标最小的 (λ, 值)。
    """
    if spec.lambda_min is None or spec.lambda_max is None:
        raise ConfigurationError("λ 搜索范围未指定，先调用 resolve_search")
    if not 0 < spec.lambda_min < spec.lambda_max:
        raise ConfigurationError(f"λ 搜索范围不合法: [{spec.lambda_min}, {spec.lambda_max}]")

    def safe(lam: float) -> float:
        value = float(objective(lam))
        return value if math.isfinite(value) else math.inf

    grid = lambda_grid(spec)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            values = list(executor.map(safe, grid))
    else:
        values = [safe(lam) for lam in grid]

    if all(math.isinf(v) for v in values):
        raise SearchFailedError(f"λ 网格 [{spec.lambda_min:.4g}, {spec.lambda_max:.4g}] 上目标函数全部非有限")

    best_index = int(np.argmin(values))
    best_lam, best_value = float(grid[best_index]), values[best_index]

    lo = math.log(grid[max(best_index - 1, 0)])
    hi = math.log(grid[min(best_index + 1, grid.size - 1)])

    def refine(u: float) -> float:
        nonlocal best_lam, best_value
        lam = math.exp(u)
        value = safe(lam)
        if value < best_value:
            best_lam, best_value = lam, value
        return value

    _golden_section(refine, lo, hi, math.log1p(spec.rel_tol))
    return best_lam, best_value

def _golden_section(f: Callable[[float], float], a: float, b: float, tol: float):
    """在 [a, b] 上对单峰函数做黄金分割搜索（只负责求值，最优点由调用方记录）"""
    dist = b - a
    if dist <= tol:
        f((a + b) / 2)
        return

    n = int(math.ceil(math.log(tol / dist) / math.log(_INV_PHI)))
    c = a + _INV_PHI_SQ * dist
    d = a + _INV_PHI * dist
    yc = f(c)
    yd = f(d)

    for _ in range(n - 1):
        if yc < yd:
            b = d
            d = c
            yd = yc
            dist = _INV_PHI * dist
            c = a + _INV_PHI_SQ * dist
            yc = f(c)
        else:
            a = c
            c = d
            yc = yd
            dist = _INV_PHI * dist
            d = a + _INV_PHI * dist
            yd = f(d)

class _OOBView:
    """一棵树的 OOB 特征与目标"""

    __slots__ = ("index", "tree", "features", "targets")

    def __init__(self, index: int, tree: FittedTree, dataset: Dataset):
        if not tree.oob_indices:
            raise ConfigurationError(
                f"第 {index} 棵树没有 OOB 样本，无法校准；请增大训练样本数或减少袋内抽样次数"
            )
        rows = np.asarray(tree.oob_indices, dtype=int)
        if rows.max() >= dataset.n:
            raise ConfigurationError(f"第 {index} 棵树的 OOB 索引超出数据集行数 {dataset.n}")
        self.index = index
        self.tree = tree
        self.features = dataset.features[rows]
        self.targets = dataset.targets[rows]

def _oob_views(forest: Sequence[FittedTree], dataset: Dataset) -> List[_OOBView]:
    if not forest:
        raise ConfigurationError("森林为空，无法校准")
    return [_OOBView(t, tree, dataset) for t, tree in enumerate(forest)]

def _oob_predictions(view: _OOBView, lam: float, family: str, cache: CacheService) -> np.ndarray:
    key = cache.make_key(view.index, lam)
    return cache.get_or_compute(
        key,
        lambda: TreeSmoother(view.tree, KernelSpec(family=family, lam=lam)).predict_uncalibrated_many(view.features),
    )

def calibrate_global(forest: Sequence[FittedTree], dataset: Dataset, search: Optional[LambdaSearchSpec] = None,
                     kernel_family: str = "gaussian", cache: Optional[CacheService] = None,
                     n_jobs: int = 1) -> CalibrationResult:
    """全局校准：所有树共享一组 (λ, β0, β1)，最小化汇总的 OOB 残差平方和

    给定 λ 时 β 为汇总所有 (树, OOB 点) 的最小二乘解，只需对 λ 做一维搜索。
    """
    start_time = time.time()
    views = _oob_views(forest, dataset)
    spec = resolve_search(search, dataset)
    cache = cache or CacheService()
    targets = np.concatenate([view.targets for view in views])
    evaluations = 0

    def pooled(lam: float) -> np.ndarray:
        return np.concatenate([_oob_predictions(view, lam, kernel_family, cache) for view in views])

    def objective(lam: float) -> float:
        nonlocal evaluations
        evaluations += 1
        predictions = pooled(lam)
        beta1, beta0 = fit_beta_ols(predictions, targets)
        return residual_sum_of_squares(predictions, targets, beta1, beta0)

    lam, value = lambda_line_search(objective, spec, n_jobs=n_jobs)
    beta1, beta0 = fit_beta_ols(pooled(lam), targets)
    oob_rss = residual_sum_of_squares(pooled(lam), targets, beta1, beta0)

    params = SmootherParams(lam=lam, beta0=beta0, beta1=beta1)
    result = CalibrationResult(
        mode="global",
        per_tree=[params] * len(views),
        oob_rss=oob_rss,
        lambda_min=spec.lambda_min,
        lambda_max=spec.lambda_max,
        n_evaluations=evaluations,
    )
    logger.info(f"Global calibration: lambda={lam:.5g}, beta1={beta1:.5g}, beta0={beta0:.5g}, oob_rss={oob_rss:.6g}")
    record_calibration_metrics(
        mode="global",
        oob_rss=oob_rss,
        lambdas={"min": lam, "median": lam, "max": lam},
        n_evaluations=evaluations,
        calibration_time=time.time() - start_time,
    )
    return result

def _calibrate_one(view: _OOBView, spec: LambdaSearchSpec, kernel_family: str,
                   cache: CacheService) -> Tuple[SmootherParams, float, int]:
    evaluations = 0

    def objective(lam: float) -> float:
        nonlocal evaluations
        evaluations += 1
        predictions = _oob_predictions(view, lam, kernel_family, cache)
        beta1, beta0 = fit_beta_ols(predictions, view.targets)
        return residual_sum_of_squares(predictions, view.targets, beta1, beta0)

    lam, _ = lambda_line_search(objective, spec)
    predictions = _oob_predictions(view, lam, kernel_family, cache)
    beta1, beta0 = fit_beta_ols(predictions, view.targets)
    rss = residual_sum_of_squares(predictions, view.targets, beta1, beta0)
    return SmootherParams(lam=lam, beta0=beta0, beta1=beta1), rss, evaluations

def calibrate_local(forest: Sequence[FittedTree], dataset: Dataset, search: Optional[LambdaSearchSpec] = None,
                    kernel_family: str = "gaussian", cache: Optional[CacheService] = None,
                    n_jobs: int = 1) -> CalibrationResult:
    """局部校准：每棵树独立选择 (λ_t, β0_t, β1_t) 最小化自己的 OOB 残差平方和

    目标函数是各树残差平方和之和，因此逐树最小化即可；总 oob_rss 按树的顺序求和。
    """
    start_time = time.time()
    views = _oob_views(forest, dataset)
    spec = resolve_search(search, dataset)
    cache = cache or CacheService()

    def run(view: _OOBView):
        return _calibrate_one(view, spec, kernel_family, cache)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            outcomes = list(executor.map(run, views))
    else:
        outcomes = [run(view) for view in views]

    per_tree = [params for params, _, _ in outcomes]
    oob_rss = float(sum(rss for _, rss, _ in outcomes))
    evaluations = sum(count for _, _, count in outcomes)
    lambdas = np.array([params.lam for params in per_tree])

    result = CalibrationResult(
        mode="local",
        per_tree=per_tree,
        oob_rss=oob_rss,
        lambda_min=spec.lambda_min,
        lambda_max=spec.lambda_max,
        n_evaluations=evaluations,
    )
    logger.info(
        f"Local calibration: trees={len(per_tree)}, lambda median={np.median(lambdas):.5g}, oob_rss={oob_rss:.6g}"
    )
    record_calibration_metrics(
        mode="local",
        oob_rss=oob_rss,
        lambdas={"min": float(lambdas.min()), "median": float(np.median(lambdas)), "max": float(lambdas.max())},
        n_evaluations=evaluations,
        calibration_time=time.time() - start_time,
    )
    return result

def uncalibrated_objective(forest: Sequence[FittedTree], dataset: Dataset, lam: float,
                           kernel_family: str = "gaussian") -> float:
    """给定 λ、β1 = 1、β0 = 0 时的 OOB 残差平方和"""
    views = _oob_views(forest, dataset)
    cache = CacheService()
    return float(sum(
        residual_sum_of_squares(_oob_predictions(view, lam, kernel_family, cache), view.targets)
        for view in views
    ))

def global_objective(forest: Sequence[FittedTree], dataset: Dataset, lam: float,
                     kernel_family: str = "gaussian") -> float:
    """给定 λ 时全局目标的值（β 取汇总最小二乘解）"""
    views = _oob_views(forest, dataset)
    cache = CacheService()
    predictions = np.concatenate([_oob_predictions(view, lam, kernel_family, cache) for view in views])
    targets = np.concatenate([view.targets for view in views])
    beta1, beta0 = fit_beta_ols(predictions, targets)
    return residual_sum_of_squares(predictions, targets, beta1, beta0)
