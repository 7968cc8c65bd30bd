import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import settings
from models.dataset import Dataset
from models.forest import (
    SCHEMA_VERSION,
    ForestMetadata,
    LambdaSearchSpec,
    PredictiveDistribution,
    SmootherParams,
    SmoothedForestModel,
)
from models.kernel import KernelSpec
from models.tree import FittedTree, TreeParams
from services import kernel_service
from services.cache_service import CacheService
from services.calibration_service import calibrate_global, calibrate_local, lambda_grid, resolve_search
from services.data_service import SeedLike, bootstrap_rows
from services.smoothing_service import TreeSmoother, smoothed_gradient
from services.tree_service import fit_tree, tree_predict_raw_many
from utils.exceptions import ConfigurationError, ModelFormatError, ModelVersionError
from utils.metrics import record_fit_metrics

logger = logging.getLogger("smoothing")

# 袋外集合为空时的最大重抽次数
_MAX_RESEED = 100

def _distinct_oob(ids: np.ndarray, in_bag: Sequence[int]) -> List[int]:
    """原始编号不在袋内的位置，每个原始编号只保留第一次出现的位置"""
    outside = ~np.isin(ids, ids[np.asarray(in_bag, dtype=int)])
    first = np.zeros(ids.size, dtype=bool)
    first[np.unique(ids, return_index=True)[1]] = True
    return np.flatnonzero(outside & first).tolist()

def fit_forest(dataset: Dataset, n_trees: int, params: Optional[TreeParams] = None,
               seed: SeedLike = 0, row_ids: Optional[Sequence[int]] = None) -> List[FittedTree]:
    """训练 T 棵 CART 树，每棵树使用独立的自助样本与特征抽样

    种子拆分规则：SeedSequence(seed).spawn(T)，每个子序列再拆成 (抽样, 建树) 两个流。
    袋外集合为空（n ≥ 2 时概率极小）时在同一子序列上重新抽样。

    row_ids 为每一行在原始数据中的编号。训练集本身是有放回抽样得到时，
    同一原始行会出现多次；此时袋外集合只包含原始编号未被该树抽中的行，且每个编号只取一行。
    """
    if n_trees < 1:
        raise ConfigurationError(f"树的数量必须 ≥ 1，实际为 {n_trees}")
    ids = np.arange(dataset.n) if row_ids is None else np.asarray(row_ids, dtype=int)
    if ids.shape != (dataset.n,):
        raise ConfigurationError(f"row_ids 长度 {ids.size} 与行数 {dataset.n} 不一致")
    n_distinct = np.unique(ids).size
    params = params or TreeParams(
        max_depth=settings.DEFAULT_MAX_DEPTH,
        min_samples_leaf=settings.DEFAULT_MIN_SAMPLES_LEAF,
    )
    start_time = time.time()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    forest = []
    for t, child in enumerate(root.spawn(n_trees)):
        sample_seq, tree_seq = child.spawn(2)
        split = bootstrap_rows(dataset.n, sample_seq)
        oob = _distinct_oob(ids, split.in_bag)
        attempts = 0
        while not oob and n_distinct >= 2 and attempts < _MAX_RESEED:
            attempts += 1
            logger.warning(f"Tree {t} has an empty OOB set, resampling (attempt {attempts})")
            split = bootstrap_rows(dataset.n, sample_seq.spawn(1)[0])
            oob = _distinct_oob(ids, split.in_bag)
        tree_seed = int(tree_seq.generate_state(1)[0])
        tree = fit_tree(dataset, split.in_bag, params.copy(update={"seed": tree_seed}), oob_indices=oob)
        forest.append(tree)

    total_leaves = sum(tree.n_leaves for tree in forest)
    logger.info(f"Fitted forest: trees={n_trees}, rows={dataset.n}, leaves={total_leaves}")
    record_fit_metrics(
        n_trees=n_trees,
        n_rows=dataset.n,
        n_features=dataset.p,
        total_leaves=total_leaves,
        fit_time=time.time() - start_time,
        seed=seed if isinstance(seed, int) else None,
    )
    return forest

def fit_smoothed_forest(dataset: Dataset, n_trees: int = None, params: Optional[TreeParams] = None,
                        seed: int = 0, calibration: str = "local", kernel_family: str = "gaussian",
                        search: Optional[LambdaSearchSpec] = None, oob_noise: bool = False,
                        forest: Optional[List[FittedTree]] = None, n_jobs: int = None,
                        row_ids: Optional[Sequence[int]] = None) -> SmoothedForestModel:
    """训练并校准平滑随机森林

    calibration 为 global / local 时按 OOB 残差选择 (λ, β)；为 none 时 λ 取搜索网格的中点，β0 = 0、β1 = 1。
    传入 forest 时直接平滑已有的森林（实验中 SRF 复用 RF_base 的树）。
    row_ids 的含义同 fit_forest。
    """
    n_trees = n_trees or settings.DEFAULT_N_TREES
    n_jobs = n_jobs or settings.N_JOBS
    params = params or TreeParams(
        max_depth=settings.DEFAULT_MAX_DEPTH,
        min_samples_leaf=settings.DEFAULT_MIN_SAMPLES_LEAF,
    )
    if forest is None:
        forest = fit_forest(dataset, n_trees, params, seed, row_ids=row_ids)

    cache = CacheService()
    if calibration == "global":
        result = calibrate_global(forest, dataset, search, kernel_family, cache, n_jobs)
        smoothers, oob_rss = result.per_tree, result.oob_rss
    elif calibration == "local":
        result = calibrate_local(forest, dataset, search, kernel_family, cache, n_jobs)
        smoothers, oob_rss = result.per_tree, result.oob_rss
    elif calibration == "none":
        grid = lambda_grid(resolve_search(search, dataset))
        smoothers = [SmootherParams(lam=float(grid[grid.size // 2]))] * len(forest)
        oob_rss = None
    else:
        raise ConfigurationError(f"未知的校准方式: {calibration}，可选 global, local, none")

    model = SmoothedForestModel(
        trees=forest,
        smoothers=smoothers,
        noise_variance=0.0,
        metadata=ForestMetadata(
            n_trees=len(forest),
            params=params,
            kernel_family=kernel_family,
            calibration_mode=calibration,
            noise_source="oob" if oob_noise else "in_sample",
            seed=seed,
            n_train=dataset.n,
            feature_names=list(dataset.feature_names),
            oob_rss=oob_rss,
        ),
    )
    noise = oob_noise_variance(model, dataset) if oob_noise else in_sample_noise_variance(model, dataset)
    model = model.copy(update={"noise_variance": noise})
    logger.info(f"Smoothed forest ready: trees={model.n_trees}, calibration={calibration}, noise={noise:.6g}")
    return model

def get_smoothers(model: SmoothedForestModel) -> List[TreeSmoother]:
    """按模型参数构造（并缓存）每棵树的平滑器"""
    if not model._compiled:
        family = model.metadata.kernel_family
        model._compiled.extend(
            TreeSmoother(tree, KernelSpec(family=family, lam=params.lam), params.beta0, params.beta1)
            for tree, params in zip(model.trees, model.smoothers)
        )
    return model._compiled

def _as_matrix(model: SmoothedForestModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    p = model.trees[0].n_features
    if X.ndim != 2 or X.shape[1] != p:
        raise ConfigurationError(f"查询点维数必须为 {p}，实际形状 {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ConfigurationError("查询点必须为有限实数")
    return X

def _per_tree(model: SmoothedForestModel, fn, n_jobs: int = 1) -> list:
    # 结果按树的顺序返回，归约顺序与调度无关
    smoothers = get_smoothers(model)
    if n_jobs > 1 and len(smoothers) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            return list(executor.map(fn, smoothers))
    return [fn(s) for s in smoothers]

def forest_predict_many(model: SmoothedForestModel, X, n_jobs: int = 1) -> np.ndarray:
    """批量平滑森林预测：各树平滑预测的算术平均"""
    X = _as_matrix(model, X)
    per_tree = np.vstack(_per_tree(model, lambda s: s.predict_many(X), n_jobs))
    return np.mean(per_tree, axis=0)

def forest_predict_smoothed(model: SmoothedForestModel, x0) -> float:
    return float(forest_predict_many(model, x0)[0])

def forest_uncertainty_many(model: SmoothedForestModel, X, n_jobs: int = 1) -> Dict[str, np.ndarray]:
    """批量预测分布

    intra 为各树核诱导方差的平均，inter 为各树预测围绕森林均值的总体方差（除以 T），
    noise 为训练时预先计算的常数；variance = intra + inter + noise。
    """
    X = _as_matrix(model, X)
    moments = _per_tree(model, lambda s: s.moments_many(X), n_jobs)
    means = np.vstack([m for m, _ in moments])
    variances = np.vstack([v for _, v in moments])
    mean = np.mean(means, axis=0)
    intra = np.mean(variances, axis=0)
    inter = np.mean((means - mean) ** 2, axis=0)
    noise = np.full_like(mean, model.noise_variance)
    return {
        "mean": mean,
        "variance": intra + inter + noise,
        "intra": intra,
        "inter": inter,
        "noise": noise,
    }

def forest_uncertainty(model: SmoothedForestModel, x0) -> PredictiveDistribution:
    result = forest_uncertainty_many(model, x0)
    return PredictiveDistribution(**{key: float(values[0]) for key, values in result.items()})

def forest_gradient(model: SmoothedForestModel, x0) -> np.ndarray:
    """平滑森林预测的梯度（各树解析梯度的平均，仅高斯核）"""
    x0 = _as_matrix(model, x0)[0]
    return np.mean(np.vstack([smoothed_gradient(s, x0) for s in get_smoothers(model)]), axis=0)

def in_sample_noise_variance(model: SmoothedForestModel, dataset: Dataset) -> float:
    """噪声项：平滑森林在全部训练点上的平均残差平方"""
    residuals = forest_predict_many(model, dataset.features) - dataset.targets
    return float(np.mean(residuals * residuals))

def oob_noise_variance(model: SmoothedForestModel, dataset: Dataset) -> float:
    """噪声项的 OOB 版本：每个点只用把它当作袋外样本的树做预测

    没有任何树把某点视为袋外时该点不参与；全部点都不参与时退回样本内残差。
    """
    totals = np.zeros(dataset.n)
    counts = np.zeros(dataset.n)
    for tree, smoother in zip(model.trees, get_smoothers(model)):
        rows = np.asarray(tree.oob_indices, dtype=int)
        if rows.size == 0:
            continue
        totals[rows] += smoother.predict_many(dataset.features[rows])
        counts[rows] += 1
    covered = counts > 0
    if not covered.any():
        logger.warning("No row is out-of-bag for any tree, falling back to in-sample noise")
        return in_sample_noise_variance(model, dataset)
    residuals = totals[covered] / counts[covered] - dataset.targets[covered]
    return float(np.mean(residuals * residuals))

def rf_baseline_many(trees: Sequence[FittedTree], X) -> Tuple[np.ndarray, np.ndarray]:
    """普通随机森林：原始树预测的均值与树间方差（除以 T）"""
    if not trees:
        raise ConfigurationError("森林为空")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    predictions = np.vstack([tree_predict_raw_many(tree, X) for tree in trees])
    mean = np.mean(predictions, axis=0)
    variance = np.mean((predictions - mean) ** 2, axis=0)
    return mean, variance

def rf_baseline_predict(trees: Sequence[FittedTree], x0, noise_variance: float = 0.0) -> Tuple[float, float]:
    """返回 (均值, 方差)；用于 log-loss 时可加上与平滑森林相同约定的噪声项"""
    mean, variance = rf_baseline_many(trees, np.asarray(x0, dtype=float).reshape(1, -1))
    return float(mean[0]), float(variance[0]) + noise_variance

def rf_noise_variance(trees: Sequence[FittedTree], dataset: Dataset) -> float:
    """原始随机森林在训练点上的平均残差平方"""
    mean, _ = rf_baseline_many(trees, dataset.features)
    residuals = mean - dataset.targets
    return float(np.mean(residuals * residuals))

def save_model(model: SmoothedForestModel, path: str):
    """保存为 UTF-8 JSON，非有限边界写作 Infinity / -Infinity"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.json())
    logger.info(f"Model saved to {path}")

def load_model(path: str) -> SmoothedForestModel:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ModelFormatError(f"模型文件不存在: {path}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"模型文件损坏或不完整: {path} ({str(e)})")

    if not isinstance(data, dict) or "schema_version" not in data:
        raise ModelFormatError(f"模型文件缺少 schema_version: {path}")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ModelVersionError(data["schema_version"], SCHEMA_VERSION)

    try:
        model = SmoothedForestModel.parse_obj(data)
    except ValidationError as e:
        raise ModelFormatError(f"模型文件内容不合法: {path} ({str(e)})")
    logger.info(f"Model loaded from {path}: trees={model.n_trees}")
    return model

def smoothing_curve(model: SmoothedForestModel, feature: int, grid, base_point=None) -> pd.DataFrame:
    """沿第 feature 维扫描，输出原始森林预测、平滑预测与方差分解（绘图用）

    其余维度固定在 base_point（默认全 0）。高斯核时附带解析导数，否则该列为 NaN。
    """
    p = model.trees[0].n_features
    if not 0 <= feature < p:
        raise ConfigurationError(f"特征编号 {feature} 超出范围 [0, {p})")
    grid = np.asarray(grid, dtype=float).reshape(-1)
    base = np.zeros(p) if base_point is None else np.asarray(base_point, dtype=float).reshape(-1)
    if base.size != p:
        raise ConfigurationError(f"基准点维数 {base.size} 与特征数 {p} 不一致")

    X = np.tile(base, (grid.size, 1))
    X[:, feature] = grid
    raw, _ = rf_baseline_many(model.trees, X)
    result = forest_uncertainty_many(model, X)
    if model.metadata.kernel_family == "gaussian":
        derivative = np.mean(np.vstack([s.derivative_many(X, feature) for s in get_smoothers(model)]), axis=0)
    else:
        derivative = np.full(grid.size, np.nan)

    return pd.DataFrame({
        "x": grid,
        "raw": raw,
        "mean": result["mean"],
        "intra": result["intra"],
        "inter": result["inter"],
        "noise": result["noise"],
        "variance": result["variance"],
        "derivative": derivative,
    })

def leaf_probability_table(model: SmoothedForestModel, tree_index: int, x0) -> pd.DataFrame:
    """列出一棵树每个叶子的区域、常数与 ℙ(z ∈ D_i | x0, λ_t)"""
    if not 0 <= tree_index < model.n_trees:
        raise ConfigurationError(f"树编号 {tree_index} 超出范围 [0, {model.n_trees})")
    tree = model.trees[tree_index]
    smoother = get_smoothers(model)[tree_index]
    x0 = _as_matrix(model, x0)
    probabilities = smoother.probabilities(x0)[0]
    kernel_service.check_partition(probabilities)

    names = model.metadata.feature_names or [f"x{j}" for j in range(tree.n_features)]
    arrays = tree.arrays()
    table = {"node_id": [leaf.node_id for leaf in tree.leaves]}
    for j, name in enumerate(names):
        table[f"lower_{name}"] = arrays["lower"][:, j]
        table[f"upper_{name}"] = arrays["upper"][:, j]
    table["constant"] = arrays["constants"]
    table["probability"] = probabilities
    return pd.DataFrame(table)
