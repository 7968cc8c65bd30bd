import logging
import os
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from models.dataset import Dataset, BootstrapSplit
from utils.exceptions import DataFormatError

logger = logging.getLogger("smoothing")

SeedLike = Union[int, np.random.SeedSequence]

def _step_truth(features: np.ndarray, b: float = 0.0) -> np.ndarray:
    return (features[:, 0] > b).astype(float)

def _hetero_truth(features: np.ndarray) -> np.ndarray:
    """在 [0, 1] 上：左半段平坦，右半段振荡

    g(x) = 0                          x < 0.5
    g(x) = sin(8π(x − 0.5))           x ≥ 0.5
    """
    x = features[:, 0]
    return np.where(x < 0.5, 0.0, np.sin(8.0 * np.pi * (x - 0.5)))

# 合成数据的真实函数注册表，Dataset.ground_truth 保存其名称
GROUND_TRUTH: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "step": _step_truth,
    "hetero": _hetero_truth,
}

def load_csv(path: str, target_column: Union[str, int, None] = None) -> Dataset:
    """读取 CSV 数据集

    第一行为表头，所有列必须是数值。target_column 可以是列名或列序号，
    默认取最后一列；行顺序保持不变。
    """
    if not os.path.exists(path):
        raise DataFormatError(f"数据文件不存在: {path}")

    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"数据文件为空: {path}")
    except Exception as e:
        logger.error(f"Failed to read csv {path}: {str(e)}", exc_info=True)
        raise DataFormatError(f"无法解析数据文件 {path}: {str(e)}")

    if frame.shape[0] == 0:
        raise DataFormatError(f"数据文件没有数据行: {path}")
    if frame.shape[1] < 2:
        raise DataFormatError(f"数据文件至少需要一个特征列和一个目标列: {path}")

    columns = [str(c) for c in frame.columns]
    target_name = _resolve_target(columns, target_column)

    # 逐格检查数值，报告第一个出错的单元格（行号按文件行计，表头为第 1 行）
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(
            f"第 {row + 2} 行第 {col + 1} 列 ({columns[col]}) 的值 {frame.iat[row, col]!r} 不是有限数值"
        )

    feature_names = [c for c in columns if c != target_name]
    dataset = Dataset(
        features=numeric[feature_names].to_numpy(dtype=float),
        targets=numeric[target_name].to_numpy(dtype=float),
        feature_names=feature_names,
        name=os.path.splitext(os.path.basename(path))[0],
    )
    logger.info(f"Loaded dataset {dataset.name}: n={dataset.n}, p={dataset.p}, target={target_name}")
    return dataset

def load_points(path: str, feature_names: Optional[List[str]] = None) -> np.ndarray:
    """读取查询点 CSV

    给定 feature_names 且文件包含这些列时按名称取列（多余的列被忽略），否则使用全部列。
    """
    if not os.path.exists(path):
        raise DataFormatError(f"查询文件不存在: {path}")
    try:
        frame = pd.read_csv(path, encoding="utf-8", skipinitialspace=True, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"查询文件为空: {path}")

    columns = [str(c) for c in frame.columns]
    frame.columns = columns
    if feature_names and all(name in columns for name in feature_names):
        frame = frame[list(feature_names)]
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    points = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(points)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(f"查询文件第 {row + 2} 行第 {col + 1} 列不是有限数值")
    return points

def _resolve_target(columns, target_column) -> str:
    if target_column is None:
        return columns[-1]
    if isinstance(target_column, int) or (isinstance(target_column, str) and target_column.lstrip("-").isdigit()
                                          and target_column not in columns):
        index = int(target_column)
        if not -len(columns) <= index < len(columns):
            raise DataFormatError(f"目标列序号 {index} 超出范围 (共 {len(columns)} 列)")
        return columns[index]
    if target_column not in columns:
        raise DataFormatError(f"目标列 {target_column!r} 不存在，可选列: {', '.join(columns)}")
    return target_column

def save_csv(dataset: Dataset, path: str, target_name: str = "y"):
    """把数据集写回 CSV（特征列在前，目标列在最后）"""
    frame = pd.DataFrame(dataset.features, columns=dataset.feature_names)
    frame[target_name] = dataset.targets
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    # repr 精度保证浮点数往返一致
    frame.to_csv(path, index=False, float_format="%.17g")

def bootstrap(dataset: Dataset, seed: SeedLike) -> BootstrapSplit:
    """有放回抽取 n 行作为袋内样本，其余行为袋外样本"""
    return bootstrap_rows(dataset.n, seed)

def bootstrap_rows(n: int, seed: SeedLike, size: Optional[int] = None, replace: bool = True) -> BootstrapSplit:
    """在 n 行上抽取 size 个索引（默认 size = n，有放回）

    随机数发生器为 numpy 的 PCG64 (np.random.default_rng)，给定种子结果确定。
    """
    if n < 1:
        raise DataFormatError("数据集为空，无法抽样")
    size = n if size is None else size
    if not replace and size > n:
        raise DataFormatError(f"无放回抽样大小 {size} 超过行数 {n}")
    rng = np.random.default_rng(seed)
    if replace:
        in_bag = rng.integers(0, n, size=size)
    else:
        in_bag = np.sort(rng.choice(n, size=size, replace=False))
    oob = np.setdiff1d(np.arange(n), in_bag, assume_unique=False)
    return BootstrapSplit(in_bag=in_bag.tolist(), oob=oob.tolist())

def make_step_data(n: int, b: float = 0.0, w: float = 1.0, noise_sd: float = 0.0, seed: SeedLike = 0) -> Dataset:
    """阶跃函数数据：x ~ U(b−w, b+w)，y = I(x > b) + N(0, noise_sd²)"""
    if n < 2:
        raise ValueError(f"n 必须 ≥ 2，实际为 {n}")
    if not w > 0:
        raise ValueError(f"w 必须为正，实际为 {w}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd 必须 ≥ 0，实际为 {noise_sd}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(b - w, b + w, size=n)
    targets = (x > b).astype(float)
    if noise_sd > 0:
        targets = targets + rng.normal(0.0, noise_sd, size=n)
    return Dataset(
        features=x.reshape(-1, 1),
        targets=targets,
        feature_names=["x"],
        name="step",
        ground_truth="step" if b == 0.0 else None,
    )

def make_hetero_data(n: int, seed: SeedLike = 0, noise_sd: float = 0.1) -> Dataset:
    """非均匀光滑度数据：x ~ U(0, 1)，左半段平坦、右半段振荡，加高斯噪声

    真实函数见 GROUND_TRUTH["hetero"]。
    """
    if n < 10:
        raise ValueError(f"n 必须 ≥ 10，实际为 {n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd 必须 ≥ 0，实际为 {noise_sd}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    targets = _hetero_truth(x)
    if noise_sd > 0:
        targets = targets + rng.normal(0.0, noise_sd, size=n)
    return Dataset(
        features=x,
        targets=targets,
        feature_names=["x"],
        name="hetero",
        ground_truth="hetero",
    )

def ground_truth(dataset: Dataset, features: np.ndarray) -> np.ndarray:
    """在任意点上计算合成数据的真实函数"""
    if dataset.ground_truth is None:
        raise DataFormatError(f"数据集 {dataset.name} 没有已知的真实函数")
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    return GROUND_TRUTH[dataset.ground_truth](features)

def feature_scale(dataset: Dataset) -> float:
    """训练特征各列标准差的中位数，用作 λ 搜索范围的尺度"""
    stds = np.std(dataset.features, axis=0)
    positive = stds[stds > 0]
    if positive.size == 0:
        return 1.0
    return float(np.median(positive))
