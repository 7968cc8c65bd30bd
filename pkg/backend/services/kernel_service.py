import logging
import math
from typing import Sequence, Union

import numpy as np
from scipy.special import erfc

from models.kernel import KernelSpec
from models.tree import LeafRegion
from utils.exceptions import IntegrityError

logger = logging.getLogger("smoothing")

ArrayLike = Union[float, np.ndarray]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# 叶子概率之和偏离 1 超过该值时认为区域不构成划分
PARTITION_TOLERANCE = 1e-6

def _standardize(kernel: KernelSpec, value: ArrayLike, center: ArrayLike) -> np.ndarray:
    return (np.asarray(value, dtype=float) - np.asarray(center, dtype=float)) / kernel.lam

def cdf(kernel: KernelSpec, value: ArrayLike, center: ArrayLike) -> ArrayLike:
    """核分布的累积分布函数 Φ(value | center, λ)

    gaussian 使用互补误差函数：Φ = ½·erfc(−z/√2)；laplace 为分段指数形式。
    value 为 ±inf 时直接返回 1/0。
    """
    value = np.asarray(value, dtype=float)
    z = _standardize(kernel, value, center)
    if kernel.family == "gaussian":
        inner = 0.5 * erfc(-z / _SQRT2)
    else:
        e = np.exp(-np.abs(z))
        inner = np.where(z < 0, 0.5 * e, 1.0 - 0.5 * e)
    result = np.where(np.isposinf(value), 1.0, np.where(np.isneginf(value), 0.0, inner))
    return float(result) if result.ndim == 0 else result

def sf(kernel: KernelSpec, value: ArrayLike, center: ArrayLike) -> ArrayLike:
    """生存函数 1 − Φ，在右尾直接计算以避免相减抵消"""
    value = np.asarray(value, dtype=float)
    z = _standardize(kernel, value, center)
    if kernel.family == "gaussian":
        inner = 0.5 * erfc(z / _SQRT2)
    else:
        e = np.exp(-np.abs(z))
        inner = np.where(z > 0, 0.5 * e, 1.0 - 0.5 * e)
    result = np.where(np.isposinf(value), 0.0, np.where(np.isneginf(value), 1.0, inner))
    return float(result) if result.ndim == 0 else result

def pdf(kernel: KernelSpec, value: ArrayLike, center: ArrayLike) -> ArrayLike:
    """核密度，边界为 ±inf 时为 0"""
    value = np.asarray(value, dtype=float)
    z = _standardize(kernel, value, center)
    if kernel.family == "gaussian":
        inner = np.exp(-0.5 * z * z) / (kernel.lam * _SQRT2PI)
    else:
        inner = np.exp(-np.abs(z)) / (2.0 * kernel.lam)
    result = np.where(np.isinf(value), 0.0, inner)
    return float(result) if result.ndim == 0 else result

def interval_mass(kernel: KernelSpec, lower: ArrayLike, upper: ArrayLike, center: ArrayLike) -> np.ndarray:
    """∫_lower^upper k(z | center, λ) dz，逐元素计算

    区间位于中心右侧时用 sf 相减，左侧时用 cdf 相减，两者在数学上相同。
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    center = np.asarray(center, dtype=float)
    right_side = lower >= center
    mass = np.where(
        right_side,
        sf(kernel, lower, center) - sf(kernel, upper, center),
        cdf(kernel, upper, center) - cdf(kernel, lower, center),
    )
    return np.clip(mass, 0.0, 1.0)

def region_probability(kernel: KernelSpec, region: LeafRegion, x0) -> float:
    """ℙ(z ∈ D_i | x0, λ)：各坐标区间概率的乘积，代价 O(p)"""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    return float(np.prod(interval_mass(kernel, region.lower, region.upper, x0)))

def box_probabilities(kernel: KernelSpec, lower: np.ndarray, upper: np.ndarray, X: np.ndarray) -> np.ndarray:
    """批量计算 m 个查询点落入 k 个盒子的概率，返回 (m, k) 矩阵"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mass = interval_mass(kernel, lower[None, :, :], upper[None, :, :], X[:, None, :])
    return np.prod(mass, axis=2)

def region_probabilities(kernel: KernelSpec, regions: Sequence[LeafRegion], x0) -> np.ndarray:
    """各叶子区域的概率向量，区域必须构成划分（和为 1）"""
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    lower = np.asarray([r.lower for r in regions], dtype=float)
    upper = np.asarray([r.upper for r in regions], dtype=float)
    probabilities = box_probabilities(kernel, lower, upper, x0)[0]
    check_partition(probabilities)
    return probabilities

def check_partition(probabilities: np.ndarray):
    """概率之和必须为 1（容差 PARTITION_TOLERANCE）"""
    totals = np.atleast_2d(probabilities).sum(axis=-1)
    deviation = float(np.max(np.abs(totals - 1.0)))
    if deviation > PARTITION_TOLERANCE:
        logger.error(f"Leaf probabilities do not sum to one (max deviation {deviation:.3e})")
        raise IntegrityError(f"叶子区域不构成划分：概率之和偏离 1 达 {deviation:.3e}")
