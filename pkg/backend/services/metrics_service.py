import math
from typing import Tuple

import numpy as np

from config import settings

_LOG_2PI = math.log(2.0 * math.pi)

def _pair(predictions, targets) -> Tuple[np.ndarray, np.ndarray]:
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if predictions.size != targets.size:
        raise ValueError(f"预测与目标长度不一致: {predictions.size} != {targets.size}")
    if predictions.size == 0:
        raise ValueError("预测与目标不能为空")
    return predictions, targets

def mse(predictions, targets) -> float:
    """均方误差"""
    predictions, targets = _pair(predictions, targets)
    residuals = predictions - targets
    return float(np.mean(residuals * residuals))

def gaussian_log_loss(y: float, mean: float, variance: float) -> float:
    """−log N(y | mean, variance) = ½log(2π·variance) + (y−mean)²/(2·variance)"""
    if not variance > 0:
        raise ValueError(f"方差必须为正，实际为 {variance}")
    return 0.5 * (_LOG_2PI + math.log(variance)) + (y - mean) ** 2 / (2.0 * variance)

def mean_log_loss(targets, means, variances, floor: float = None) -> float:
    """测试集上的平均高斯 log-loss，方差低于 floor 时截断到 floor"""
    floor = settings.VARIANCE_FLOOR if floor is None else floor
    means, targets = _pair(means, targets)
    variances = np.asarray(variances, dtype=float).reshape(-1)
    if variances.size != targets.size:
        raise ValueError(f"方差与目标长度不一致: {variances.size} != {targets.size}")
    variances = np.maximum(variances, floor)
    losses = 0.5 * (_LOG_2PI + np.log(variances)) + (targets - means) ** 2 / (2.0 * variances)
    return float(np.mean(losses))

def pi_risk(risk_candidate: float, risk_baseline: float) -> float:
    """风险改进百分比 (Risk_b − Risk_c) / Risk_b × 100"""
    if risk_baseline == 0:
        raise ValueError("基线风险为 0，改进百分比无定义")
    return (risk_baseline - risk_candidate) / risk_baseline * 100.0

def mean_with_se(values) -> Tuple[float, float]:
    """样本均值与标准误 sd/√n（n = 1 时标准误为 0）"""
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("至少需要一个值")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))

def median_with_se(values) -> Tuple[float, float]:
    """样本中位数及其渐近标准误 √(π/2)·sd/√n"""
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise ValueError("至少需要一个值")
    if values.size == 1:
        return float(values[0]), 0.0
    se = math.sqrt(math.pi / 2.0) * float(np.std(values, ddof=1)) / math.sqrt(values.size)
    return float(np.median(values)), se
