import logging
from datetime import datetime
from typing import Optional, Dict, Any

logger = logging.getLogger("metrics")

def record_fit_metrics(
    n_trees: int,
    n_rows: int,
    n_features: int,
    total_leaves: int,
    fit_time: Optional[float] = None,
    seed: Optional[int] = None
):
    """
    记录森林训练指标

    Args:
        n_trees: 树的数量
        n_rows: 训练样本数
        n_features: 特征数
        total_leaves: 所有树的叶子总数（决定 O(kp) 预测成本）
        fit_time: 训练耗时(秒)
        seed: 随机种子
    """
    try:
        log_data = {
            "timestamp": datetime.now().isoformat(),
            "event_type": "forest_fit",
            "n_trees": n_trees,
            "n_rows": n_rows,
            "n_features": n_features,
            "total_leaves": total_leaves,
            "fit_time": fit_time,
            "seed": seed
        }

        logger.info(f"Fit metrics: {log_data}")

    except Exception as e:
        logger.error(f"Failed to record fit metrics: {str(e)}", exc_info=True)

def record_calibration_metrics(
    mode: str,
    oob_rss: float,
    lambdas: Dict[str, float],
    n_evaluations: int,
    calibration_time: Optional[float] = None
):
    """
    记录 OOB 校准指标

    Args:
        mode: 校准方式 (global/local)
        oob_rss: 达到的 OOB 残差平方和
        lambdas: λ 的汇总 (min/median/max)
        n_evaluations: 目标函数的求值次数
        calibration_time: 校准耗时(秒)
    """
    try:
        log_data = {
            "timestamp": datetime.now().isoformat(),
            "event_type": "calibration",
            "mode": mode,
            "oob_rss": oob_rss,
            "lambdas": lambdas,
            "n_evaluations": n_evaluations,
            "calibration_time": calibration_time
        }

        logger.info(f"Calibration metrics: {log_data}")

    except Exception as e:
        logger.error(f"Failed to record calibration metrics: {str(e)}", exc_info=True)

def record_cell_metrics(
    dataset: str,
    training_size: int,
    repetition: int,
    details: Optional[Dict[str, Any]] = None
):
    """
    记录一个实验单元 (dataset, size, rep) 的结果

    Args:
        dataset: 数据集名称
        training_size: 训练集大小
        repetition: 重复序号
        details: 各模型的 MSE / log-loss / 耗时
    """
    try:
        log_data = {
            "timestamp": datetime.now().isoformat(),
            "event_type": "bench_cell",
            "dataset": dataset,
            "training_size": training_size,
            "repetition": repetition,
            "details": details
        }

        logger.info(f"Bench cell metrics: {log_data}")

    except Exception as e:
        logger.error(f"Failed to record bench cell metrics: {str(e)}", exc_info=True)
