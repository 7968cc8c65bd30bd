import hashlib
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.dataset import Dataset
from models.experiment import (
    MODEL_NAMES,
    RECORD_COLUMNS,
    RECORDS_SCHEMA,
    TIMING_COLUMNS,
    BenchConfig,
    DatasetSource,
    ExperimentRecord,
)
from services.data_service import bootstrap_rows, load_csv, make_hetero_data, make_step_data
from services.forest_service import (
    fit_forest,
    fit_smoothed_forest,
    forest_uncertainty_many,
    rf_baseline_many,
    rf_noise_variance,
)
from services.metrics_service import mean_log_loss, mean_with_se, median_with_se, mse, pi_risk
from utils.exceptions import ConfigurationError, DataFormatError
from utils.metrics import record_cell_metrics

logger = logging.getLogger("smoothing")

RECORDS_HEADER = f"# srf-records schema={RECORDS_SCHEMA}"
TIMINGS_HEADER = f"# srf-timings schema={RECORDS_SCHEMA}"
SUMMARY_HEADER = "# srf-summary schema=1"

DEFAULT_THRESHOLDS = (0.0, 5.0, 10.0, 20.0, 50.0)

# 95% 置信区间的正态分位数
_Z95 = 1.959963984540054

def load_source(source: DatasetSource, index: int, seed: int, target: Optional[str] = None) -> Dataset:
    """载入一个数据源；合成数据的种子为 SeedSequence(seed, spawn_key=(index,))"""
    if source.path is not None:
        dataset = load_csv(source.path, target)
        name = source.name or os.path.splitext(os.path.basename(source.path))[0]
        return dataset.copy(update={"name": name})

    seq = np.random.SeedSequence(seed, spawn_key=(index,))
    if source.synthetic == "step":
        dataset = make_step_data(source.n, noise_sd=source.noise_sd, seed=seq)
    else:
        dataset = make_hetero_data(source.n, seed=seq, noise_sd=source.noise_sd)
    return dataset.copy(update={"name": source.name or dataset.name})

def cell_seed(master: int, d: int, s: int, r: int) -> np.random.SeedSequence:
    """实验单元 (数据集 d, 训练集大小 s, 重复 r) 的种子，串行与并行运行一致"""
    return np.random.SeedSequence(master, spawn_key=(d, s, r))

def train_hash(rows: Sequence[int]) -> str:
    return hashlib.sha256(np.asarray(rows, dtype=np.int64).tobytes()).hexdigest()[:16]

def run_cell(config: BenchConfig, d: int, dataset: Dataset, s: int, r: int) -> List[ExperimentRecord]:
    """运行一个实验单元：抽取训练集，在同一训练集上拟合所有模型，并在未被抽中的行上评估"""
    size = config.training_sizes[s]
    sample_seq, forest_seq, large_seq = cell_seed(config.seed, d, s, r).spawn(3)
    split = bootstrap_rows(dataset.n, sample_seq, size=size, replace=config.resample == "bootstrap")
    if not split.oob:
        raise ConfigurationError(
            f"{dataset.name}: 训练集大小 {size} 没有留下测试行，请减小训练集大小或改用 bootstrap 抽样"
        )

    train = dataset.subset(split.in_bag)
    test_rows = np.asarray(split.oob, dtype=int)
    X_test = dataset.features[test_rows]
    y_test = dataset.targets[test_rows]
    common = {
        "dataset": dataset.name,
        "training_size": size,
        "repetition": r,
        "n_train": len(split.in_bag),
        "n_test": int(test_rows.size),
        "oob_fraction": test_rows.size / dataset.n,
        "train_hash": train_hash(split.in_bag),
    }

    base_forest = None
    base_time = 0.0
    if any(model != "RF_large" for model in config.models):
        start_time = time.perf_counter()
        base_forest = fit_forest(train, config.n_trees, config.tree_params, forest_seq, row_ids=split.in_bag)
        base_time = time.perf_counter() - start_time

    records = []
    for model in config.models:
        start_time = time.perf_counter()
        if model in ("RF_base", "RF_large"):
            if model == "RF_base":
                trees = base_forest
            else:
                trees = fit_forest(train, config.n_trees_large, config.tree_params, large_seq,
                                   row_ids=split.in_bag)
            fitted = time.perf_counter()
            mean, variance = rf_baseline_many(trees, X_test)
            if config.rf_noise_term:
                variance = variance + rf_noise_variance(trees, train)
        else:
            model_fit = fit_smoothed_forest(
                train,
                params=config.tree_params,
                calibration="global" if model == "SRF_global" else "local",
                search=config.search,
                oob_noise=config.oob_noise,
                forest=base_forest,
            )
            fitted = time.perf_counter()
            result = forest_uncertainty_many(model_fit, X_test)
            mean, variance = result["mean"], result["variance"]
        finished = time.perf_counter()

        extra = base_time if model != "RF_large" else 0.0
        records.append(ExperimentRecord(
            **common,
            model=model,
            oob_mse=mse(mean, y_test),
            oob_log_loss=mean_log_loss(y_test, mean, variance),
            wall_time_ms=(finished - start_time + extra) * 1000.0,
            per_query_us=(finished - fitted) * 1e6 / test_rows.size,
        ))

    record_cell_metrics(
        dataset=dataset.name,
        training_size=size,
        repetition=r,
        details={rec.model: {"mse": rec.oob_mse, "log_loss": rec.oob_log_loss} for rec in records},
    )
    return records

def _run_cell_task(task: Tuple[BenchConfig, int, Dataset, int, int]) -> List[ExperimentRecord]:
    return run_cell(*task)

def run_experiment(config: BenchConfig, datasets: Optional[List[Dataset]] = None) -> List[ExperimentRecord]:
    """按 (数据集, 训练集大小, 重复) 的顺序运行所有实验单元

    每个单元内各模型共享同一训练集；记录按单元顺序、单元内按 config.models 顺序排列。
    n_jobs > 1 时用进程池并行，结果与串行运行一致。
    """
    for model in config.models:
        if model not in MODEL_NAMES:
            raise ConfigurationError(f"未知模型: {model}")
    if datasets is None:
        datasets = [load_source(source, d, config.seed, config.target) for d, source in enumerate(config.datasets)]

    for dataset in datasets:
        too_large = [size for size in config.training_sizes if size > dataset.n]
        if too_large:
            raise ConfigurationError(f"{dataset.name}: 训练集大小 {too_large} 超过数据集行数 {dataset.n}")

    tasks = [
        (config, d, dataset, s, r)
        for d, dataset in enumerate(datasets)
        for s in range(len(config.training_sizes))
        for r in range(config.reps)
    ]
    logger.info(f"Running benchmark: cells={len(tasks)}, models={','.join(config.models)}, n_jobs={config.n_jobs}")

    if config.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=config.n_jobs) as executor:
            outcomes = list(executor.map(_run_cell_task, tasks))
    else:
        outcomes = [_run_cell_task(task) for task in tasks]

    records = [record for cell in outcomes for record in cell]
    logger.info(f"Benchmark finished: records={len(records)}")
    return records

def records_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.dict() for record in records],
                        columns=RECORD_COLUMNS + ["wall_time_ms", "per_query_us"])

def _write_table(frame: pd.DataFrame, path: str, header: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header + "\n")
        frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")

def write_records(records: Sequence[ExperimentRecord], out_dir: str) -> Tuple[str, str]:
    """写出 records.csv（确定性列）与 timings.csv（耗时列）"""
    os.makedirs(out_dir, exist_ok=True)
    frame = records_frame(records)
    records_path = os.path.join(out_dir, "records.csv")
    timings_path = os.path.join(out_dir, "timings.csv")
    _write_table(frame[RECORD_COLUMNS], records_path, RECORDS_HEADER)
    _write_table(frame[TIMING_COLUMNS], timings_path, TIMINGS_HEADER)
    logger.info(f"Records written to {records_path}")
    return records_path, timings_path

def _read_table(path: str, header: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataFormatError(f"文件不存在: {path}")
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    if first != header:
        raise DataFormatError(f"{path} 的首行应为 '{header}'，实际为 '{first}'")
    return pd.read_csv(path, skiprows=1, dtype={"dataset": str, "model": str, "train_hash": str},
                       float_precision="round_trip")

def read_records(path: str) -> List[ExperimentRecord]:
    """读取 records.csv；同目录下存在 timings.csv 时合并耗时列"""
    frame = _read_table(path, RECORDS_HEADER)
    missing = [column for column in RECORD_COLUMNS if column not in frame.columns]
    if missing:
        raise DataFormatError(f"{path} 缺少列: {', '.join(missing)}")

    timings_path = os.path.join(os.path.dirname(path), "timings.csv")
    if os.path.exists(timings_path):
        timings = _read_table(timings_path, TIMINGS_HEADER)
        frame = frame.merge(timings, on=["dataset", "training_size", "repetition", "model"], how="left")
    for column in ("wall_time_ms", "per_query_us"):
        if column not in frame.columns:
            frame[column] = 0.0
        frame[column] = frame[column].fillna(0.0)
    return [ExperimentRecord(**row) for row in frame.to_dict(orient="records")]

def _safe_pi(candidate: float, baseline: float) -> float:
    if baseline == 0:
        return float("nan")
    return pi_risk(candidate, baseline)

def paired_improvements(records: Sequence[ExperimentRecord], baseline: str = "RF_base") -> pd.DataFrame:
    """每个 (单元, 模型) 相对基线模型的 PI_MSE 与 PI_log-loss"""
    frame = records_frame(records)
    if frame.empty or baseline not in set(frame["model"]):
        raise ConfigurationError(f"记录中没有基线模型 {baseline}")
    keys = ["dataset", "training_size", "repetition"]
    base = frame[frame["model"] == baseline][keys + ["oob_mse", "oob_log_loss"]].rename(
        columns={"oob_mse": "base_mse", "oob_log_loss": "base_log_loss"}
    )
    paired = frame.merge(base, on=keys, how="inner")
    paired["pi_mse"] = [_safe_pi(c, b) for c, b in zip(paired["oob_mse"], paired["base_mse"])]
    paired["pi_log_loss"] = [_safe_pi(c, b) for c, b in zip(paired["oob_log_loss"], paired["base_log_loss"])]
    if paired[["pi_mse", "pi_log_loss"]].isna().any().any():
        logger.warning("Some cells have a zero baseline risk; their improvement is left undefined")
    return paired

def _aggregate(group: pd.DataFrame) -> Dict[str, float]:
    pi_mse = group["pi_mse"].dropna()
    pi_ll = group["pi_log_loss"].dropna()
    mse_mean, mse_se = mean_with_se(group["oob_mse"])
    pi_mse_mean, pi_mse_se = mean_with_se(pi_mse) if len(pi_mse) else (float("nan"), float("nan"))
    pi_ll_median, pi_ll_se = median_with_se(pi_ll) if len(pi_ll) else (float("nan"), float("nan"))
    ll_median, ll_se = median_with_se(group["oob_log_loss"])
    return {
        "n_cells": len(group),
        "pi_mse_mean": pi_mse_mean,
        "pi_mse_se": pi_mse_se,
        "pi_log_loss_median": pi_ll_median,
        "pi_log_loss_se": pi_ll_se,
        "mse_mean": mse_mean,
        "mse_se": mse_se,
        "log_loss_median": ll_median,
        "log_loss_se": ll_se,
    }

def _ci_overlap(table: pd.DataFrame, value: str, se: str, lower_is_better: bool = True) -> List[bool]:
    """每个模型的 95% 置信区间是否与同一数据集中最优模型的区间重叠"""
    flags = []
    for _, row in table.iterrows():
        peers = table[table["dataset"] == row["dataset"]]
        best = peers.loc[peers[value].idxmin() if lower_is_better else peers[value].idxmax()]
        low, high = row[value] - _Z95 * row[se], row[value] + _Z95 * row[se]
        best_low, best_high = best[value] - _Z95 * best[se], best[value] + _Z95 * best[se]
        flags.append(bool(low <= best_high and best_low <= high))
    return flags

def _wins(frame: pd.DataFrame, column: str) -> Dict[Tuple[str, str], int]:
    """每个数据集中各模型取得最低风险的单元数；并列时记给模型列表中靠前的一个"""
    winners = frame.loc[frame.groupby(["dataset", "training_size", "repetition"], sort=False)[column].idxmin()]
    return winners.groupby(["dataset", "model"]).size().to_dict()

def summarize(records: Sequence[ExperimentRecord], baseline: str = "RF_base",
              thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> Dict[str, pd.DataFrame]:
    """汇总实验记录

    返回五张表：
    - mse: 每个 (数据集, 模型) 的 PI_MSE 均值 ± 标准误、MSE 置信区间重叠标记与获胜次数
    - log_loss: PI_log-loss 中位数 ± 标准误与获胜次数；negative_baseline 为基线 log-loss < 0 的单元数，
      这些单元上 PI_log-loss 的符号与改进方向相反
    - by_size: 按训练集大小分组的同样统计
    - best_by_size: 按 (数据集, 训练集大小) 对重复取平均后各模型最优的次数
    - threshold: PI_MSE 与 PI_log-loss（metric 列）≥ 阈值的单元比例
    """
    paired = paired_improvements(records, baseline)
    model_order = {name: i for i, name in enumerate(dict.fromkeys(paired["model"]))}
    dataset_order = {name: i for i, name in enumerate(dict.fromkeys(paired["dataset"]))}

    rows = []
    for (dataset, model), group in paired.groupby(["dataset", "model"], sort=False):
        rows.append({"dataset": dataset, "model": model, **_aggregate(group)})
    overall = pd.DataFrame(rows)
    overall = overall.sort_values(
        by=["dataset", "model"],
        key=lambda col: col.map(dataset_order if col.name == "dataset" else model_order),
    ).reset_index(drop=True)

    mse_wins = _wins(paired, "oob_mse")
    ll_wins = _wins(paired, "oob_log_loss")
    overall["wins_mse"] = [mse_wins.get((d, m), 0) for d, m in zip(overall["dataset"], overall["model"])]
    overall["wins_log_loss"] = [ll_wins.get((d, m), 0) for d, m in zip(overall["dataset"], overall["model"])]
    overall["ci_overlaps_best_mse"] = _ci_overlap(overall, "mse_mean", "mse_se")
    overall["ci_overlaps_best_log_loss"] = _ci_overlap(overall, "log_loss_median", "log_loss_se")
    negative = (paired["base_log_loss"] < 0).groupby([paired["dataset"], paired["model"]]).sum().to_dict()
    overall["negative_baseline"] = [int(negative.get((d, m), 0))
                                    for d, m in zip(overall["dataset"], overall["model"])]
    if any(negative.values()):
        logger.warning("Some cells have a negative baseline log-loss; PI_log-loss changes sign there")

    mse_table = overall[["dataset", "model", "n_cells", "pi_mse_mean", "pi_mse_se", "mse_mean", "mse_se",
                         "ci_overlaps_best_mse", "wins_mse"]]
    log_loss_table = overall[["dataset", "model", "n_cells", "pi_log_loss_median", "pi_log_loss_se",
                              "log_loss_median", "log_loss_se", "ci_overlaps_best_log_loss", "wins_log_loss",
                              "negative_baseline"]]

    size_rows = []
    for (dataset, size, model), group in paired.groupby(["dataset", "training_size", "model"], sort=False):
        stats = _aggregate(group)
        size_rows.append({
            "dataset": dataset,
            "training_size": size,
            "model": model,
            "n_cells": stats["n_cells"],
            "pi_mse_mean": stats["pi_mse_mean"],
            "pi_mse_se": stats["pi_mse_se"],
            "pi_log_loss_median": stats["pi_log_loss_median"],
            "pi_log_loss_se": stats["pi_log_loss_se"],
        })
    by_size = pd.DataFrame(size_rows).sort_values(
        by=["dataset", "training_size", "model"],
        key=lambda col: col.map(dataset_order) if col.name == "dataset"
        else col.map(model_order) if col.name == "model" else col,
    ).reset_index(drop=True)

    threshold_rows = []
    for metric in ("pi_mse", "pi_log_loss"):
        for (dataset, model), group in paired.groupby(["dataset", "model"], sort=False):
            values = group[metric].dropna().to_numpy()
            for threshold in thresholds:
                share = float(np.mean(values >= threshold)) if values.size else float("nan")
                threshold_rows.append({"dataset": dataset, "model": model, "metric": metric,
                                       "threshold": float(threshold), "share": share})
    threshold_table = pd.DataFrame(threshold_rows)

    return {
        "mse": mse_table.reset_index(drop=True),
        "log_loss": log_loss_table.reset_index(drop=True),
        "by_size": by_size,
        "best_by_size": _best_by_size(paired, list(model_order), list(dataset_order)),
        "threshold": threshold_table,
    }

def _best_by_size(paired: pd.DataFrame, models: List[str], datasets: List[str]) -> pd.DataFrame:
    """每个 (数据集, 训练集大小) 先对重复取平均（MSE 取均值，log-loss 取中位数），再统计各模型最优的次数

    并列时记给模型列表中靠前的一个。
    """
    averaged = paired.groupby(["dataset", "training_size", "model"], sort=False).agg(
        mse=("oob_mse", "mean"), log_loss=("oob_log_loss", "median")
    ).reset_index()
    counts = {(d, m): {"best_mse": 0, "best_log_loss": 0} for d in datasets for m in models}
    n_sizes = {}
    for (dataset, _), group in averaged.groupby(["dataset", "training_size"], sort=False):
        group = group.set_index("model").reindex([m for m in models if m in set(group["model"])])
        n_sizes[dataset] = n_sizes.get(dataset, 0) + 1
        counts[(dataset, group["mse"].idxmin())]["best_mse"] += 1
        counts[(dataset, group["log_loss"].idxmin())]["best_log_loss"] += 1
    rows = [{"dataset": d, "model": m, "n_sizes": n_sizes.get(d, 0), **counts[(d, m)]}
            for d in datasets for m in models]
    return pd.DataFrame(rows, columns=["dataset", "model", "n_sizes", "best_mse", "best_log_loss"])

def write_summary(summary: Dict[str, pd.DataFrame], out_dir: str) -> List[str]:
    """每张汇总表写一个 summary_<name>.csv"""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, table in summary.items():
        path = os.path.join(out_dir, f"summary_{name}.csv")
        _write_table(table, path, SUMMARY_HEADER)
        paths.append(path)
    logger.info(f"Summary written to {out_dir}")
    return paths
