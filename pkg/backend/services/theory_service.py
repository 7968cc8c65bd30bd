import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Tuple

import numpy as np
from scipy import stats

from models.theory import HistogramBin, SimulationReport, StumpFit
from utils.exceptions import ConfigurationError, DataFormatError

logger = logging.getLogger("smoothing")

def fit_stump(xs, ys) -> StumpFit:
    """无噪声 0/1 数据上的决策桩断点估计

    x_sup 为标签 0 的最大设计点，x_inf 为标签 1 的最小设计点，b_hat 取两者中点。
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if xs.size != ys.size:
        raise DataFormatError(f"xs 与 ys 长度不一致: {xs.size} != {ys.size}")
    zeros = xs[ys == 0]
    ones = xs[ys == 1]
    if zeros.size == 0 or ones.size == 0:
        raise DataFormatError("样本只包含一个类别，无法估计断点")
    if zeros.size + ones.size != ys.size:
        raise DataFormatError("ys 只能取 0 或 1")
    x_sup = float(zeros.max())
    x_inf = float(ones.min())
    if not x_sup < x_inf:
        raise DataFormatError(f"样本不可分: 0 类最大值 {x_sup} ≥ 1 类最小值 {x_inf}")
    return StumpFit(x_sup=x_sup, x_inf=x_inf, b_hat=0.5 * (x_sup + x_inf))

def fit_stump_least_squares(xs, ys) -> StumpFit:
    """穷举所有相邻设计点间隙的最小二乘决策桩，阈值取间隙中点

    增益相同时取最左边的间隙；目标可以含噪声。
    """
    xs = np.asarray(xs, dtype=float).reshape(-1)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if xs.size != ys.size:
        raise DataFormatError(f"xs 与 ys 长度不一致: {xs.size} != {ys.size}")
    order = np.argsort(xs, kind="mergesort")
    xs, ys = xs[order], ys[order]
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        raise DataFormatError("至少需要两个不同的设计点")

    n = ys.size
    n_left = np.arange(1, n)
    csum = np.cumsum(ys - np.mean(ys))[:-1]
    gain = np.where(valid, csum * csum * n / (n_left * (n - n_left)), -np.inf)
    i = int(np.argmax(gain))
    return StumpFit(x_sup=float(xs[i]), x_inf=float(xs[i + 1]), b_hat=0.5 * (xs[i] + xs[i + 1]))

def laplace_cdf(t):
    """Laplace(0, 1) 的分布函数 ½ + ½·sign(t)(1 − e^{−|t|})"""
    t = np.asarray(t, dtype=float)
    return 0.5 + 0.5 * np.sign(t) * (1.0 - np.exp(-np.abs(t)))

def _one_repetition(seq: np.random.SeedSequence, n: int, w: float, b: float,
                    noise_sd: float) -> Tuple[float, int]:
    rng = np.random.default_rng(seq)
    resamples = 0
    while True:
        x = rng.uniform(b - w, b + w, size=n)
        labels = x > b
        if labels.any() and not labels.all():
            break
        resamples += 1

    if noise_sd > 0:
        y = labels.astype(float) + rng.normal(0.0, noise_sd, size=n)
        fit = fit_stump_least_squares(x, y)
    else:
        fit = fit_stump(x, labels.astype(float))
    return n * (fit.b_hat - b) / w, resamples

def simulate_stump_limit(n: int, w: float = 1.0, b: float = 0.0, reps: int = 2000, seed: int = 0,
                         noise_sd: float = 0.0, bins: int = 40, hist_range: float = 6.0,
                         n_jobs: int = 1) -> SimulationReport:
    """模拟决策桩断点估计的缩放误差 e_r = n(b̂_r − b)/w

    每次重复在 (b−w, b+w) 上均匀抽取 n 个设计点，目标为 I(x > b)（noise_sd > 0 时加高斯噪声，
    改用最小二乘决策桩）。第 r 次重复的种子为 SeedSequence(seed).spawn(reps)[r]。
    只有一个类别的样本会被重抽并计数。
    """
    if n < 100:
        raise ConfigurationError(f"n 必须 ≥ 100，实际为 {n}")
    if reps < 500:
        raise ConfigurationError(f"reps 必须 ≥ 500，实际为 {reps}")
    if not w > 0:
        raise ConfigurationError(f"w 必须为正，实际为 {w}")
    if noise_sd < 0:
        raise ConfigurationError(f"noise_sd 必须 ≥ 0，实际为 {noise_sd}")

    start_time = time.time()
    seeds = np.random.SeedSequence(seed).spawn(reps)

    def run(seq):
        return _one_repetition(seq, n, w, b, noise_sd)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            outcomes = list(executor.map(run, seeds))
    else:
        outcomes = [run(seq) for seq in seeds]

    errors = np.array([e for e, _ in outcomes])
    degenerate = int(sum(count for _, count in outcomes))
    if degenerate:
        logger.warning(f"Resampled {degenerate} single-class samples")

    ks = stats.kstest(errors, laplace_cdf)
    counts, edges = np.histogram(errors, bins=bins, range=(-hist_range, hist_range))
    width = edges[1] - edges[0]
    histogram = [
        HistogramBin(
            left=float(edges[k]),
            right=float(edges[k + 1]),
            count=int(counts[k]),
            density=float(counts[k] / (reps * width)),
            laplace_density=float(0.5 * np.exp(-abs(0.5 * (edges[k] + edges[k + 1])))),
        )
        for k in range(bins)
    ]

    report = SimulationReport(
        n=n,
        w=w,
        b=b,
        reps=reps,
        seed=seed,
        noise_sd=noise_sd,
        mean=float(np.mean(errors)),
        variance=float(np.var(errors, ddof=1)),
        ks_distance=float(ks.statistic),
        degenerate_resamples=degenerate,
        histogram=histogram,
    )
    logger.info(
        f"Split-point simulation: n={n}, reps={reps}, mean={report.mean:.4f}, "
        f"variance={report.variance:.4f}, ks={report.ks_distance:.4f}, time={time.time() - start_time:.2f}s"
    )
    return report
