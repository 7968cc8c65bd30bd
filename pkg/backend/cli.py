"""平滑随机森林命令行

    python cli.py train --data data.csv --out model.json
    python cli.py predict --model model.json --input queries.csv --out predictions.csv
    python cli.py bench --synthetic step,hetero --sizes 50,100 --reps 20 --out bench_results
    python cli.py summarize --records bench_results/records.csv
    python cli.py theorem1 --n 5000 --w 1 --reps 2000
    python cli.py curve --model model.json --feature 0 --start -1 --stop 1 --out curve.csv
    python cli.py serve --model model.json
"""
import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import uvicorn

from config import settings
from models.forest import LambdaSearchSpec
from models.tree import TreeParams
from services.bench_service import (
    DEFAULT_THRESHOLDS,
    read_records,
    run_experiment,
    summarize,
    write_records,
    write_summary,
)
from services.data_service import load_csv, load_points
from services.forest_service import (
    fit_smoothed_forest,
    forest_uncertainty_many,
    leaf_probability_table,
    load_model,
    save_model,
    smoothing_curve,
)
from services.model_service import ModelService
from services.settings_service import SettingsService, merge_bench_config
from services.theory_service import simulate_stump_limit
from utils.exceptions import SmoothingError
from utils.logger import setup_logger

logger = logging.getLogger("smoothing")

def _int_list(text: str) -> List[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数列表: {text}")

def _float_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的实数列表: {text}")

def _str_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(",") if item.strip()]

def _add_tree_args(parser: argparse.ArgumentParser):
    parser.add_argument("--min-leaf", type=int, default=None, help="叶子最少袋内样本数 (默认 5)")
    parser.add_argument("--max-depth", type=int, default=None, help="最大深度 (默认不限)")
    parser.add_argument("--mtry", type=int, default=None, help="每次分裂的候选特征数 (默认 max(1, p/3))")

def _add_search_args(parser: argparse.ArgumentParser):
    parser.add_argument("--lambda-min", type=float, default=None, help="λ 搜索下界")
    parser.add_argument("--lambda-max", type=float, default=None, help="λ 搜索上界")
    parser.add_argument("--lambda-grid", type=int, default=None, help="λ 对数网格点数")

def _tree_overrides(args) -> Dict[str, Any]:
    return {"min_samples_leaf": args.min_leaf, "max_depth": args.max_depth, "mtry": args.mtry}

def _search_overrides(args) -> Dict[str, Any]:
    return {"lambda_min": args.lambda_min, "lambda_max": args.lambda_max, "grid_size": args.lambda_grid}

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srf", description="平滑随机森林：训练、预测与实验")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL, help="日志级别")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="训练并校准平滑随机森林")
    train.add_argument("--data", required=True, help="训练数据 CSV")
    train.add_argument("--target", default=None, help="目标列名或序号 (默认最后一列)")
    train.add_argument("--trees", type=int, default=settings.DEFAULT_N_TREES, help="树的数量")
    train.add_argument("--calibration", choices=["global", "local", "none"], default="local")
    train.add_argument("--kernel", choices=["gaussian", "laplace"], default="gaussian")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--oob-noise", action="store_true", help="噪声项使用 OOB 残差")
    train.add_argument("--n-jobs", type=int, default=settings.N_JOBS)
    train.add_argument("--out", required=True, help="模型文件路径")
    _add_tree_args(train)
    _add_search_args(train)

    predict = sub.add_parser("predict", help="用模型预测查询点")
    predict.add_argument("--model", required=True)
    predict.add_argument("--input", required=True, help="查询点 CSV")
    predict.add_argument("--out", required=True, help="输出 CSV (mean,variance,intra,inter,noise)")

    bench = sub.add_parser("bench", help="运行对比实验")
    bench.add_argument("--config", default=None, help="JSON 实验配置文件，命令行参数覆盖其中的值")
    bench.add_argument("--data", nargs="+", default=None, help="数据 CSV 文件")
    bench.add_argument("--synthetic", type=_str_list, default=None, help="合成数据: step,hetero")
    bench.add_argument("--synthetic-n", type=int, default=300, help="合成数据样本数")
    bench.add_argument("--noise-sd", type=float, default=0.3, help="合成数据噪声标准差")
    bench.add_argument("--target", default=None)
    bench.add_argument("--sizes", type=_int_list, default=None, help="训练集大小，如 10,20,50")
    bench.add_argument("--reps", type=int, default=None)
    bench.add_argument("--models", type=_str_list, default=None, help="rf,srf-global,srf-local,rf-large")
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--trees", type=int, default=None)
    bench.add_argument("--trees-large", type=int, default=None)
    bench.add_argument("--resample", choices=["bootstrap", "subsample"], default=None)
    bench.add_argument("--oob-noise", action="store_true", default=None)
    bench.add_argument("--no-rf-noise", action="store_true", help="RF 基线方差不加噪声项")
    bench.add_argument("--n-jobs", type=int, default=None)
    bench.add_argument("--write-config", action="store_true", help="把合并后的配置写回 --config 文件")
    bench.add_argument("--out", default=settings.BENCH_OUTPUT_DIR)
    _add_tree_args(bench)
    _add_search_args(bench)

    summarize = sub.add_parser("summarize", help="汇总实验记录")
    summarize.add_argument("--records", required=True)
    summarize.add_argument("--baseline", default="RF_base")
    summarize.add_argument("--thresholds", type=_float_list, default=None)
    summarize.add_argument("--out", default=None, help="输出目录 (默认与 records 相同)")

    stump = sub.add_parser("theorem1", aliases=["stump-limit"], help="模拟决策桩断点估计的渐近分布")
    stump.add_argument("--n", type=int, default=5000)
    stump.add_argument("--w", type=float, default=1.0)
    stump.add_argument("--b", type=float, default=0.0)
    stump.add_argument("--reps", type=int, default=2000)
    stump.add_argument("--seed", type=int, default=0)
    stump.add_argument("--noise-sd", type=float, default=0.0)
    stump.add_argument("--bins", type=int, default=40)
    stump.add_argument("--n-jobs", type=int, default=1)
    stump.add_argument("--out", default=None, help="输出目录 (report.json, histogram.csv)")

    curve = sub.add_parser("curve", help="沿一个维度输出平滑预测曲线")
    curve.add_argument("--model", required=True)
    curve.add_argument("--feature", type=int, default=0)
    curve.add_argument("--start", type=float, required=True)
    curve.add_argument("--stop", type=float, required=True)
    curve.add_argument("--num", type=int, default=201)
    curve.add_argument("--base", type=_float_list, default=None, help="其余维度的取值")
    curve.add_argument("--leaves", type=int, default=None, help="额外输出该树在基准点的叶子概率表")
    curve.add_argument("--out", required=True)

    serve = sub.add_parser("serve", help="启动预测 API")
    serve.add_argument("--model", default=settings.MODEL_PATH)
    serve.add_argument("--host", default=settings.HOST)
    serve.add_argument("--port", type=int, default=settings.PORT)

    return parser

def cmd_train(args) -> int:
    dataset = load_csv(args.data, args.target)
    params = TreeParams(**{
        "min_samples_leaf": settings.DEFAULT_MIN_SAMPLES_LEAF,
        "max_depth": settings.DEFAULT_MAX_DEPTH,
        **{k: v for k, v in _tree_overrides(args).items() if v is not None},
    })
    search = LambdaSearchSpec(**{
        "grid_size": settings.DEFAULT_LAMBDA_GRID,
        "rel_tol": settings.DEFAULT_LAMBDA_REL_TOL,
        **{k: v for k, v in _search_overrides(args).items() if v is not None},
    })
    model = fit_smoothed_forest(
        dataset,
        n_trees=args.trees,
        params=params,
        seed=args.seed,
        calibration=args.calibration,
        kernel_family=args.kernel,
        search=search,
        oob_noise=args.oob_noise,
        n_jobs=args.n_jobs,
    )
    save_model(model, args.out)
    print(f"模型已保存: {args.out} (trees={model.n_trees}, noise_variance={model.noise_variance:.6g})")
    return 0

def cmd_predict(args) -> int:
    model = load_model(args.model)
    points = load_points(args.input, model.metadata.feature_names)
    result = forest_uncertainty_many(model, points)
    frame = pd.DataFrame({key: result[key] for key in ("mean", "variance", "intra", "inter", "noise")})
    directory = os.path.dirname(args.out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(args.out, index=False, float_format="%.17g")
    print(f"预测结果已写入: {args.out} ({len(frame)} 行)")
    return 0

def bench_overrides(args) -> Dict[str, Any]:
    datasets = None
    if args.data or args.synthetic:
        datasets = [{"path": path} for path in args.data or []]
        datasets += [{"synthetic": kind, "n": args.synthetic_n, "noise_sd": args.noise_sd}
                     for kind in args.synthetic or []]
    return {
        "datasets": datasets,
        "target": args.target,
        "training_sizes": args.sizes,
        "reps": args.reps,
        "models": args.models,
        "seed": args.seed,
        "n_trees": args.trees,
        "n_trees_large": args.trees_large,
        "resample": args.resample,
        "oob_noise": args.oob_noise,
        "rf_noise_term": False if args.no_rf_noise else None,
        "n_jobs": args.n_jobs,
        "tree_params": _tree_overrides(args),
        "search": _search_overrides(args),
    }

def cmd_bench(args) -> int:
    overrides = bench_overrides(args)
    if args.config:
        service = SettingsService(args.config)
        config = service.load_bench_config(overrides)
        if args.write_config:
            service.save_bench_config(config)
    else:
        config = merge_bench_config({}, overrides)

    records = run_experiment(config)
    records_path, _ = write_records(records, args.out)
    write_summary(summarize(records), args.out)
    print(f"实验完成: {len(records)} 条记录 -> {records_path}")
    return 0

def cmd_summarize(args) -> int:
    records = read_records(args.records)
    summary = summarize(records, baseline=args.baseline, thresholds=args.thresholds or DEFAULT_THRESHOLDS)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.records))
    write_summary(summary, out_dir)
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(summary["mse"].to_string(index=False))
        print()
        print(summary["log_loss"].to_string(index=False))
    return 0

def cmd_stump_limit(args) -> int:
    report = simulate_stump_limit(
        n=args.n, w=args.w, b=args.b, reps=args.reps, seed=args.seed,
        noise_sd=args.noise_sd, bins=args.bins, n_jobs=args.n_jobs,
    )
    summary = report.dict(exclude={"histogram"})
    print(json.dumps(summary, ensure_ascii=False, indent=2))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as f:
            f.write(report.json(indent=2))
        pd.DataFrame([b.dict() for b in report.histogram]).to_csv(
            os.path.join(args.out, "histogram.csv"), index=False, float_format="%.17g"
        )
    return 0

def cmd_curve(args) -> int:
    model = load_model(args.model)
    grid = np.linspace(args.start, args.stop, args.num)
    table = smoothing_curve(model, args.feature, grid, args.base)
    directory = os.path.dirname(args.out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    table.to_csv(args.out, index=False, float_format="%.17g")
    if args.leaves is not None:
        base = np.zeros(model.trees[0].n_features) if args.base is None else np.asarray(args.base)
        leaves_path = os.path.splitext(args.out)[0] + "_leaves.csv"
        leaf_probability_table(model, args.leaves, base).to_csv(leaves_path, index=False, float_format="%.17g")
    print(f"曲线已写入: {args.out} ({len(table)} 点)")
    return 0

def cmd_serve(args) -> int:
    if not args.model:
        raise SmoothingError("serve 需要 --model 或 MODEL_PATH")
    settings.MODEL_PATH = args.model
    ModelService.register(args.model, load_model(args.model))
    from app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0

COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "summarize": cmd_summarize,
    "theorem1": cmd_stump_limit,
    "stump-limit": cmd_stump_limit,
    "curve": cmd_curve,
    "serve": cmd_serve,
}

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logger(level=args.log_level, log_file=settings.LOG_FILE)
    try:
        return COMMANDS[args.command](args)
    except (SmoothingError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"错误: {e}", file=sys.stderr)
        return 2

if __name__ == "__main__":
    sys.exit(main())
