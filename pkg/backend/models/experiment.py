from pydantic import BaseModel, Field, validator
from typing import List, Literal, Optional

from models.forest import LambdaSearchSpec
from models.tree import TreeParams

MODEL_NAMES = ("RF_base", "SRF_global", "SRF_local", "RF_large")

# CLI 中使用的简写
MODEL_ALIASES = {
    "rf": "RF_base",
    "srf-global": "SRF_global",
    "srf-local": "SRF_local",
    "rf-large": "RF_large",
}

RECORDS_SCHEMA = 1

class DatasetSource(BaseModel):
    """实验数据来源：CSV 文件或内置合成数据"""
    path: Optional[str] = Field(None, description="CSV 文件路径")
    synthetic: Optional[Literal["step", "hetero"]] = Field(None, description="合成数据: step, hetero")
    name: Optional[str] = Field(None, description="数据集名称，默认取文件名")
    n: int = Field(300, description="合成数据样本数")
    noise_sd: float = Field(0.3, description="合成数据噪声标准差")

    @validator("synthetic", always=True)
    def _check_source(cls, value, values):
        if (value is None) == (values.get("path") is None):
            raise ValueError("path 与 synthetic 必须且只能指定一个")
        return value

class BenchConfig(BaseModel):
    """实验配置"""
    datasets: List[DatasetSource] = Field(..., description="数据集列表")
    target: Optional[str] = Field(None, description="CSV 目标列，默认最后一列")
    training_sizes: List[int] = Field(..., description="训练集大小列表")
    reps: int = Field(1, description="每个训练集大小的重复次数")
    models: List[str] = Field(list(MODEL_NAMES[:3]), description="参与比较的模型")
    seed: int = Field(0, description="主随机种子")
    n_trees: int = Field(100, description="RF_base 与 SRF 使用的树数")
    n_trees_large: int = Field(1000, description="RF_large 的树数")
    tree_params: TreeParams = Field(default_factory=TreeParams, description="树参数")
    search: LambdaSearchSpec = Field(default_factory=LambdaSearchSpec, description="λ 搜索设置")
    resample: Literal["bootstrap", "subsample"] = Field("bootstrap", description="训练集抽样方式")
    oob_noise: bool = Field(False, description="噪声项是否改用 OOB 残差")
    rf_noise_term: bool = Field(True, description="RF 基线 log-loss 方差是否加入噪声项")
    n_jobs: int = Field(1, description="并行进程数")

    @validator("models", each_item=True)
    def _check_model(cls, value):
        value = MODEL_ALIASES.get(value, value)
        if value not in MODEL_NAMES:
            raise ValueError(f"未知模型: {value}，可选 {', '.join(MODEL_NAMES)}")
        return value

    @validator("reps")
    def _check_reps(cls, value):
        if value < 1:
            raise ValueError("reps 必须 ≥ 1")
        return value

    @validator("training_sizes", each_item=True)
    def _check_size(cls, value):
        if value < 2:
            raise ValueError(f"训练集大小必须 ≥ 2，实际为 {value}")
        return value

class ExperimentRecord(BaseModel):
    """一条实验结果：(dataset, training_size, repetition, model)"""
    dataset: str = Field(..., description="数据集名称")
    training_size: int = Field(..., description="训练集大小")
    repetition: int = Field(..., description="重复序号")
    model: str = Field(..., description="模型名称")
    oob_mse: float = Field(..., description="OOB 测试集 MSE")
    oob_log_loss: float = Field(..., description="OOB 测试集平均高斯 log-loss")
    n_train: int = Field(..., description="训练行数（含重复）")
    n_test: int = Field(..., description="测试行数")
    oob_fraction: float = Field(..., description="测试行占数据集比例")
    train_hash: str = Field(..., description="训练索引的哈希，用于核对配对比较")
    wall_time_ms: float = Field(0.0, description="训练与评估耗时(毫秒)，单独写入 timings.csv")
    per_query_us: float = Field(0.0, description="每个查询点的预测耗时(微秒)")

    @validator("oob_mse")
    def _check_mse(cls, value):
        if value < 0:
            raise ValueError("oob_mse 必须 ≥ 0")
        return value

    @validator("wall_time_ms")
    def _check_time(cls, value):
        if value < 0:
            raise ValueError("wall_time_ms 必须 ≥ 0")
        return value

# records.csv 中的确定性列（不含耗时）
RECORD_COLUMNS = [
    "dataset", "training_size", "repetition", "model",
    "oob_mse", "oob_log_loss", "n_train", "n_test", "oob_fraction", "train_hash",
]

TIMING_COLUMNS = ["dataset", "training_size", "repetition", "model", "wall_time_ms", "per_query_us"]
