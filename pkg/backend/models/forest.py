import math
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, Field, PrivateAttr, validator

from models.tree import FittedTree, TreeParams

SCHEMA_VERSION = 1

class LambdaSearchSpec(BaseModel):
    """λ 搜索设置

    lambda_min / lambda_max 为空时由训练特征标准差中位数 s 推出：[1e-3·s, 10·s]。
    """
    lambda_min: Optional[float] = Field(None, description="λ 下界 (>0)")
    lambda_max: Optional[float] = Field(None, description="λ 上界 (>lambda_min)")
    grid_size: int = Field(25, description="对数网格点数 (≥3)")
    rel_tol: float = Field(1e-3, description="黄金分割细化的相对容差")

    class Config:
        allow_mutation = False

    @validator("grid_size")
    def _check_grid(cls, value):
        if value < 3:
            raise ValueError(f"grid_size 必须 ≥ 3，实际为 {value}")
        return value

    @validator("rel_tol")
    def _check_tol(cls, value):
        if not value > 0:
            raise ValueError("rel_tol 必须为正")
        return value

class SmootherParams(BaseModel):
    """单棵树的平滑与校准参数 (λ_t, β0_t, β1_t)"""
    lam: float = Field(..., alias="lambda", description="平滑参数 λ_t")
    beta0: float = Field(0.0, description="截距 β0")
    beta1: float = Field(1.0, description="斜率 β1")

    class Config:
        allow_mutation = False
        allow_population_by_field_name = True

    @validator("lam")
    def _check_lambda(cls, value):
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"λ 必须为正的有限实数，实际为 {value}")
        return value

    @validator("beta0", "beta1")
    def _check_beta(cls, value):
        if not math.isfinite(value):
            raise ValueError("β 必须有限")
        return value

class CalibrationResult(BaseModel):
    """OOB 校准结果"""
    mode: Literal["global", "local"] = Field(..., description="校准方式: global, local")
    per_tree: List[SmootherParams] = Field(..., description="每棵树的 (λ, β0, β1)，global 时各项相同")
    oob_rss: float = Field(..., description="达到的 OOB 残差平方和")
    lambda_min: float = Field(..., description="实际使用的 λ 下界")
    lambda_max: float = Field(..., description="实际使用的 λ 上界")
    n_evaluations: int = Field(0, description="目标函数求值次数")

    @validator("oob_rss")
    def _check_rss(cls, value):
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"oob_rss 必须为非负有限值，实际为 {value}")
        return value

class ForestMetadata(BaseModel):
    """模型元数据"""
    n_trees: int = Field(..., description="树的数量 T")
    params: TreeParams = Field(..., description="树参数")
    kernel_family: Literal["gaussian", "laplace"] = Field("gaussian", description="核函数族")
    calibration_mode: Optional[Literal["global", "local", "none"]] = Field(None, description="校准方式")
    noise_source: Literal["in_sample", "oob"] = Field("in_sample", description="噪声项的残差来源")
    seed: int = Field(0, description="森林随机种子")
    n_train: int = Field(..., description="训练样本数")
    feature_names: List[str] = Field(default_factory=list, description="特征名称")
    oob_rss: Optional[float] = Field(None, description="校准得到的 OOB 残差平方和")

class SmoothedForestModel(BaseModel):
    """平滑随机森林模型

    trees 与 smoothers 一一对应；noise_variance 为训练时预先计算的噪声项。
    """
    schema_version: int = Field(SCHEMA_VERSION, description="模型文件 schema 版本")
    trees: List[FittedTree] = Field(..., description="树列表")
    smoothers: List[SmootherParams] = Field(..., description="每棵树的平滑参数")
    noise_variance: float = Field(0.0, description="噪声方差项")
    metadata: ForestMetadata = Field(..., description="元数据")

    _compiled: List[Any] = PrivateAttr(default_factory=list)

    @validator("smoothers")
    def _check_lengths(cls, value, values):
        trees = values.get("trees")
        if trees is not None and len(trees) != len(value):
            raise ValueError(f"树数量 {len(trees)} 与平滑参数数量 {len(value)} 不一致")
        if not value:
            raise ValueError("模型至少需要一棵树")
        return value

    @validator("noise_variance")
    def _check_noise(cls, value):
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"noise_variance 必须为非负有限值，实际为 {value}")
        return value

    @property
    def n_trees(self) -> int:
        return len(self.trees)

class PredictiveDistribution(BaseModel):
    """预测分布：均值与三项方差分解 variance = intra + inter + noise"""
    mean: float = Field(..., description="平滑预测均值")
    variance: float = Field(..., description="总方差")
    intra: float = Field(..., description="树内方差（核诱导）")
    inter: float = Field(..., description="树间方差")
    noise: float = Field(..., description="噪声项")
