from pydantic import BaseModel, Field, validator
from typing import List, Optional
import numpy as np

class Dataset(BaseModel):
    """数据集模型

    features 为 n×p 的有限实数矩阵，targets 为长度 n 的向量。载入后不可修改，
    可以在并行任务之间只读共享。
    """
    features: np.ndarray = Field(..., description="特征矩阵 (n×p)")
    targets: np.ndarray = Field(..., description="目标向量 (n)")
    feature_names: List[str] = Field(..., description="特征名称列表 (p)")
    name: str = Field("dataset", description="数据集名称")
    ground_truth: Optional[str] = Field(None, description="合成数据的真实函数名称")

    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False

    @validator("features", pre=True)
    def _check_features(cls, value):
        features = np.array(value, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise ValueError(f"特征矩阵必须为 n×p 且 n, p ≥ 1，实际形状 {features.shape}")
        if not np.all(np.isfinite(features)):
            raise ValueError("特征矩阵包含非有限值")
        features.setflags(write=False)
        return features

    @validator("targets", pre=True)
    def _check_targets(cls, value, values):
        targets = np.array(value, dtype=float).reshape(-1)
        if not np.all(np.isfinite(targets)):
            raise ValueError("目标向量包含非有限值")
        features = values.get("features")
        if features is not None and targets.shape[0] != features.shape[0]:
            raise ValueError(f"目标长度 {targets.shape[0]} 与特征行数 {features.shape[0]} 不一致")
        targets.setflags(write=False)
        return targets

    @validator("feature_names")
    def _check_names(cls, value, values):
        features = values.get("features")
        if features is not None and len(value) != features.shape[1]:
            raise ValueError(f"特征名称数量 {len(value)} 与特征列数 {features.shape[1]} 不一致")
        return value

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    def subset(self, rows: np.ndarray, name: Optional[str] = None) -> "Dataset":
        """按行索引（允许重复）取子集"""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            features=self.features[rows],
            targets=self.targets[rows],
            feature_names=list(self.feature_names),
            name=name or self.name,
            ground_truth=self.ground_truth,
        )

class BootstrapSplit(BaseModel):
    """自助采样划分：袋内多重集与袋外集合"""
    in_bag: List[int] = Field(..., description="袋内行索引（有放回抽样，长度 n）")
    oob: List[int] = Field(..., description="袋外行索引（升序）")

    class Config:
        allow_mutation = False
