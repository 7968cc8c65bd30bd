import math
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr, validator

class TreeParams(BaseModel):
    """CART 回归树参数"""
    max_depth: Optional[int] = Field(None, description="最大深度，None 表示不限")
    min_samples_leaf: int = Field(5, description="叶子最少袋内样本数")
    mtry: Optional[int] = Field(None, description="每次分裂候选特征数，None 表示 max(1, ⌊p/3⌋)")
    seed: int = Field(0, description="特征抽样随机种子")

    class Config:
        allow_mutation = False

    @validator("min_samples_leaf")
    def _check_min_leaf(cls, value):
        if value < 1:
            raise ValueError(f"min_samples_leaf 必须 ≥ 1，实际为 {value}")
        return value

    @validator("max_depth")
    def _check_depth(cls, value):
        if value is not None and value < 0:
            raise ValueError(f"max_depth 必须 ≥ 0，实际为 {value}")
        return value

    def resolve_mtry(self, p: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, p // 3)
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry 必须满足 1 ≤ mtry ≤ p={p}，实际为 {mtry}")
        return mtry

class LeafRegion(BaseModel):
    """叶子区域：轴平行超盒 [lower, upper) 与常数 c"""
    lower: List[float] = Field(..., description="各维下界（允许 -inf）")
    upper: List[float] = Field(..., description="各维上界（允许 +inf）")
    constant: float = Field(..., description="叶子常数（袋内目标均值）")
    node_id: int = Field(-1, description="对应的树节点编号")

    class Config:
        allow_mutation = False

    @validator("upper")
    def _check_bounds(cls, value, values):
        lower = values.get("lower")
        if lower is not None:
            if len(lower) != len(value):
                raise ValueError("上下界维数不一致")
            for j, (lo, up) in enumerate(zip(lower, value)):
                if not lo < up:
                    raise ValueError(f"第 {j} 维下界 {lo} 不小于上界 {up}")
        return value

    @validator("constant")
    def _check_constant(cls, value):
        if not math.isfinite(value):
            raise ValueError("叶子常数必须有限")
        return value

    def contains(self, x) -> bool:
        """半开区间约定下判断点是否落在区域内"""
        x = np.asarray(x, dtype=float)
        return bool(np.all((np.asarray(self.lower) <= x) & (x < np.asarray(self.upper))))

class FittedTree(BaseModel):
    """训练好的 CART 回归树

    节点以扁平数组保存：叶子节点的 feature 为 -1，left/right 为 -1。
    点 x 在 x[feature] < threshold 时走左子树。
    """
    n_features: int = Field(..., description="特征数 p")
    feature: List[int] = Field(..., description="各节点的分裂特征，叶子为 -1")
    threshold: List[float] = Field(..., description="各节点的分裂阈值，叶子为 0")
    left: List[int] = Field(..., description="左子节点编号，叶子为 -1")
    right: List[int] = Field(..., description="右子节点编号，叶子为 -1")
    value: List[float] = Field(..., description="各节点袋内目标均值")
    n_node_samples: List[int] = Field(..., description="各节点袋内样本数")
    leaves: List[LeafRegion] = Field(..., description="叶子区域列表（按节点编号升序）")
    in_bag_indices: List[int] = Field(default_factory=list, description="袋内行索引（多重集）")
    oob_indices: List[int] = Field(default_factory=list, description="袋外行索引")

    _arrays: Dict[str, Any] = PrivateAttr(default_factory=dict)

    class Config:
        allow_mutation = False

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    def arrays(self) -> Dict[str, np.ndarray]:
        """返回缓存的 numpy 形式（节点数组与叶子盒），供向量化计算使用"""
        if not self._arrays:
            self._arrays.update({
                "feature": np.asarray(self.feature, dtype=int),
                "threshold": np.asarray(self.threshold, dtype=float),
                "left": np.asarray(self.left, dtype=int),
                "right": np.asarray(self.right, dtype=int),
                "value": np.asarray(self.value, dtype=float),
                "lower": np.asarray([leaf.lower for leaf in self.leaves], dtype=float).reshape(-1, self.n_features),
                "upper": np.asarray([leaf.upper for leaf in self.leaves], dtype=float).reshape(-1, self.n_features),
                "constants": np.asarray([leaf.constant for leaf in self.leaves], dtype=float),
                "leaf_of_node": {leaf.node_id: i for i, leaf in enumerate(self.leaves)},
            })
        return self._arrays
