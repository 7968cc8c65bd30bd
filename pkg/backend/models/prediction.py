from pydantic import BaseModel, Field, validator
from typing import List, Optional, Dict

from models.forest import PredictiveDistribution

class PredictRequest(BaseModel):
    """预测请求模型"""
    points: List[List[float]] = Field(..., description="查询点列表，每个点长度为 p")

    @validator("points")
    def _check_points(cls, value):
        if not value:
            raise ValueError("至少需要一个查询点")
        if len({len(point) for point in value}) != 1:
            raise ValueError("所有查询点的维数必须相同")
        return value

class PredictResponse(BaseModel):
    """预测响应模型"""
    predictions: List[PredictiveDistribution] = Field(..., description="每个查询点的预测分布")
    n_trees: int = Field(..., description="模型中的树数")
    response_time: float = Field(..., description="响应时间(秒)")

class GradientResponse(BaseModel):
    """梯度响应模型"""
    gradients: List[List[float]] = Field(..., description="每个查询点的平滑预测梯度")
    response_time: float = Field(..., description="响应时间(秒)")

class ModelInfo(BaseModel):
    """模型信息"""
    n_trees: int = Field(..., description="树的数量")
    n_features: int = Field(..., description="特征数")
    feature_names: List[str] = Field(default_factory=list, description="特征名称")
    kernel_family: str = Field(..., description="核函数族")
    calibration_mode: Optional[str] = Field(None, description="校准方式")
    noise_variance: float = Field(..., description="噪声方差项")
    total_leaves: int = Field(..., description="所有树的叶子总数")
    lambdas: Dict[str, float] = Field(default_factory=dict, description="λ 的 min/median/max")
