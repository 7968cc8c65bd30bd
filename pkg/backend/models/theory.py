from pydantic import BaseModel, Field, validator
from typing import List

class StumpFit(BaseModel):
    """决策桩拟合结果：b_hat = (x_sup + x_inf) / 2"""
    x_sup: float = Field(..., description="0 类中最大的设计点")
    x_inf: float = Field(..., description="1 类中最小的设计点")
    b_hat: float = Field(..., description="断点估计")

    @validator("b_hat")
    def _check_order(cls, value, values):
        x_sup, x_inf = values.get("x_sup"), values.get("x_inf")
        if x_sup is not None and x_inf is not None and not x_sup <= value <= x_inf:
            raise ValueError(f"b_hat={value} 不在 [{x_sup}, {x_inf}] 内")
        return value

class HistogramBin(BaseModel):
    """直方图分箱"""
    left: float = Field(..., description="左端点")
    right: float = Field(..., description="右端点")
    count: int = Field(..., description="落入样本数")
    density: float = Field(..., description="经验密度")
    laplace_density: float = Field(..., description="Laplace(0,1) 在分箱中点的密度")

class SimulationReport(BaseModel):
    """断点估计渐近分布的模拟报告

    e_r = n(b̂_r − b)/w 的样本均值、样本方差与到 Laplace(0,1) 的 KS 距离。
    """
    n: int = Field(..., description="每次模拟的设计点数")
    w: float = Field(..., description="半宽 w")
    b: float = Field(..., description="真实断点 b")
    reps: int = Field(..., description="重复次数")
    seed: int = Field(..., description="随机种子")
    noise_sd: float = Field(0.0, description="目标噪声标准差，0 表示无噪声")
    mean: float = Field(..., description="e_r 的样本均值")
    variance: float = Field(..., description="e_r 的样本方差")
    ks_distance: float = Field(..., description="到 Laplace(0,1) 的 Kolmogorov–Smirnov 距离")
    degenerate_resamples: int = Field(0, description="单一类别样本的重抽次数")
    histogram: List[HistogramBin] = Field(default_factory=list, description="e_r 的直方图")
