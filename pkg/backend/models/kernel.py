import math
from pydantic import BaseModel, Field, validator
from typing import Literal

class KernelSpec(BaseModel):
    """核函数模型

    各坐标分量独立且共享同一个尺度 λ（球形核）。gaussian 时 λ 为标准差，
    laplace 时 λ 为尺度参数。
    """
    family: Literal["gaussian", "laplace"] = Field("gaussian", description="核函数族: gaussian, laplace")
    lam: float = Field(..., alias="lambda", description="带宽 / 尺度 λ (>0)")

    class Config:
        allow_mutation = False
        allow_population_by_field_name = True

    @validator("lam")
    def _check_lambda(cls, value):
        if not (value > 0 and math.isfinite(value)):
            raise ValueError(f"λ 必须为正的有限实数，实际为 {value}")
        return value
