from fastapi import APIRouter, Depends, HTTPException
import logging
from datetime import datetime

from services.model_service import ModelService
from models.prediction import PredictRequest, PredictResponse, GradientResponse, ModelInfo
from utils.exceptions import SmoothingError

router = APIRouter()
logger = logging.getLogger("smoothing")

# 获取服务实例
def get_model_service():
    return ModelService()

@router.get("/model", response_model=ModelInfo)
async def get_model_info(
    model_service: ModelService = Depends(get_model_service)
):
    """获取当前模型信息"""
    try:
        return model_service.describe()
    except SmoothingError as e:
        raise HTTPException(status_code=400, detail=str(e))

@router.post("/predict", response_model=PredictResponse)
async def predict(
    request: PredictRequest,
    model_service: ModelService = Depends(get_model_service)
):
    """平滑森林预测

    返回每个查询点的均值与方差分解 (intra, inter, noise)
    """
    start_time = datetime.now()
    try:
        predictions = model_service.predict(request.points)
    except SmoothingError as e:
        logger.warning(f"Predict rejected: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))

    return PredictResponse(
        predictions=predictions,
        n_trees=model_service.get_model().n_trees,
        response_time=(datetime.now() - start_time).total_seconds()
    )

@router.post("/predict/gradient", response_model=GradientResponse)
async def predict_gradient(
    request: PredictRequest,
    model_service: ModelService = Depends(get_model_service)
):
    """平滑森林预测对各维度的解析梯度（仅高斯核）"""
    start_time = datetime.now()
    try:
        gradients = model_service.gradient(request.points)
    except SmoothingError as e:
        logger.warning(f"Gradient rejected: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))

    return GradientResponse(
        gradients=gradients,
        response_time=(datetime.now() - start_time).total_seconds()
    )
