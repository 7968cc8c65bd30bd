from fastapi import APIRouter
from .predict import router as predict_router

api_router = APIRouter()

# 包含各个模块的路由
api_router.include_router(predict_router, tags=["predict"])
