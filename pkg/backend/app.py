import logging
import time
from datetime import datetime

import uvicorn
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from api.router import api_router
from config import settings
from services.model_service import ModelService
from utils.exceptions import SmoothingError
from utils.logger import setup_logger

setup_logger(level=settings.LOG_LEVEL, log_file=settings.LOG_FILE)
logger = logging.getLogger("smoothing")

app = FastAPI(
    title="Smoothed Random Forest API",
    description="平滑随机森林预测与不确定性估计API",
    version="0.1.0"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)

@app.on_event("startup")
async def preload_model():
    """配置了 MODEL_PATH 时在启动阶段加载模型，文件损坏时只记录错误，请求时再报告"""
    if not settings.MODEL_PATH:
        logger.info("MODEL_PATH not set, prediction endpoints disabled until configured")
        return
    try:
        info = ModelService().describe()
    except SmoothingError as e:
        logger.error(f"Failed to load model {settings.MODEL_PATH}: {e}")
        return
    logger.info(
        f"Model loaded: {settings.MODEL_PATH} | trees={info.n_trees} | "
        f"features={info.n_features} | kernel={info.kernel_family}"
    )

@app.middleware("http")
async def add_process_time_header(request: Request, call_next):
    start_time = time.perf_counter()
    response = await call_next(request)
    process_time = time.perf_counter() - start_time
    response.headers["X-Process-Time"] = f"{process_time:.6f}"
    logger.info(f"{request.method} {request.url.path} -> {response.status_code} ({process_time:.4f}s)")
    return response

app.include_router(api_router, prefix="/api")

@app.get("/health")
async def health_check():
    return {
        "status": "ok",
        "model_configured": bool(settings.MODEL_PATH),
        "timestamp": datetime.now().isoformat(),
    }

# 输入或模型问题统一返回 400
@app.exception_handler(SmoothingError)
async def smoothing_exception_handler(request: Request, exc: SmoothingError):
    logger.warning(f"{request.url.path} rejected: {exc}")
    return JSONResponse(status_code=400, content={"detail": str(exc)})

@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception):
    logger.error(f"Unhandled error on {request.url.path}: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={"detail": "Internal server error", "message": str(exc)}
    )

if __name__ == "__main__":
    uvicorn.run("app:app", host=settings.HOST, port=settings.PORT, reload=settings.DEBUG)
