from typing import Optional
from pydantic import BaseSettings

class Settings(BaseSettings):
    # 应用设置
    APP_NAME: str = "Smoothed Random Forest"
    HOST: str = "0.0.0.0"
    PORT: int = 8000
    DEBUG: bool = False
    MODEL_PATH: Optional[str] = None  # API 服务加载的模型文件

    # 日志设置
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # 森林设置
    DEFAULT_N_TREES: int = 100
    DEFAULT_N_TREES_LARGE: int = 1000
    DEFAULT_MAX_DEPTH: Optional[int] = None  # None 表示不限深度
    DEFAULT_MIN_SAMPLES_LEAF: int = 5

    # 平滑参数搜索设置
    DEFAULT_LAMBDA_GRID: int = 25
    DEFAULT_LAMBDA_REL_TOL: float = 1e-3
    LAMBDA_MIN_FACTOR: float = 1e-3   # 乘以特征标准差中位数
    LAMBDA_MAX_FACTOR: float = 10.0

    # 评估设置
    VARIANCE_FLOOR: float = 1e-12
    N_JOBS: int = 1
    PREDICT_CHUNK_SIZE: int = 256     # 向量化预测时每块的查询点数
    BENCH_OUTPUT_DIR: str = "bench_results"

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"

settings = Settings()
