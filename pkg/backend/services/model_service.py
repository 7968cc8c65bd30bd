import logging
import threading
from typing import Dict, List, Optional

import numpy as np

from config import settings
from models.forest import PredictiveDistribution, SmoothedForestModel
from models.prediction import ModelInfo
from services.forest_service import forest_gradient, forest_uncertainty_many, load_model
from utils.exceptions import ConfigurationError

logger = logging.getLogger("smoothing")

class ModelService:
    """
    模型服务

    负责加载 API 使用的平滑随机森林模型（按路径缓存），并提供预测与梯度计算
    """

    _models: Dict[str, SmoothedForestModel] = {}
    _lock = threading.Lock()

    def __init__(self, model_path: Optional[str] = None):
        self.model_path = model_path or settings.MODEL_PATH

    @classmethod
    def register(cls, path: str, model: SmoothedForestModel):
        """直接注册一个已加载的模型（serve 命令与测试使用）"""
        with cls._lock:
            cls._models[path] = model

    def get_model(self) -> SmoothedForestModel:
        if not self.model_path:
            raise ConfigurationError("未配置 MODEL_PATH，无法提供预测服务")
        with self._lock:
            model = self._models.get(self.model_path)
            if model is None:
                model = load_model(self.model_path)
                self._models[self.model_path] = model
        return model

    def describe(self) -> ModelInfo:
        model = self.get_model()
        lambdas = np.array([params.lam for params in model.smoothers])
        return ModelInfo(
            n_trees=model.n_trees,
            n_features=model.trees[0].n_features,
            feature_names=model.metadata.feature_names,
            kernel_family=model.metadata.kernel_family,
            calibration_mode=model.metadata.calibration_mode,
            noise_variance=model.noise_variance,
            total_leaves=sum(tree.n_leaves for tree in model.trees),
            lambdas={
                "min": float(lambdas.min()),
                "median": float(np.median(lambdas)),
                "max": float(lambdas.max()),
            },
        )

    def predict(self, points: List[List[float]]) -> List[PredictiveDistribution]:
        result = forest_uncertainty_many(self.get_model(), np.asarray(points, dtype=float))
        return [
            PredictiveDistribution(
                mean=float(result["mean"][i]),
                variance=float(result["variance"][i]),
                intra=float(result["intra"][i]),
                inter=float(result["inter"][i]),
                noise=float(result["noise"][i]),
            )
            for i in range(len(points))
        ]

    def gradient(self, points: List[List[float]]) -> List[List[float]]:
        model = self.get_model()
        return [forest_gradient(model, point).tolist() for point in points]
