from typing import Dict, Any, Optional
import logging
import json
import os

from pydantic import ValidationError

from models.experiment import BenchConfig
from utils.exceptions import ConfigurationError

logger = logging.getLogger("smoothing")

DEFAULT_CONFIG_FILE = os.path.join(os.path.dirname(__file__), "../data/bench_config.json")

class SettingsService:
    """
    实验配置服务

    负责读取 JSON 格式的实验配置文件，并把命令行参数覆盖到文件中的值上
    """

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file or DEFAULT_CONFIG_FILE

    def ensure_config_file(self) -> str:
        """
        确保配置文件存在，如果不存在则写入默认配置
        """
        directory = os.path.dirname(self.config_file)
        if directory:
            os.makedirs(directory, exist_ok=True)

        if not os.path.exists(self.config_file):
            self._save(self.default_config())
            logger.info(f"Default bench config written to {self.config_file}")
        return self.config_file

    @staticmethod
    def default_config() -> Dict[str, Any]:
        """
        默认配置：两个合成数据集、三个训练集大小、20 次重复
        """
        config = BenchConfig(
            datasets=[{"synthetic": "step", "n": 300, "noise_sd": 0.3},
                      {"synthetic": "hetero", "n": 300, "noise_sd": 0.3}],
            training_sizes=[50, 100, 200],
            reps=20,
        )
        return json.loads(config.json(by_alias=True))

    def _load(self) -> Dict[str, Any]:
        """
        加载配置文件
        """
        if not os.path.exists(self.config_file):
            raise ConfigurationError(f"配置文件不存在: {self.config_file}")
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                data = json.load(f)
        except Exception as e:
            logger.error(f"Failed to load bench config: {str(e)}", exc_info=True)
            raise ConfigurationError(f"无法解析配置文件 {self.config_file}: {str(e)}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"配置文件顶层必须是对象: {self.config_file}")
        return data

    def _save(self, data: Dict[str, Any]):
        try:
            with open(self.config_file, "w", encoding="utf-8") as f:
                json.dump(data, f, ensure_ascii=False, indent=2)
        except Exception as e:
            logger.error(f"Failed to save bench config: {str(e)}", exc_info=True)
            raise ConfigurationError(f"保存配置失败: {str(e)}")

    def load_bench_config(self, overrides: Optional[Dict[str, Any]] = None) -> BenchConfig:
        """
        读取配置文件并应用覆盖项（值为 None 的覆盖项被忽略）

        Args:
            overrides: 来自命令行的字段值，顶层字段直接替换，tree_params 与 search 按字段合并
        """
        data = self._load() if os.path.exists(self.config_file) or overrides is None else {}
        return merge_bench_config(data, overrides)

    def save_bench_config(self, config: BenchConfig):
        self._save(json.loads(config.json(by_alias=True)))

def merge_bench_config(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> BenchConfig:
    """把覆盖项合并进配置字典并校验"""
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("tree_params", "search") and isinstance(value, dict):
            section = dict(merged.get(key) or {})
            section.update({k: v for k, v in value.items() if v is not None})
            merged[key] = section
        else:
            merged[key] = value
    try:
        return BenchConfig.parse_obj(merged)
    except ValidationError as e:
        raise ConfigurationError(f"实验配置不合法: {str(e)}")
