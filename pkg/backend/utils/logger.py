import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

def _resolve_level(level: Union[int, str]) -> int:
    if isinstance(level, int):
        return level
    resolved = logging.getLevelName(str(level).upper())
    return resolved if isinstance(resolved, int) else logging.INFO

def setup_logger(name: Optional[str] = None, level: Union[int, str] = logging.INFO,
                 log_file: Optional[str] = None, max_size: int = 10*1024*1024, backup_count: int = 5):
    """
    配置日志记录器

    控制台输出写到 stderr，保证 CLI 的 stdout 只包含结果（如 theorem1 的 JSON）。
    "smoothing" 与 "metrics" 两个记录器都向上传播到这里配置的记录器。

    参数:
        name (str): 日志记录器名称，默认为None（root logger）
        level (int|str): 日志级别，logging 常量或 "INFO" 这样的名称
        log_file (str): 日志文件路径，为None时仅输出到控制台
        max_size (int): 单个日志文件最大字节数
        backup_count (int): 轮转保留的文件数

    返回:
        logging.Logger: 配置好的日志记录器
    """
    logger = logging.getLogger(name)
    logger.setLevel(_resolve_level(level))

    # CLI 与测试会多次调用，先移除旧处理器
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=max_size, backupCount=backup_count, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger
