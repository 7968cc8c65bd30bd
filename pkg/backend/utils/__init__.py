# Utils package
# 日志、运行指标记录与异常定义

from .logger import setup_logger
