"""平滑随机森林的异常类型

所有业务异常都继承 SmoothingError，CLI 和 API 只需捕获这一个基类。
"""


class SmoothingError(Exception):
    """业务异常基类"""


class DataFormatError(SmoothingError, ValueError):
    """数据文件缺失、单元格非数值、数据为空或目标列不存在"""


class IntegrityError(SmoothingError):
    """叶子区域不构成划分（概率之和偏离 1）"""


class ConfigurationError(SmoothingError, ValueError):
    """参数或实验配置不合法"""


class SearchFailedError(SmoothingError):
    """λ 搜索网格上的目标函数全部非有限"""


class UnsupportedOperationError(SmoothingError):
    """当前核函数不支持该操作"""


class ModelFormatError(SmoothingError):
    """模型文件损坏或被截断"""


class ModelVersionError(SmoothingError):
    """模型文件的 schema 版本与当前程序不一致"""

    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"模型文件版本 {found} 与当前支持的版本 {expected} 不一致")
