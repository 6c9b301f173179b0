"""项目统一异常定义。

所有业务异常均继承 ``AppError``，CLI 层据此区分运行时失败（退出码 1）
与参数错误（退出码 2，由 argparse 处理）。
"""

from __future__ import annotations

from typing import Optional


class AppError(Exception):
    """项目内所有可预期错误的基类"""


class ShapeMismatchError(AppError, ValueError):
    """张量/图像形状不兼容"""


class NonFiniteError(AppError, FloatingPointError):
    """前向或反向计算产生了 NaN/Inf

    Attributes:
        op: 出错的算子标识或损失分量名
        name: 出错张量的名称（若已知）
    """

    def __init__(self, message: str, *, op: str = "", name: Optional[str] = None) -> None:
        super().__init__(message)
        self.op = op
        self.name = name


class InvalidProfileError(AppError, ValueError):
    """退化分布配置非法（如区间 min > max）"""


class DegradationError(AppError, ValueError):
    """退化流程无法执行（尺寸不整除、模糊核大于图像等）"""


class QualityRangeError(DegradationError):
    """压缩质量超出 [10, 100]"""


class RestorerError(AppError, ValueError):
    """伪人脸复原器参数与输入不匹配"""


class MaskInputError(AppError, ValueError):
    """MaskNet 输入缺失"""


class NoAdaptationSignalError(AppError, ValueError):
    """需要自适应（n > 0）但图像中没有人脸"""


class ConfigError(AppError, ValueError):
    """配置文件缺失或校验失败"""


class CheckpointFormatError(AppError, ValueError):
    """检查点文件格式损坏或版本不符"""


class RunLockedError(AppError, RuntimeError):
    """运行目录已被其他进程占用"""
