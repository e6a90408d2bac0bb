"""
异常定义 - 几何计算与数据读写的错误类型
"""
from typing import Optional


class HopcError(ValueError):
    """所有HOPC相关错误的基类"""


# ==================== 几何错误 ====================
class GeometryError(HopcError):
    """几何计算错误"""


class EmptySupport(GeometryError):
    """支撑体内没有任何点"""


class NotSymmetric(GeometryError):
    """输入矩阵不对称"""


class NotUnit(GeometryError):
    """输入向量不是单位向量"""


class InvalidBasis(GeometryError):
    """特征基不是正交右手系"""


class TooFewKeypoints(GeometryError):
    """STK数量不足以计算STK-D"""


class EmptySequence(GeometryError):
    """序列中所有帧都为空"""


class BadSigma(GeometryError):
    """sigma不在(0,1)之间"""


# ==================== 数据错误 ====================
class DataError(HopcError):
    """数据读写或训练数据错误"""


class FormatError(DataError):
    """二进制文件解析错误，带字节偏移"""

    def __init__(self, message: str, offset: int = 0, frame_index: Optional[int] = None):
        self.offset = offset
        self.frame_index = frame_index
        detail = f"{message} (偏移 {offset}"
        if frame_index is not None:
            detail += f", 帧 {frame_index}"
        detail += ")"
        super().__init__(detail)


class PcseqFormatError(FormatError):
    """pcseq文件格式错误"""


class ModelFormatError(FormatError):
    """模型文件格式错误"""


class DepthFormatError(DataError):
    """深度图与相机内参不匹配或无法解码"""


class ManifestError(DataError):
    """序列清单错误"""


class TooFewSamples(DataError):
    """样本数少于聚类数"""


class DegenerateClass(DataError):
    """某个类别的样本数不足2个"""


class DegenerateTraining(DataError):
    """训练数据只有一个类别"""
