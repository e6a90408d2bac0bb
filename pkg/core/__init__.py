"""
核心模块 - 几何计算、HOPC描述子、STK检测、尺度选择与STK-D
"""
from .exceptions import (
    HopcError, GeometryError, EmptySupport, NotSymmetric, NotUnit, InvalidBasis,
    TooFewKeypoints, EmptySequence, BadSigma, DataError, FormatError,
    PcseqFormatError, ModelFormatError, DepthFormatError, ManifestError,
    TooFewSamples, DegenerateClass, DegenerateTraining
)
from .geometry import (
    VolumeKind, PointCloudFrame, PointCloudSequence, SupportVolume, EigenBasis,
    build_support, covariance, eigen3, disambiguate, eigen_basis, eigenratios,
    rotation_matrix, random_rotation
)
from .hopc import DirectionSet, dodecahedron, project_quantize, hopc, hopc_from_basis
from .scale import ScaleParams, spatial_scale, temporal_scale, temporal_scale_many, make_selector
from .detector import StkRecord, DetectorParams, DetectionStats, eigenratio_ok, quality, nms, detect
from .local_descriptor import (
    CellGrid, orient_points, point_contribution, local_hopc, describe_stks, holistic_hopc
)
from .stkd import Polychoron600, StkdDescriptor, polychoron, stkd, stkd_from_normalized

__all__ = [
    'HopcError', 'GeometryError', 'EmptySupport', 'NotSymmetric', 'NotUnit', 'InvalidBasis',
    'TooFewKeypoints', 'EmptySequence', 'BadSigma', 'DataError', 'FormatError',
    'PcseqFormatError', 'ModelFormatError', 'DepthFormatError', 'ManifestError',
    'TooFewSamples', 'DegenerateClass', 'DegenerateTraining',
    'VolumeKind', 'PointCloudFrame', 'PointCloudSequence', 'SupportVolume', 'EigenBasis',
    'build_support', 'covariance', 'eigen3', 'disambiguate', 'eigen_basis', 'eigenratios',
    'rotation_matrix', 'random_rotation',
    'DirectionSet', 'dodecahedron', 'project_quantize', 'hopc', 'hopc_from_basis',
    'ScaleParams', 'spatial_scale', 'temporal_scale', 'temporal_scale_many', 'make_selector',
    'StkRecord', 'DetectorParams', 'DetectionStats', 'eigenratio_ok', 'quality', 'nms', 'detect',
    'CellGrid', 'orient_points', 'point_contribution', 'local_hopc', 'describe_stks', 'holistic_hopc',
    'Polychoron600', 'StkdDescriptor', 'polychoron', 'stkd', 'stkd_from_normalized',
]
