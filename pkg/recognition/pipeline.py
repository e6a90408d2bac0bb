"""
识别流程模块 - 序列特征提取、动作描述子、模型训练与分类

四种设置：
    holistic  整段序列的Holistic HOPC
    stkd      STK-D
    local     Local HOPC 的BoW直方图
    combined  Local HOPC BoW + STK-D 拼接
"""
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from config import (
    CLASSIFIER_CONFIG, CODEBOOK_CONFIG, DESCRIPTOR_CONFIG, DETECTOR_CONFIG, SCALE_CONFIG, STKD_CONFIG
)
from core.detector import DetectionStats, DetectorParams, StkRecord, detect
from core.exceptions import DegenerateClass, TooFewKeypoints
from core.geometry import PointCloudSequence
from core.hopc import DirectionSet, dodecahedron
from core.local_descriptor import CellGrid, describe_stks, holistic_hopc
from core.scale import ScaleParams, spatial_scale
from core.stkd import StkdDescriptor, stkd
from data.stk_io import DescriptorFile
from .classifier import KernelModel, predict_with_scores, train
from .codebook import Codebook, bow_histogram, fscore_matrix, kmeans, select_features

SETTINGS = ('holistic', 'stkd', 'local', 'combined')
SETTING_PARTS = {
    'holistic': {'holistic'},
    'stkd': {'stkd'},
    'local': {'local'},
    'combined': {'local', 'stkd'},
}


@dataclass
class PipelineParams:
    """整条识别流程的参数，默认值取自config"""
    mode: str = 'combined'
    # 尺度选择
    sigma: float = SCALE_CONFIG['sigma']
    tau_max: Optional[int] = None
    spatial_mode: str = SCALE_CONFIG['spatial_mode']
    constant_radius: Optional[float] = SCALE_CONFIG['constant_radius']
    temporal_mode: str = SCALE_CONFIG['temporal_mode']
    constant_tau: int = SCALE_CONFIG['constant_tau']
    # STK检测
    theta_stk: float = DETECTOR_CONFIG['theta_stk']
    nk: int = DETECTOR_CONFIG['nk']
    nms_radius_ratio: float = DETECTOR_CONFIG['nms_radius_ratio']
    nms_tau: int = DETECTOR_CONFIG['nms_tau']
    quality_floor: float = DETECTOR_CONFIG['quality_floor']
    stride: int = DETECTOR_CONFIG['stride']
    canonical_quality: bool = DETECTOR_CONFIG['canonical_quality']
    # 描述子
    vertex_mode: str = DESCRIPTOR_CONFIG['vertex_mode']
    theta_l: float = DESCRIPTOR_CONFIG['theta_l']
    grid: str = 'x'.join(map(str, DESCRIPTOR_CONFIG['grid']))
    holistic_grid: str = 'x'.join(map(str, DESCRIPTOR_CONFIG['holistic_grid']))
    holistic_tau: int = DESCRIPTOR_CONFIG['holistic_tau']
    holistic_stride: int = DESCRIPTOR_CONFIG['holistic_stride']
    # STK-D
    theta_g: float = STKD_CONFIG['theta_g']
    mk: Optional[int] = None
    min_keep: int = STKD_CONFIG['min_keep']
    normalization: str = STKD_CONFIG['normalization']
    # 码本与分类器
    k: int = CODEBOOK_CONFIG['k']
    seed: int = CODEBOOK_CONFIG['seed']
    max_iter: int = CODEBOOK_CONFIG['max_iter']
    c: float = CLASSIFIER_CONFIG['c']
    tol: float = CLASSIFIER_CONFIG['tol']
    max_passes: int = CLASSIFIER_CONFIG['max_passes']
    keep_fraction: float = CLASSIFIER_CONFIG['keep_fraction']
    fscore_threshold: Optional[float] = CLASSIFIER_CONFIG['fscore_threshold']

    def __post_init__(self):
        if self.mode not in SETTINGS:
            raise ValueError(f"未知的设置: {self.mode}，可选 {SETTINGS}")
        CellGrid.parse(self.grid)
        CellGrid.parse(self.holistic_grid)

    @classmethod
    def from_config(cls, **overrides) -> 'PipelineParams':
        return cls(**{k: v for k, v in overrides.items() if v is not None})

    @classmethod
    def from_dict(cls, data: Dict) -> 'PipelineParams':
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def to_dict(self) -> Dict:
        return asdict(self)

    def replace(self, **changes) -> 'PipelineParams':
        return PipelineParams.from_dict({**self.to_dict(), **changes})

    @property
    def m_k(self) -> int:
        """m_k = ceil(0.05 * n_k)"""
        if self.mk is not None:
            return int(self.mk)
        return max(1, math.ceil(STKD_CONFIG['mk_ratio'] * self.nk))

    @property
    def parts(self) -> Set[str]:
        return SETTING_PARTS[self.mode]

    def scale_params(self) -> ScaleParams:
        return ScaleParams.from_config(
            sigma=self.sigma, tau_max=self.tau_max, spatial_mode=self.spatial_mode,
            constant_radius=self.constant_radius, temporal_mode=self.temporal_mode,
            constant_tau=self.constant_tau,
        )

    def detector_params(self, r: float) -> DetectorParams:
        return DetectorParams(
            r=r, theta_stk=self.theta_stk, nms_radius=self.nms_radius_ratio * r,
            nms_tau=self.nms_tau, nk=self.nk, quality_floor=self.quality_floor,
            stride=self.stride, canonical_quality=self.canonical_quality,
        )

    def cell_grid(self) -> CellGrid:
        return CellGrid.parse(self.grid)

    def holistic_cell_grid(self) -> CellGrid:
        return CellGrid.parse(self.holistic_grid)

    def directions(self) -> DirectionSet:
        return dodecahedron(self.vertex_mode)


@dataclass(eq=False)
class SequenceFeatures:
    """一段序列的中间特征"""
    sample_id: str
    label: Optional[str] = None
    subject: Optional[int] = None
    view: Optional[int] = None
    r: float = 0.0
    tau_m: int = 0
    stks: List[StkRecord] = field(default_factory=list)
    local: Optional[np.ndarray] = None
    stkd: Optional[StkdDescriptor] = None
    holistic: Optional[np.ndarray] = None
    stkd_error: Optional[str] = None
    stats: Optional[DetectionStats] = None


@dataclass(eq=False)
class ActionDescriptor:
    """
    序列级描述子

    bow与stkd均已L1归一化，provenance记录样本来源与码本训练视角。
    """
    mode: str
    bow: Optional[np.ndarray] = None
    stkd: Optional[np.ndarray] = None
    holistic: Optional[np.ndarray] = None
    provenance: Dict = field(default_factory=dict)

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.bow, self.stkd])

    @property
    def vector(self) -> np.ndarray:
        if self.mode == 'combined':
            return self.combined
        if self.mode == 'local':
            return self.bow
        if self.mode == 'stkd':
            return self.stkd
        return self.holistic


@dataclass(eq=False)
class ActionModel:
    """训练好的识别模型：参数 + 码本 + 分类器"""
    params: PipelineParams
    classifier: KernelModel
    codebook: Optional[Codebook] = None
    train_views: List[int] = field(default_factory=list)


def l1_normalize(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    total = h.sum()
    return h / total if total > 0 else h


def extract_features(seq: PointCloudSequence, params: PipelineParams, sample_id: str = '',
                     label: Optional[str] = None, subject: Optional[int] = None,
                     view: Optional[int] = None, parts: Optional[Set[str]] = None,
                     monitor=None) -> SequenceFeatures:
    """
    检测STK并计算所需的中间特征

    Args:
        seq: 点云序列
        params: 流程参数
        parts: 需要的特征 {'local', 'stkd', 'holistic'}，默认由params.mode决定
        monitor: RunMonitor，传入时记录检测统计

    Returns:
        SequenceFeatures；STK数量不足时stkd为None并记录原因
    """
    parts = params.parts if parts is None else set(parts)
    scale = params.scale_params()
    r = spatial_scale(seq, scale)
    tau_m = scale.resolve_tau_max(seq.n_f)
    dirs = params.directions()
    features = SequenceFeatures(sample_id, label, subject, view, r, tau_m)

    if parts & {'local', 'stkd'}:
        stats = DetectionStats()
        features.stks = detect(seq, params.detector_params(r), scale_params=scale, dirs=dirs, stats=stats)
        features.stats = stats
        if monitor is not None:
            monitor.log_detection(sample_id, stats, r, tau_m)

    if 'local' in parts:
        features.local = describe_stks(features.stks, seq, params.cell_grid(), params.theta_l, dirs, r)

    if 'stkd' in parts:
        try:
            features.stkd = stkd(features.stks, params.theta_g, params.m_k, params.min_keep,
                                 params.normalization)
            if monitor is not None:
                monitor.log_stkd(sample_id, features.stkd.iterations, features.stkd.retained,
                                 features.stkd.constraints_met)
        except TooFewKeypoints as e:
            features.stkd_error = str(e)
            if monitor is not None:
                monitor.log_warning(f"{sample_id}: {e}")

    if 'holistic' in parts:
        features.holistic = holistic_hopc(seq, params.holistic_cell_grid(), params.holistic_tau, dirs, r,
                                          params.holistic_stride)
    return features


def features_from_descriptors(desc: DescriptorFile, label: Optional[str] = None) -> SequenceFeatures:
    """描述子文件 -> SequenceFeatures（label优先取参数，其次取文件头）"""
    meta = desc.meta
    features = SequenceFeatures(
        sample_id=str(meta.get('sample', '')),
        label=label if label is not None else meta.get('label'),
        subject=meta.get('subject'),
        view=meta.get('view'),
        r=float(meta.get('r', 0.0)),
        tau_m=int(meta.get('tau_m', 0)),
        local=desc.local,
        holistic=desc.holistic,
        stkd_error=meta.get('stkd_error'),
    )
    if desc.stkd is not None:
        features.stkd = StkdDescriptor(desc.stkd, int(meta.get('stkd_retained', 0)),
                                       int(meta.get('stkd_iterations', 0)), np.eye(3),
                                       bool(meta.get('stkd_constraints_met', True)))
    return features


def action_descriptor(source: Union[PointCloudSequence, SequenceFeatures], codebook: Optional[Codebook],
                      params: PipelineParams, provenance: Optional[Dict] = None) -> ActionDescriptor:
    """
    序列 -> 动作描述子

    Raises:
        TooFewKeypoints: 需要STK-D但STK数量不足
    """
    features = source if isinstance(source, SequenceFeatures) else extract_features(source, params)
    descriptor = ActionDescriptor(params.mode, provenance=dict(provenance or {}))
    descriptor.provenance.setdefault('sample', features.sample_id)
    descriptor.provenance.setdefault('view', features.view)
    if codebook is not None:
        descriptor.provenance['codebook_views'] = list(codebook.views)

    if 'local' in params.parts:
        if codebook is None:
            raise ValueError(f"{params.mode} 设置需要码本")
        descriptor.bow = l1_normalize(bow_histogram(features.local, codebook))
    if 'stkd' in params.parts:
        if features.stkd is None:
            raise TooFewKeypoints(features.stkd_error or f"{features.sample_id}: 没有STK-D")
        descriptor.stkd = l1_normalize(features.stkd.histogram)
    if 'holistic' in params.parts:
        descriptor.holistic = features.holistic
    return descriptor


def train_codebook(features: Sequence[SequenceFeatures], params: PipelineParams,
                   test_views: Optional[Sequence[int]] = None) -> Codebook:
    """
    在训练样本的Local HOPC上聚类

    Raises:
        ValueError: 训练样本包含测试视角
    """
    views = sorted({f.view for f in features if f.view is not None})
    if test_views is not None and set(views) & set(test_views):
        raise ValueError(f"码本训练数据包含测试视角: {sorted(set(views) & set(test_views))}")
    local = [f.local for f in features if f.local is not None and len(f.local)]
    if not local:
        raise TooFewKeypoints("没有可用于聚类的Local HOPC描述子")
    codebook = kmeans(np.vstack(local), params.k, params.seed, params.max_iter)
    codebook.views = views
    return codebook


def mine_codewords(codebook: Codebook, features: Sequence[SequenceFeatures], labels: Sequence[str],
                   params: PipelineParams, monitor=None) -> Codebook:
    """按F-score筛选码字，写入codebook.keep_mask"""
    histograms = np.array([l1_normalize(bow_histogram(f.local, codebook, use_mask=False)) for f in features])
    try:
        scores = fscore_matrix(histograms, labels)
    except DegenerateClass as e:
        if monitor is not None:
            monitor.log_warning(f"跳过F-score筛选: {e}")
        codebook.keep_mask = np.ones(codebook.k, dtype=bool)
        return codebook
    codebook.keep_mask = select_features(scores, params.keep_fraction, params.fscore_threshold)
    return codebook


def fit_model(features: Sequence[SequenceFeatures], params: PipelineParams,
              codebook: Optional[Codebook] = None, test_views: Optional[Sequence[int]] = None,
              monitor=None) -> ActionModel:
    """
    训练识别模型

    Args:
        features: 训练样本特征（需带label）
        params: 流程参数
        codebook: 已有码本，None 时在训练样本上聚类
        test_views: 测试视角，训练数据中出现则报错
        monitor: RunMonitor

    Returns:
        ActionModel
    """
    usable = [f for f in features if not ('stkd' in params.parts and f.stkd is None)]
    if monitor is not None and len(usable) < len(features):
        monitor.log_warning(f"{len(features) - len(usable)} 个训练样本STK不足，已跳过")
    labels = [f.label for f in usable]

    if 'local' in params.parts:
        if codebook is None:
            codebook = train_codebook(usable, params, test_views)
            codebook = mine_codewords(codebook, usable, labels, params, monitor)
        elif test_views is not None and set(codebook.views) & set(test_views):
            raise ValueError("码本训练数据包含测试视角")

    X = np.array([action_descriptor(f, codebook, params).vector for f in usable])
    classifier = train(X, labels, params.c, params.tol, params.max_passes)
    views = sorted({f.view for f in usable if f.view is not None})
    return ActionModel(params, classifier, codebook if 'local' in params.parts else None, views)


def predict_features(model: ActionModel, features: SequenceFeatures) -> Tuple[str, Dict[str, float]]:
    """已提取特征的序列 -> (类别, 各类别得分)"""
    descriptor = action_descriptor(features, model.codebook, model.params)
    return predict_with_scores(model.classifier, descriptor.vector)


def classify_sequence(model: ActionModel, seq: PointCloudSequence, sample_id: str = '',
                      monitor=None) -> Tuple[str, Dict[str, float]]:
    features = extract_features(seq, model.params, sample_id=sample_id, monitor=monitor)
    return predict_features(model, features)
