"""
STK检测模块 - 时空关键点检测

流程：逐帧候选点 -> 自动时间尺度（flag=0丢弃）-> 空间/时空特征基的特征值比筛选
-> 质量因子eta -> 非极大值抑制，最多保留n_k个。
"""
import time
from dataclasses import dataclass, field, fields
from typing import List, Optional

import numpy as np

from config import DETECTOR_CONFIG
from .geometry import (
    EigenBasis, PointCloudSequence, WindowNeighbors,
    batch_bases, eigenratios
)
from .hopc import DirectionSet, dodecahedron, hopc_from_basis
from .scale import ScaleParams, ScaleSelector, make_selector, selector_window


@dataclass(eq=False)
class StkRecord:
    """时空关键点"""
    position: np.ndarray
    t: int
    tau_star: int
    spatial_basis: EigenBasis
    st_basis: EigenBasis
    quality: float
    radius: float = 0.0
    order: int = 0               # 候选点插入顺序，NMS稳定排序用
    point_index: int = -1

    @property
    def eta(self) -> float:
        return self.quality


@dataclass
class DetectorParams:
    """检测参数，nms_radius默认0.5r"""
    r: float
    theta_stk: float = 1.3
    nms_radius: Optional[float] = None
    nms_tau: int = 2
    nk: int = 400
    quality_floor: float = 1e-6
    stride: int = 1
    canonical_quality: bool = True

    def __post_init__(self):
        if self.nms_radius is None:
            self.nms_radius = DETECTOR_CONFIG['nms_radius_ratio'] * self.r
        self.validate()

    @classmethod
    def from_config(cls, r: float, **overrides) -> 'DetectorParams':
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in DETECTOR_CONFIG.items() if k in names}
        values['nms_radius'] = DETECTOR_CONFIG['nms_radius_ratio'] * r
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(r=r, **values)

    def validate(self):
        if self.r <= 0:
            raise ValueError(f"半径必须为正: {self.r}")
        if self.theta_stk <= 1:
            raise ValueError(f"theta_stk必须大于1: {self.theta_stk}")
        if not 0 < self.nms_radius < self.r:
            raise ValueError(f"需要 0 < r' < r: r'={self.nms_radius}, r={self.r}")
        if self.nms_tau < 0 or self.nk < 1 or self.stride < 1:
            raise ValueError("nms_tau >= 0, nk >= 1, stride >= 1")
        if self.quality_floor < 0:
            raise ValueError(f"quality_floor不能为负: {self.quality_floor}")


def eigenratio_ok(l1: float, l2: float, l3: float, theta: float) -> bool:
    """l1/l2 > theta 且 l2/l3 > theta"""
    d12, d23 = eigenratios([l1, l2, l3])
    return bool(d12[0] > theta and d23[0] > theta)


def eigenratio_mask(eigenvalues: np.ndarray, theta: float) -> np.ndarray:
    d12, d23 = eigenratios(eigenvalues)
    return (d12 > theta) & (d23 > theta)


def quality_many(h_s: np.ndarray, h_st: np.ndarray) -> np.ndarray:
    """批量质量因子，输入 (n, 60)"""
    a = np.atleast_2d(h_s)
    b = np.atleast_2d(h_st)
    den = a + b
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(den > 0, (a - b) ** 2 / den, 0.0)
    return 0.5 * terms.sum(axis=1)


def quality(h_s: np.ndarray, h_st: np.ndarray) -> float:
    """
    质量因子 eta = 1/2 * sum (hS - hST)^2 / (hS + hST)

    分母为0的项记为0，静止的邻域 eta = 0。
    """
    return float(quality_many(h_s, h_st)[0])


def nms(candidates: List[StkRecord], nms_radius: float, nms_tau: int, nk: int) -> List[StkRecord]:
    """
    非极大值抑制

    按eta降序（相同时按帧号、插入顺序）贪心接受；已接受的STK中存在
    空间距离 <= r' 且时间距离 <= tau' 的点时拒绝。
    """
    ranked = sorted(candidates, key=lambda s: (-s.quality, s.t, s.order))
    kept: List[StkRecord] = []
    positions = np.empty((0, 3))
    frames = np.empty(0, dtype=np.int64)
    for stk in ranked:
        if len(kept) >= nk:
            break
        if len(kept):
            close = np.linalg.norm(positions - stk.position, axis=1) <= nms_radius
            close &= np.abs(frames - stk.t) <= nms_tau
            if close.any():
                continue
        kept.append(stk)
        positions = np.vstack([positions, stk.position])
        frames = np.append(frames, stk.t)
    return kept


@dataclass
class DetectionStats:
    """检测过程统计，写入运行日志"""
    candidates: int = 0
    scale_rejected: int = 0
    ratio_rejected: int = 0
    quality_rejected: int = 0
    survivors: int = 0
    kept: int = 0
    frame_seconds: List[float] = field(default_factory=list)


def _frame_candidates(seq: PointCloudSequence, t: int, params: DetectorParams, selector: ScaleSelector,
                      tau_m: int, dirs: DirectionSet, start_order: int,
                      stats: DetectionStats) -> List[StkRecord]:
    points = seq.frame(t).points
    index = np.arange(0, len(points), params.stride)
    if len(index) == 0:
        return []
    centers = points[index]
    stats.candidates += len(index)

    neighbors = WindowNeighbors(seq, centers, t, params.r, selector_window(selector, tau_m))
    tau_star, flag = selector(neighbors, tau_m)
    alive = np.flatnonzero(flag == 1)
    stats.scale_rejected += len(index) - len(alive)
    if len(alive) == 0:
        return []

    members, seg, _, _, counts = neighbors.gather(0, select=alive)
    spatial = batch_bases(members, seg, counts, centers[alive])

    n = len(alive)
    st_lam = np.zeros((n, 3))
    st_vec = np.zeros((n, 3, 3))
    st_mean = np.zeros((n, 3))
    st_counts = np.zeros(n, dtype=np.int64)
    st_degenerate = np.zeros((n, 3), dtype=bool)
    for tau in np.unique(tau_star[alive]):
        local = np.flatnonzero(tau_star[alive] == tau)
        members, seg, _, _, counts = neighbors.gather(int(tau), select=alive[local])
        batch = batch_bases(members, seg, counts, centers[alive[local]])
        st_lam[local] = batch.eigenvalues
        st_vec[local] = batch.eigenvectors
        st_mean[local] = batch.means
        st_counts[local] = batch.counts
        st_degenerate[local] = batch.degenerate

    ok = (spatial.counts > 0) & (st_counts > 0)
    ok &= eigenratio_mask(spatial.eigenvalues, params.theta_stk)
    ok &= eigenratio_mask(st_lam, params.theta_stk)
    stats.ratio_rejected += int((~ok).sum())
    sel = np.flatnonzero(ok)
    if len(sel) == 0:
        return []

    # 在空间特征基下比较两个描述子，eta对刚体变换不变
    rotation = np.transpose(spatial.eigenvectors[sel], (0, 2, 1)) if params.canonical_quality else None
    h_s = hopc_from_basis(spatial.eigenvalues[sel], spatial.eigenvectors[sel], dirs, rotation)
    h_st = hopc_from_basis(st_lam[sel], st_vec[sel], dirs, rotation)
    eta = quality_many(h_s, h_st)

    records = []
    for j, i in enumerate(sel):
        if eta[j] <= params.quality_floor:
            stats.quality_rejected += 1
            continue
        records.append(StkRecord(
            position=centers[alive[i]].copy(),
            t=t,
            tau_star=int(tau_star[alive[i]]),
            spatial_basis=spatial.basis(i),
            st_basis=EigenBasis(st_lam[i].copy(), st_vec[i].copy(), st_mean[i].copy(),
                                st_degenerate[i].copy()),
            quality=float(eta[j]),
            radius=params.r,
            order=start_order + len(records),
            point_index=int(index[alive[i]]),
        ))
    return records


def detect(seq: PointCloudSequence, params: DetectorParams,
           scale_select: Optional[ScaleSelector] = None,
           scale_params: Optional[ScaleParams] = None,
           dirs: Optional[DirectionSet] = None,
           stats: Optional[DetectionStats] = None) -> List[StkRecord]:
    """
    检测时空关键点

    Args:
        seq: 点云序列
        params: 检测参数
        scale_select: 时间尺度选择器，默认按scale_params构造
        scale_params: 尺度参数（提供tau_m）
        dirs: HOPC方向集合
        stats: 传入时填充统计信息

    Returns:
        按eta降序排列的STK列表
    """
    scale_params = scale_params or ScaleParams.from_config()
    dirs = dirs or dodecahedron()
    stats = stats if stats is not None else DetectionStats()
    tau_m = scale_params.resolve_tau_max(seq.n_f)
    selector = scale_select or make_selector(scale_params)

    candidates: List[StkRecord] = []
    for t in range(1, seq.n_f + 1):
        started = time.perf_counter()
        candidates += _frame_candidates(seq, t, params, selector, tau_m, dirs, len(candidates), stats)
        stats.frame_seconds.append(time.perf_counter() - started)

    stats.survivors = len(candidates)
    kept = nms(candidates, params.nms_radius, params.nms_tau, params.nk)
    stats.kept = len(kept)
    return kept
