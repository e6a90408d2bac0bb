"""
尺度选择模块 - 空间半径与逐点自动时间尺度

空间半径 r = sigma * h_s，h_s 为首个非空帧竖直方向的百分位跨度。
时间尺度对 tau = 1..tau_m 计算 A(tau) = l2/l1 + l3/l2，取最小值对应的最小tau。
"""
import math
from dataclasses import dataclass, fields
from typing import Callable, Optional, Tuple

import numpy as np

from config import SCALE_CONFIG
from .exceptions import BadSigma, EmptySequence, GeometryError
from .geometry import (
    PointCloudSequence, WindowNeighbors,
    batch_eigen, clean_eigenvalues
)

DEGENERATE_A = 2.0
MIN_POINTS = 4

# (neighbors, tau_m) -> (tau_star, flag)，两者均为长度n的int数组
ScaleSelector = Callable[[WindowNeighbors, int], Tuple[np.ndarray, np.ndarray]]


@dataclass
class ScaleParams:
    """尺度选择参数"""
    sigma: float = 0.2
    tau_max: Optional[int] = None        # None 表示 ceil(tau_max_ratio * n_f)
    tau_max_ratio: float = 0.2
    height_percentiles: Tuple[float, float] = (1.0, 99.0)
    vertical_axis: int = 1
    spatial_mode: str = 'height'
    constant_radius: Optional[float] = None
    temporal_mode: str = 'auto'
    constant_tau: int = 2
    tie_tolerance: float = 1e-12

    @classmethod
    def from_config(cls, **overrides) -> 'ScaleParams':
        names = {f.name for f in fields(cls)}
        values = {k: v for k, v in SCALE_CONFIG.items() if k in names}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def resolve_tau_max(self, n_f: int) -> int:
        """tau_m，默认 ceil(0.2 * n_f)，至少为1"""
        if self.tau_max is not None:
            if self.tau_max < 1:
                raise GeometryError(f"tau_m必须 >= 1: {self.tau_max}")
            return int(self.tau_max)
        return max(1, math.ceil(self.tau_max_ratio * n_f))


def subject_height(seq: PointCloudSequence, params: ScaleParams) -> float:
    """首个非空帧竖直坐标的百分位跨度"""
    for frame in seq.frames:
        if len(frame):
            lo, hi = np.percentile(frame.points[:, params.vertical_axis], params.height_percentiles)
            return float(hi - lo)
    raise EmptySequence("序列中所有帧都为空")


def spatial_scale(seq: PointCloudSequence, params: Optional[ScaleParams] = None) -> float:
    """
    空间尺度 r

    Args:
        seq: 点云序列
        params: 尺度参数，spatial_mode='constant' 时直接返回 constant_radius

    Returns:
        r > 0
    """
    params = params or ScaleParams.from_config()
    if params.spatial_mode == 'constant':
        if not params.constant_radius or params.constant_radius <= 0:
            raise GeometryError(f"常数半径必须为正: {params.constant_radius}")
        return float(params.constant_radius)
    if not 0 < params.sigma < 1:
        raise BadSigma(f"sigma必须在(0,1)之间: {params.sigma}")

    h_s = subject_height(seq, params)
    if h_s <= 0:
        raise GeometryError("首个非空帧在竖直方向没有跨度，无法确定半径")
    return params.sigma * h_s


def anisotropy(eigenvalues, counts=None) -> np.ndarray:
    """
    A = l2/l1 + l3/l2

    0/0 记为1；点数少于4或 l1 = 0 的退化支撑体记为2。
    """
    lam = clean_eigenvalues(eigenvalues)
    l1, l2, l3 = lam[:, 0], lam[:, 1], lam[:, 2]
    with np.errstate(divide='ignore', invalid='ignore'):
        a12 = np.where(l1 > 0, l2 / l1, 1.0)
        a23 = np.where(l2 > 0, l3 / l2, 1.0)
    A = a12 + a23
    degenerate = l1 <= 0
    if counts is not None:
        degenerate |= np.asarray(counts) < MIN_POINTS
    return np.where(degenerate, DEGENERATE_A, A)


def anisotropy_curve(neighbors: WindowNeighbors, tau_m: int) -> np.ndarray:
    """每个中心点在 tau = 1..tau_m 上的 A(tau)，形状 (n, tau_m)"""
    n = len(neighbors.centers)
    curve = np.empty((n, tau_m))
    for tau in range(1, tau_m + 1):
        counts, C = neighbors.window_covariance(tau)
        lam, _ = batch_eigen(C)
        curve[:, tau - 1] = anisotropy(lam, counts)
    return curve


def pick_tau(curve: np.ndarray, tie_tolerance: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """最小值容差内的最小tau；tau* = tau_m 时 flag = 0"""
    curve = np.atleast_2d(curve)
    best = curve.min(axis=1, keepdims=True)
    tau_star = np.argmax(curve <= best + tie_tolerance, axis=1) + 1
    flag = (tau_star != curve.shape[1]).astype(np.int64)
    return tau_star.astype(np.int64), flag


def auto_selector(tie_tolerance: float = 1e-12) -> ScaleSelector:
    """自动时间尺度选择"""
    def select(neighbors: WindowNeighbors, tau_m: int):
        return pick_tau(anisotropy_curve(neighbors, tau_m), tie_tolerance)
    return select


def constant_selector(tau: int) -> ScaleSelector:
    """常数时间尺度（对照实验），所有候选点都保留"""
    if tau < 0:
        raise GeometryError(f"tau不能为负: {tau}")

    def select(neighbors: WindowNeighbors, tau_m: int):
        n = len(neighbors.centers)
        return np.full(n, tau, dtype=np.int64), np.ones(n, dtype=np.int64)
    select.constant_tau = tau
    return select


def make_selector(params: ScaleParams) -> ScaleSelector:
    if params.temporal_mode == 'constant':
        return constant_selector(params.constant_tau)
    if params.temporal_mode != 'auto':
        raise ValueError(f"未知的temporal_mode: {params.temporal_mode}")
    return auto_selector(params.tie_tolerance)


def selector_window(selector: ScaleSelector, tau_m: int) -> int:
    """选择器需要预查询的时间窗口"""
    return max(tau_m, getattr(selector, 'constant_tau', 0))


def temporal_scale(seq: PointCloudSequence, p, t: int, r: float, tau_m: int,
                   tie_tolerance: float = 1e-12) -> Tuple[int, int]:
    """
    单点自动时间尺度

    Returns:
        (tau*, flag)
    """
    if tau_m < 1:
        raise GeometryError(f"tau_m必须 >= 1: {tau_m}")
    seq.frame(t)
    neighbors = WindowNeighbors(seq, np.asarray(p, dtype=np.float64).reshape(1, 3), t, r, tau_m)
    tau_star, flag = pick_tau(anisotropy_curve(neighbors, tau_m), tie_tolerance)
    return int(tau_star[0]), int(flag[0])


def temporal_scale_many(seq: PointCloudSequence, centers: np.ndarray, t: int, r: float,
                        tau_m: int, tie_tolerance: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """同一帧内多个中心点的时间尺度，每帧只查询一次KD树"""
    neighbors = WindowNeighbors(seq, centers, t, r, tau_m)
    return pick_tau(anisotropy_curve(neighbors, tau_m), tie_tolerance)
