"""
几何核心模块 - 支撑体构建、协方差、3x3对称特征分解、特征向量符号消歧

单点接口（build_support / covariance / eigen3 / disambiguate）与批量接口
（WindowNeighbors / batch_bases）计算同一套公式，批量接口供检测器和描述子使用。
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import EmptySupport, GeometryError, NotSymmetric

SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9
SIGN_TOL = 1e-12             # 符号和相对于投影平方和的零判定阈值
ZERO_EIG_TOL = 1e-12
PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


class VolumeKind(Enum):
    """支撑体类型"""
    SPATIAL = 'spatial'
    SPATIO_TEMPORAL = 'spatio_temporal'


def as_point(p) -> np.ndarray:
    """转换为长度3的float64向量并检查有限性"""
    point = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(point)):
        raise GeometryError(f"坐标必须有限: {point}")
    return point


@dataclass(eq=False)
class PointCloudFrame:
    """单帧点云，index为时间戳编号（从1开始）"""
    index: int
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(eq=False)
class PointCloudSequence:
    """
    点云序列

    帧号t按位置计（1..n_f），时间窗口[t-tau, t+tau]在序列边界处截断。
    每帧的KD树按需构建并缓存。
    """
    frames: List[PointCloudFrame]
    _trees: Dict[int, Optional[cKDTree]] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        stamps = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise GeometryError("帧必须按时间戳严格递增")

    @classmethod
    def from_arrays(cls, arrays: Iterable[np.ndarray]) -> 'PointCloudSequence':
        return cls([PointCloudFrame(i + 1, a) for i, a in enumerate(arrays)])

    @property
    def n_f(self) -> int:
        return len(self.frames)

    @property
    def n_points(self) -> int:
        return sum(len(f) for f in self.frames)

    def frame(self, t: int) -> PointCloudFrame:
        if not 1 <= t <= self.n_f:
            raise GeometryError(f"帧号越界: {t} (n_f={self.n_f})")
        return self.frames[t - 1]

    def window(self, t: int, tau: int) -> range:
        return range(max(1, t - tau), min(self.n_f, t + tau) + 1)

    def tree(self, t: int) -> Optional[cKDTree]:
        if t not in self._trees:
            pts = self.frame(t).points
            self._trees[t] = cKDTree(pts) if len(pts) else None
        return self._trees[t]

    def transformed(self, rotation: np.ndarray, translation=None, scale: float = 1.0) -> 'PointCloudSequence':
        """返回刚体（加均匀缩放）变换后的新序列，点顺序不变"""
        rotation = np.asarray(rotation, dtype=np.float64)
        offset = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        return PointCloudSequence([
            PointCloudFrame(f.index, scale * f.points @ rotation.T + offset) for f in self.frames
        ])

    def equals(self, other: 'PointCloudSequence') -> bool:
        if self.n_f != other.n_f:
            return False
        return all(a.index == b.index and np.array_equal(a.points, b.points)
                   for a, b in zip(self.frames, other.frames))


@dataclass(eq=False)
class SupportVolume:
    """以center为球心、半径radius的（时空）支撑体"""
    center: np.ndarray
    members: np.ndarray
    kind: VolumeKind
    radius: float
    tau: int
    t: int
    frame_ids: np.ndarray
    point_ids: np.ndarray

    @property
    def n_p(self) -> int:
        return len(self.members)

    @property
    def is_empty(self) -> bool:
        return self.n_p == 0


@dataclass(eq=False)
class EigenBasis:
    """
    消歧后的特征基

    eigenvalues降序，eigenvectors按列排列（第j列对应第j个特征值），
    degenerate[j]为True表示第j个向量的符号和为0、沿用了输入符号。
    """
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mean: np.ndarray
    degenerate: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=bool))

    def is_orthonormal(self, tol: float = 1e-9) -> bool:
        V = self.eigenvectors
        return bool(np.abs(V.T @ V - np.eye(3)).max() <= tol)

    def is_right_handed(self, tol: float = 1e-9) -> bool:
        V = self.eigenvectors
        return bool(np.abs(np.cross(V[:, 0], V[:, 1]) - V[:, 2]).max() <= tol)

    @property
    def ambiguous(self) -> bool:
        return bool(self.degenerate.any())


# ==================== 单点接口 ====================

def build_support(seq: PointCloudSequence, p, t: int, r: float, tau: int,
                  kind: VolumeKind = VolumeKind.SPATIO_TEMPORAL) -> SupportVolume:
    """
    构建支撑体

    Args:
        seq: 点云序列
        p: 球心
        t: 帧号（1..n_f）
        r: 半径
        tau: 时间半窗口（空间支撑体忽略）
        kind: 支撑体类型

    Returns:
        成员为所选帧内所有满足 ||q-p|| <= r 的点，重复点保留
    """
    if r <= 0:
        raise GeometryError(f"半径必须为正: {r}")
    if kind is VolumeKind.SPATIAL:
        tau = 0
    elif tau < 0:
        raise GeometryError(f"tau不能为负: {tau}")
    center = as_point(p)
    seq.frame(t)

    members, frame_ids, point_ids = [], [], []
    for f in seq.window(t, tau):
        tree = seq.tree(f)
        if tree is None:
            continue
        idx = np.asarray(tree.query_ball_point(center, r, return_sorted=True), dtype=np.int64)
        members.append(seq.frame(f).points[idx])
        frame_ids.append(np.full(len(idx), f, dtype=np.int64))
        point_ids.append(idx)

    if members:
        stacked = np.concatenate(members)
        fids, pids = np.concatenate(frame_ids), np.concatenate(point_ids)
    else:
        stacked = np.empty((0, 3))
        fids = pids = np.empty(0, dtype=np.int64)
    return SupportVolume(center, stacked, kind, float(r), int(tau), int(t), fids, pids)


def covariance(vol: SupportVolume) -> Tuple[np.ndarray, np.ndarray]:
    """均值与 1/n_p 归一化的协方差矩阵"""
    if vol.is_empty:
        raise EmptySupport(f"帧{vol.t}处的支撑体为空")
    mu = vol.members.mean(axis=0)
    d = vol.members - mu
    C = d.T @ d / vol.n_p
    return mu, 0.5 * (C + C.T)


def eigen3(C) -> Tuple[np.ndarray, np.ndarray]:
    """
    3x3对称半正定矩阵的特征分解

    Returns:
        (降序特征值, 按列排列的特征向量)
    """
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (3, 3) or not np.all(np.isfinite(C)):
        raise GeometryError(f"需要有限的3x3矩阵: shape={C.shape}")
    scale = max(1.0, float(np.linalg.norm(C)))
    if np.abs(C - C.T).max() > SYMMETRY_TOL * scale:
        raise NotSymmetric("协方差矩阵不对称")
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    w, V = w[::-1], V[:, ::-1]
    if w[-1] < -PSD_TOL * scale:
        raise GeometryError(f"矩阵不是半正定: 最小特征值 {w[-1]:.3e}")
    return np.maximum(w, 0.0), np.ascontiguousarray(V)


def sign_scores(offsets: np.ndarray, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """sum sign(o·v_j)(o·v_j)^2 以及 sum (o·v_j)^2"""
    proj = offsets @ V
    return (np.sign(proj) * proj ** 2).sum(axis=0), (proj ** 2).sum(axis=0)


def fix_signs(V: np.ndarray, score: np.ndarray, total: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """按符号和翻转特征向量，再修正为右手系"""
    V = V.copy()
    score = score.copy()
    degenerate = np.abs(score) <= SIGN_TOL * total
    flip = (score < 0) & ~degenerate
    V[:, flip] *= -1
    score[flip] *= -1
    if np.dot(np.cross(V[:, 0], V[:, 1]), V[:, 2]) < 0:
        j = int(np.argmin(np.abs(score)))
        V[:, j] *= -1
    return V, degenerate


def disambiguate(basis: Tuple[np.ndarray, np.ndarray], vol: SupportVolume,
                 mean: Optional[np.ndarray] = None) -> EigenBasis:
    """
    特征向量符号消歧

    v_j <- v_j * sign(sum sign(o·v_j)(o·v_j)^2)，o = q - p。
    若 v1 x v2 != v3，翻转符号和绝对值最小的向量。符号和为0时保留输入符号并记录。
    """
    if vol.is_empty:
        raise EmptySupport(f"帧{vol.t}处的支撑体为空")
    eigenvalues, V = basis
    score, total = sign_scores(vol.members - vol.center, np.asarray(V, dtype=np.float64))
    V_fixed, degenerate = fix_signs(np.asarray(V, dtype=np.float64), score, total)
    if mean is None:
        mean = vol.members.mean(axis=0)
    return EigenBasis(np.asarray(eigenvalues, dtype=np.float64), V_fixed, mean, degenerate)


def eigen_basis(vol: SupportVolume) -> EigenBasis:
    """协方差 -> 特征分解 -> 符号消歧"""
    mu, C = covariance(vol)
    return disambiguate(eigen3(C), vol, mean=mu)


# ==================== 批量接口 ====================

class WindowNeighbors:
    """
    一组中心点在时间窗口[t-tau_max, t+tau_max]内逐帧的近邻索引

    每帧只查询一次KD树，任意 tau <= tau_max 的支撑体由已查询的帧合并得到。
    """

    def __init__(self, seq: PointCloudSequence, centers: np.ndarray, t: int, r: float, tau_max: int):
        if r <= 0:
            raise GeometryError(f"半径必须为正: {r}")
        self.seq = seq
        self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        self.t = t
        self.r = float(r)
        self.tau_max = int(tau_max)
        self._per_frame: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._moments = None
        n = len(self.centers)
        for f in seq.window(t, self.tau_max):
            tree = seq.tree(f)
            if tree is None or n == 0:
                continue
            lists = tree.query_ball_point(self.centers, self.r, return_sorted=True)
            counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=n)
            if counts.sum() == 0:
                continue
            point_ids = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
            self._per_frame[f] = (np.repeat(np.arange(n), counts), point_ids)

    def frame_moments(self) -> Tuple[List[int], np.ndarray, np.ndarray, np.ndarray]:
        """
        逐帧近邻的个数、一阶矩与二阶矩（相对中心点的偏移），首次调用时计算

        Returns:
            (帧号列表, counts (k, n), first (k, n, 3), second (k, n, 3, 3))
        """
        if self._moments is None:
            n = len(self.centers)
            frames = list(self.seq.window(self.t, self.tau_max))
            count = np.zeros((len(frames), n))
            first = np.zeros((len(frames), n, 3))
            second = np.zeros((len(frames), n, 3, 3))
            for i, f in enumerate(frames):
                if f not in self._per_frame:
                    continue
                seg, pid = self._per_frame[f]
                d = self.seq.frame(f).points[pid] - self.centers[seg]
                count[i] = np.bincount(seg, minlength=n)
                for a in range(3):
                    first[i, :, a] = np.bincount(seg, weights=d[:, a], minlength=n)
                for a, b in PAIRS:
                    entry = np.bincount(seg, weights=d[:, a] * d[:, b], minlength=n)
                    second[i, :, a, b] = entry
                    second[i, :, b, a] = entry
            self._moments = (frames, count, first, second)
        return self._moments

    def window_covariance(self, tau: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        [t-tau, t+tau] 合并支撑体的协方差，由逐帧矩累加得到，不再合并成员

        Returns:
            (counts (n,), C (n, 3, 3))，空支撑体的协方差为零矩阵
        """
        if tau > self.tau_max:
            raise GeometryError(f"tau={tau} 超过预查询窗口 {self.tau_max}")
        frames, count, first, second = self.frame_moments()
        rows = [i for i, f in enumerate(frames) if abs(f - self.t) <= tau]
        n_p = count[rows].sum(axis=0)
        safe = np.maximum(n_p, 1.0)
        mean = first[rows].sum(axis=0) / safe[:, None]
        C = second[rows].sum(axis=0) / safe[:, None, None] - mean[:, :, None] * mean[:, None, :]
        C = 0.5 * (C + np.transpose(C, (0, 2, 1)))
        C[n_p == 0] = 0.0
        return n_p.astype(np.int64), C

    def gather(self, tau: int, select: Optional[np.ndarray] = None):
        """
        合并窗口[t-tau, t+tau]内的近邻

        Args:
            tau: 时间半窗口
            select: 只取部分中心点（索引数组）

        Returns:
            (members, seg_ids, frame_ids, point_ids, counts)，成员按中心点、帧、点序排列
        """
        if tau > self.tau_max:
            raise GeometryError(f"tau={tau} 超过预查询窗口 {self.tau_max}")
        n = len(self.centers)
        remap = None
        if select is not None:
            select = np.asarray(select, dtype=np.int64)
            remap = np.full(n, -1, dtype=np.int64)
            remap[select] = np.arange(len(select))
            n = len(select)

        segs, frames, pids, coords = [], [], [], []
        for f in self.seq.window(self.t, tau):
            if f not in self._per_frame:
                continue
            seg, pid = self._per_frame[f]
            if remap is not None:
                seg = remap[seg]
                keep = seg >= 0
                seg, pid = seg[keep], pid[keep]
            segs.append(seg)
            frames.append(np.full(len(seg), f, dtype=np.int64))
            pids.append(pid)
            coords.append(self.seq.frame(f).points[pid])

        if not segs:
            empty = np.empty(0, dtype=np.int64)
            return np.empty((0, 3)), empty, empty, empty, np.zeros(n, dtype=np.int64)
        seg = np.concatenate(segs)
        order = np.argsort(seg, kind='stable')
        counts = np.bincount(seg, minlength=n)
        return (np.concatenate(coords)[order], seg[order], np.concatenate(frames)[order],
                np.concatenate(pids)[order], counts)


@dataclass(eq=False)
class BasisBatch:
    """批量特征基，第i行对应第i个中心点"""
    eigenvalues: np.ndarray      # (n, 3)
    eigenvectors: np.ndarray     # (n, 3, 3)
    means: np.ndarray            # (n, 3)
    counts: np.ndarray           # (n,)
    degenerate: np.ndarray       # (n, 3)

    def __len__(self) -> int:
        return len(self.counts)

    def basis(self, i: int) -> EigenBasis:
        return EigenBasis(self.eigenvalues[i].copy(), self.eigenvectors[i].copy(),
                          self.means[i].copy(), self.degenerate[i].copy())


def batch_covariance(members: np.ndarray, seg_ids: np.ndarray, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """分段协方差（两遍法），空段返回零矩阵"""
    n = len(counts)
    safe = np.maximum(counts, 1).astype(np.float64)
    means = np.stack([np.bincount(seg_ids, weights=members[:, k], minlength=n) for k in range(3)], axis=1)
    means /= safe[:, None]
    centered = members - means[seg_ids]
    C = np.zeros((n, 3, 3))
    for a, b in PAIRS:
        entry = np.bincount(seg_ids, weights=centered[:, a] * centered[:, b], minlength=n) / safe
        C[:, a, b] = entry
        C[:, b, a] = entry
    return means, C


def batch_eigen(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """批量特征分解，特征值降序并截断负值"""
    w, V = np.linalg.eigh(C)
    return np.maximum(w[:, ::-1], 0.0), np.ascontiguousarray(V[:, :, ::-1])


def batch_disambiguate(V: np.ndarray, members: np.ndarray, seg_ids: np.ndarray,
                       centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """批量符号消歧，规则与 disambiguate 相同"""
    n = len(V)
    V = V.copy()
    offsets = members - centers[seg_ids]
    score = np.zeros((n, 3))
    total = np.zeros((n, 3))
    for j in range(3):
        proj = np.einsum('mi,mi->m', offsets, V[seg_ids, :, j])
        score[:, j] = np.bincount(seg_ids, weights=np.sign(proj) * proj ** 2, minlength=n)
        total[:, j] = np.bincount(seg_ids, weights=proj ** 2, minlength=n)

    degenerate = np.abs(score) <= SIGN_TOL * total
    signs = np.where((score < 0) & ~degenerate, -1.0, 1.0)
    V *= signs[:, None, :]
    score *= signs

    handed = np.einsum('ni,ni->n', np.cross(V[:, :, 0], V[:, :, 1]), V[:, :, 2])
    left = np.flatnonzero(handed < 0)
    if len(left):
        weakest = np.argmin(np.abs(score[left]), axis=1)
        V[left, :, weakest] *= -1
    return V, degenerate


def batch_bases(members: np.ndarray, seg_ids: np.ndarray, counts: np.ndarray,
                centers: np.ndarray) -> BasisBatch:
    """分段成员 -> 批量消歧特征基"""
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    means, C = batch_covariance(members, seg_ids, counts)
    lam, V = batch_eigen(C)
    V, degenerate = batch_disambiguate(V, members, seg_ids, centers)
    return BasisBatch(lam, V, means, counts, degenerate)


def clean_eigenvalues(eigenvalues) -> np.ndarray:
    """相对最大特征值小于 ZERO_EIG_TOL 的特征值视为0"""
    lam = np.array(eigenvalues, dtype=np.float64, ndmin=2)
    lam[lam <= ZERO_EIG_TOL * lam[:, :1]] = 0.0
    return lam


def eigenratios(eigenvalues) -> Tuple[np.ndarray, np.ndarray]:
    """
    特征值比 delta12 = l1/l2, delta23 = l2/l3

    约定 x/0 = +inf (x > 0)，0/0 = 1。
    """
    lam = clean_eigenvalues(eigenvalues)

    def ratio(num, den):
        with np.errstate(divide='ignore', invalid='ignore'):
            out = num / den
        out = np.where(den > 0, out, np.where(num > 0, np.inf, 1.0))
        return out

    return ratio(lam[:, 0], lam[:, 1]), ratio(lam[:, 1], lam[:, 2])


def rotation_matrix(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """绕y（偏航）、x（俯仰）、z（横滚）轴的旋转，角度为弧度"""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    Rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return Rz @ Rx @ Ry


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """均匀随机旋转（QR分解法）"""
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q
