"""
局部描述子模块 - Local HOPC 与 Holistic HOPC

Local HOPC：把STK的时空支撑体旋转到空间特征基下，按三种贡献规则累加每个点的
HOPC，划分 n_x * n_y * n_t 个单元，逐单元L2归一化后拼接。
Holistic HOPC：整段序列的包围盒网格，不做方向归一化，也不做贡献筛选。
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import DESCRIPTOR_CONFIG
from .detector import StkRecord
from .exceptions import GeometryError, InvalidBasis
from .geometry import (
    BasisBatch, EigenBasis, PointCloudSequence, SupportVolume, VolumeKind, WindowNeighbors,
    batch_bases, build_support, eigen_basis, eigenratios
)
from .hopc import HOPC_DIM, DirectionSet, dodecahedron, hopc_from_basis
from .scale import ScaleParams, spatial_scale

# LocalHopcDescriptor: 长度 gamma*60 的float64数组，每个60维单元块的L2范数为0或1
LocalHopcDescriptor = np.ndarray


@dataclass(frozen=True)
class CellGrid:
    """时空单元划分"""
    n_x: int = 2
    n_y: int = 2
    n_t: int = 3

    def __post_init__(self):
        if min(self.n_x, self.n_y, self.n_t) < 1:
            raise ValueError(f"单元数必须 >= 1: {self.n_x}x{self.n_y}x{self.n_t}")

    @classmethod
    def parse(cls, text: str) -> 'CellGrid':
        """解析 '2x2x3' 格式"""
        try:
            n_x, n_y, n_t = (int(v) for v in text.lower().split('x'))
        except ValueError:
            raise ValueError(f"网格格式应为 NXxNYxNT: {text!r}") from None
        return cls(n_x, n_y, n_t)

    @classmethod
    def from_tuple(cls, values: Sequence[int]) -> 'CellGrid':
        return cls(*[int(v) for v in values])

    @property
    def gamma(self) -> int:
        return self.n_x * self.n_y * self.n_t

    @property
    def dim(self) -> int:
        return self.gamma * HOPC_DIM

    def __str__(self) -> str:
        return f"{self.n_x}x{self.n_y}x{self.n_t}"

    def cells(self, x: np.ndarray, y: np.ndarray, t: np.ndarray,
              x_range: Tuple[float, float], y_range: Tuple[float, float],
              t_range: Tuple[float, float]) -> np.ndarray:
        """
        单元编号，x变化最快，其次y，最后t

        区间左闭右开，最后一个单元右端闭合，越界的点归入边界单元。
        """
        ix = bin_index(x, *x_range, self.n_x)
        iy = bin_index(y, *y_range, self.n_y)
        it = bin_index(t, *t_range, self.n_t)
        return (it * self.n_y + iy) * self.n_x + ix


def bin_index(values: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if hi <= lo:
        return np.zeros(len(values), dtype=np.int64)
    idx = np.floor((values - lo) / (hi - lo) * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def normalize_cells(acc: np.ndarray) -> np.ndarray:
    """逐单元L2归一化，空单元保持为0"""
    norms = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.where(norms > 0, acc / np.where(norms > 0, norms, 1.0), 0.0)


def orient_points(vol: SupportVolume, spatial_basis: EigenBasis) -> np.ndarray:
    """
    q' = V^T (q - mu)

    Args:
        vol: 支撑体
        spatial_basis: 正交右手特征基，第一主方向映射到X轴

    Returns:
        (n_p, 3) 局部坐标
    """
    if not (spatial_basis.is_orthonormal() and spatial_basis.is_right_handed()):
        raise InvalidBasis("特征基不是正交右手系")
    return (vol.members - spatial_basis.mean) @ spatial_basis.eigenvectors


def contribution_mask(eigenvalues: np.ndarray, theta_l: float) -> np.ndarray:
    """
    三段描述子的保留掩码 (n, 3)

    d12 > theta 且 d23 > theta -> [1,1,1]；只有 d23 > theta -> [0,0,1]；
    只有 d12 > theta -> [1,0,0]；其余 -> 0。
    """
    d12, d23 = eigenratios(eigenvalues)
    a, b = d12 > theta_l, d23 > theta_l
    mask = np.zeros((len(d12), 3), dtype=bool)
    mask[:, 0] = a
    mask[:, 1] = a & b
    mask[:, 2] = b
    return mask


def masked_hopc(eigenvalues: np.ndarray, eigenvectors: np.ndarray, dirs: DirectionSet,
                theta_l: float, rotation: Optional[np.ndarray] = None) -> np.ndarray:
    h = hopc_from_basis(eigenvalues, eigenvectors, dirs, rotation)
    mask = contribution_mask(eigenvalues, theta_l)
    return (h.reshape(len(h), 3, -1) * mask[:, :, None]).reshape(len(h), -1)


def point_contribution(nbhd: SupportVolume, theta_l: float, dirs: DirectionSet,
                       rotation: Optional[np.ndarray] = None) -> np.ndarray:
    """
    单个点的时空HOPC，按特征值比筛选三段

    Args:
        nbhd: 以该点为中心的时空支撑体
        theta_l: 特征值比阈值
        dirs: 方向集合
        rotation: 投影前作用于特征向量的旋转（局部坐标系）

    Returns:
        60维向量，空支撑体返回零向量
    """
    if nbhd.is_empty:
        return np.zeros(3 * dirs.m)
    basis = eigen_basis(nbhd)
    return masked_hopc(basis.eigenvalues[None], basis.eigenvectors[None], dirs, theta_l,
                       rotation)[0]


class PointBasisCache:
    """
    逐帧缓存 (帧, tau) 下点的时空特征基

    每帧的近邻按登记过的最大tau只查询一次，较小tau的支撑体由同一次查询合并得到。
    只为 reserve 登记过的点计算特征基，同一序列的多个STK共享。
    """

    def __init__(self, seq: PointCloudSequence, r: float):
        self.seq = seq
        self.r = float(r)
        self._wanted: Dict[int, np.ndarray] = {}
        self._tau_max: Dict[int, int] = {}
        self._neighbors: Dict[int, WindowNeighbors] = {}
        self._bases: Dict[Tuple[int, int], BasisBatch] = {}

    def reserve(self, frame_ids: np.ndarray, point_ids: np.ndarray, tau: int):
        """登记各帧需要特征基的点；已计算的帧若有新点或更大的tau则作废重算"""
        for f in np.unique(frame_ids):
            f = int(f)
            new = point_ids[frame_ids == f]
            ids = np.union1d(self._wanted.get(f, new), new)
            if f in self._neighbors and (len(ids) != len(self._wanted[f]) or tau > self._tau_max[f]):
                del self._neighbors[f]
                self._bases = {k: v for k, v in self._bases.items() if k[0] != f}
            self._wanted[f] = ids
            self._tau_max[f] = max(tau, self._tau_max.get(f, 0))

    def get(self, frame: int, tau: int, point_ids: np.ndarray) -> Tuple[BasisBatch, np.ndarray]:
        """
        Returns:
            (该帧已登记点的特征基, point_ids 对应的行号)
        """
        ids = self._wanted.get(frame)
        if ids is None or tau > self._tau_max[frame]:
            raise GeometryError(f"帧{frame}未登记 tau={tau} 的特征基")
        rows = np.searchsorted(ids, point_ids)
        if np.any(rows >= len(ids)) or not np.array_equal(ids[np.minimum(rows, len(ids) - 1)], point_ids):
            raise GeometryError(f"帧{frame}有未登记的点")
        key = (frame, tau)
        if key not in self._bases:
            if frame not in self._neighbors:
                centers = self.seq.frame(frame).points[ids]
                self._neighbors[frame] = WindowNeighbors(self.seq, centers, frame, self.r, self._tau_max[frame])
            neighbors = self._neighbors[frame]
            members, seg, _, _, counts = neighbors.gather(tau)
            self._bases[key] = batch_bases(members, seg, counts, neighbors.centers)
        return self._bases[key], rows

    def __len__(self) -> int:
        return len(self._bases)


def _st_support(stk: StkRecord, seq: PointCloudSequence, r: float) -> SupportVolume:
    return build_support(seq, stk.position, stk.t, r, int(stk.tau_star), VolumeKind.SPATIO_TEMPORAL)


def local_hopc(stk: StkRecord, seq: PointCloudSequence, grid: CellGrid, theta_l: float,
               dirs: DirectionSet, r: Optional[float] = None,
               cache: Optional[PointBasisCache] = None) -> LocalHopcDescriptor:
    """
    STK的视角不变描述子

    Args:
        stk: 关键点
        seq: 点云序列
        grid: 单元划分
        theta_l: 贡献规则阈值
        dirs: 方向集合
        r: 半径，默认用stk.radius
        cache: 点特征基缓存

    Returns:
        长度 gamma*60 的描述子
    """
    r = float(r or stk.radius)
    cache = cache or PointBasisCache(seq, r)
    vol = _st_support(stk, seq, r)
    cache.reserve(vol.frame_ids, vol.point_ids, int(stk.tau_star))
    return _accumulate(stk, vol, grid, theta_l, dirs, r, cache)


def _accumulate(stk: StkRecord, vol: SupportVolume, grid: CellGrid, theta_l: float,
                dirs: DirectionSet, r: float, cache: PointBasisCache) -> LocalHopcDescriptor:
    tau = int(stk.tau_star)
    acc = np.zeros((grid.gamma, 3 * dirs.m))
    if vol.is_empty:
        return acc.reshape(-1)

    q_local = orient_points(vol, stk.spatial_basis)
    rotation = stk.spatial_basis.eigenvectors.T

    contributions = np.zeros((vol.n_p, 3 * dirs.m))
    for f in np.unique(vol.frame_ids):
        rows = np.flatnonzero(vol.frame_ids == f)
        batch, at = cache.get(int(f), tau, vol.point_ids[rows])
        valid = batch.counts[at] > 0
        if valid.any():
            contributions[rows[valid]] = masked_hopc(
                batch.eigenvalues[at[valid]], batch.eigenvectors[at[valid]],
                dirs, theta_l, rotation)

    # T方向按帧偏移划分 [t - tau, t + tau]
    cells = grid.cells(q_local[:, 0], q_local[:, 1], vol.frame_ids - (stk.t - tau),
                       (-r, r), (-r, r), (0.0, 2 * tau + 1.0))
    np.add.at(acc, cells, contributions)
    return normalize_cells(acc).reshape(-1)


def describe_stks(stks: List[StkRecord], seq: PointCloudSequence, grid: Optional[CellGrid] = None,
                  theta_l: Optional[float] = None, dirs: Optional[DirectionSet] = None,
                  r: Optional[float] = None) -> np.ndarray:
    """批量Local HOPC，返回 (n_stk, gamma*60)；先登记全部支撑体，再按帧批量求特征基"""
    grid = grid or CellGrid.from_tuple(DESCRIPTOR_CONFIG['grid'])
    theta_l = DESCRIPTOR_CONFIG['theta_l'] if theta_l is None else theta_l
    dirs = dirs or dodecahedron(DESCRIPTOR_CONFIG['vertex_mode'])
    if not stks:
        return np.zeros((0, grid.dim))
    r = float(r or stks[0].radius)
    cache = PointBasisCache(seq, r)
    volumes = [_st_support(s, seq, r) for s in stks]
    for s, vol in zip(stks, volumes):
        cache.reserve(vol.frame_ids, vol.point_ids, int(s.tau_star))
    return np.stack([_accumulate(s, vol, grid, theta_l, dirs, r, cache) for s, vol in zip(stks, volumes)])


def holistic_hopc(seq: PointCloudSequence, grid: Optional[CellGrid] = None, tau: Optional[int] = None,
                  dirs: Optional[DirectionSet] = None, r: Optional[float] = None,
                  stride: Optional[int] = None) -> np.ndarray:
    """
    整段序列的Holistic HOPC（视角相关）

    每个点的时空HOPC按序列包围盒（X, Y）与帧区间[1, n_f]落入单元，
    逐单元归一化后拼接，默认网格6x5x3，长度5400。
    """
    grid = grid or CellGrid.from_tuple(DESCRIPTOR_CONFIG['holistic_grid'])
    tau = DESCRIPTOR_CONFIG['holistic_tau'] if tau is None else int(tau)
    dirs = dirs or dodecahedron(DESCRIPTOR_CONFIG['vertex_mode'])
    stride = stride or DESCRIPTOR_CONFIG['holistic_stride']
    r = r or spatial_scale(seq, ScaleParams.from_config())

    non_empty = [f.points for f in seq.frames if len(f)]
    acc = np.zeros((grid.gamma, 3 * dirs.m))
    if not non_empty:
        return acc.reshape(-1)
    everything = np.concatenate(non_empty)
    lo, hi = everything.min(axis=0), everything.max(axis=0)

    for t in range(1, seq.n_f + 1):
        centers = seq.frame(t).points[::stride]
        if len(centers) == 0:
            continue
        neighbors = WindowNeighbors(seq, centers, t, r, tau)
        members, seg, _, _, counts = neighbors.gather(tau)
        batch = batch_bases(members, seg, counts, centers)
        h = hopc_from_basis(batch.eigenvalues, batch.eigenvectors, dirs)
        h[counts == 0] = 0.0
        cells = grid.cells(centers[:, 0], centers[:, 1], np.full(len(centers), t - 1.0),
                           (lo[0], hi[0]), (lo[1], hi[1]), (0.0, float(seq.n_f)))
        np.add.at(acc, cells, h)
    return normalize_cells(acc).reshape(-1)
