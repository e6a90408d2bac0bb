"""
STK-D模块 - STK时空分布描述子

STK的4D坐标 (x, y, z, t) 逐维标准化，对空间部分做特征分解并迭代剔除低质量STK，
对齐到特征基后重新拼接t，投影到120胞体的600个顶点，取最大投影所在顶点计数。
"""
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from config import DETECTOR_CONFIG, STKD_CONFIG
from .detector import StkRecord
from .exceptions import TooFewKeypoints
from .geometry import SIGN_TOL, eigen3, eigenratios, sign_scores
from .hopc import PHI

N_VERTICES = 600
FAMILY_COUNTS = (24, 64, 64, 64, 96, 96, 192)
EXPECTED_ITERATIONS = 3


@dataclass(frozen=True, eq=False)
class Polychoron600:
    """120胞体的600个顶点，vertices为 (600, 4)，按族依次排列"""
    vertices: np.ndarray
    family_sizes: Tuple[int, ...]

    @property
    def W(self) -> np.ndarray:
        """4 x 600 列向量矩阵"""
        return self.vertices.T


def _is_even(perm: Tuple[int, ...]) -> bool:
    inversions = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
    return inversions % 2 == 0


def _expand(coords: Tuple[float, ...], even_only: bool) -> List[Tuple[float, ...]]:
    """坐标在置换群下的所有排列，非零分量取所有符号，去重后保持生成顺序"""
    seen = set()
    out = []
    for perm in itertools.permutations(range(4)):
        if even_only and not _is_even(perm):
            continue
        base = [coords[i] for i in perm]
        nonzero = [k for k, v in enumerate(base) if v != 0]
        for signs in itertools.product((1.0, -1.0), repeat=len(nonzero)):
            v = list(base)
            for k, s in zip(nonzero, signs):
                v[k] = s * v[k]
            key = tuple(round(x, 9) for x in v)
            if key not in seen:
                seen.add(key)
                out.append(tuple(v))
    return out


@lru_cache(maxsize=1)
def polychoron() -> Polychoron600:
    """
    枚举120胞体顶点

    Returns:
        Polychoron600，每个顶点模长平方为8
    """
    inv, inv2 = 1 / PHI, 1 / PHI ** 2
    root5 = math.sqrt(5.0)
    families = [
        ((0.0, 0.0, 2.0, 2.0), False),
        ((1.0, 1.0, 1.0, root5), False),
        ((inv2, PHI, PHI, PHI), False),
        ((inv, inv, inv, PHI ** 2), False),
        ((0.0, inv2, 1.0, PHI ** 2), True),
        ((0.0, inv, PHI, root5), True),
        ((inv, 1.0, PHI, 2.0), True),
    ]
    rows, sizes = [], []
    for coords, even_only in families:
        family = _expand(coords, even_only)
        rows += family
        sizes.append(len(family))

    vertices = np.array(rows)
    distinct = np.unique(np.round(vertices, 9), axis=0)
    assert len(distinct) == N_VERTICES == len(vertices), f"顶点数错误: {len(distinct)}"
    assert tuple(sizes) == FAMILY_COUNTS, f"顶点族大小错误: {sizes}"
    return Polychoron600(vertices, tuple(sizes))


@dataclass(eq=False)
class StkdDescriptor:
    """600维STK分布直方图"""
    histogram: np.ndarray
    retained: int
    iterations: int
    basis: np.ndarray
    constraints_met: bool = True

    def normalized(self) -> np.ndarray:
        """L1归一化"""
        total = self.histogram.sum()
        return self.histogram / total if total > 0 else self.histogram.astype(np.float64)


def normalize_positions(points: np.ndarray, mode: str = 'axis') -> np.ndarray:
    """
    4D坐标标准化

    Args:
        points: (n, 4)
        mode: 'axis' 逐维零均值单位方差（方差为0的维度置0）；
              'isotropic' 空间三维共用一个尺度，t单独标准化

    Returns:
        (n, 4)
    """
    P = np.asarray(points, dtype=np.float64)
    centered = P - P.mean(axis=0)
    std = centered.std(axis=0)
    if mode == 'isotropic':
        spatial = math.sqrt(float((std[:3] ** 2).mean()))
        std = np.array([spatial, spatial, spatial, std[3]])
    elif mode != 'axis':
        raise ValueError(f"未知的标准化方式: {mode}")
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, centered / safe, 0.0)


def canonical_order(points: np.ndarray, quality: np.ndarray) -> np.ndarray:
    """按 (eta, t, x, y, z) 升序的排列，与输入顺序无关"""
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0], points[:, 3], quality))


def _canonical_signs(V: np.ndarray, columns: np.ndarray) -> np.ndarray:
    """符号和为0的向量取第一个非零分量为正"""
    for j in np.flatnonzero(columns):
        nonzero = np.flatnonzero(np.abs(V[:, j]) > SIGN_TOL)
        if len(nonzero) and V[nonzero[0], j] < 0:
            V[:, j] *= -1
    return V


def align_basis(spatial: np.ndarray) -> np.ndarray:
    """
    STK空间坐标的消歧特征基

    以质心为参考点按符号和定向，符号和为0时采用规范符号，再修正为右手系。
    """
    mean = spatial.mean(axis=0)
    d = spatial - mean
    C = d.T @ d / len(spatial)
    _, V = eigen3(0.5 * (C + C.T))
    score, total = sign_scores(d, V)
    degenerate = np.abs(score) <= SIGN_TOL * total
    V = V * np.where((score < 0) & ~degenerate, -1.0, 1.0)
    score = np.abs(score)
    V = _canonical_signs(V, degenerate)
    if np.dot(np.cross(V[:, 0], V[:, 1]), V[:, 2]) < 0:
        V[:, int(np.argmin(score))] *= -1
    return V


def stkd_from_normalized(points: np.ndarray, quality: np.ndarray, theta_g: float, m_k: int,
                         min_keep: int = 10, l1: bool = False) -> StkdDescriptor:
    """
    对已经标准化的4D坐标计算STK-D

    Args:
        points: (n, 4) 标准化后的 (x, y, z, t)
        quality: (n,) 对应的eta
        theta_g: 特征值比阈值
        m_k: 每次迭代剔除的STK数
        min_keep: 剔除下限
        l1: 输出L1归一化直方图
    """
    P = np.asarray(points, dtype=np.float64)
    order = canonical_order(P, np.asarray(quality, dtype=np.float64))
    P = P[order]

    start, iterations = 0, 0
    while True:
        spatial = P[start:, :3]
        d = spatial - spatial.mean(axis=0)
        C = d.T @ d / len(spatial)
        lam, _ = eigen3(0.5 * (C + C.T))
        d12, d23 = eigenratios(lam)
        met = bool(d12[0] > theta_g and d23[0] > theta_g)
        if met or len(spatial) - m_k < min_keep:
            break
        start += m_k
        iterations += 1

    retained = P[start:]
    V = align_basis(retained[:, :3])
    aligned = np.column_stack([retained[:, :3] @ V, retained[:, 3]])
    scores = aligned @ polychoron().W
    bins = np.argmax(scores, axis=1)
    histogram = np.bincount(bins, minlength=N_VERTICES)

    if iterations > EXPECTED_ITERATIONS:
        print(f"[警告] STK-D精炼迭代 {iterations} 次（通常3次足够）")
    descriptor = StkdDescriptor(histogram, len(retained), iterations, V, met)
    if l1:
        descriptor.histogram = descriptor.normalized()
    return descriptor


def stkd(stks: List[StkRecord], theta_g: Optional[float] = None, m_k: Optional[int] = None,
         min_keep: Optional[int] = None, normalization: Optional[str] = None,
         l1: Optional[bool] = None, nk: Optional[int] = None) -> StkdDescriptor:
    """
    STK分布描述子

    Args:
        stks: 检测到的STK
        theta_g: 特征值比阈值
        m_k: 每次剔除数，默认 ceil(0.05 * n_k)
        min_keep: 精炼下限
        normalization: 'axis' 或 'isotropic'
        l1: 是否L1归一化
        nk: 计算默认m_k用的n_k

    Returns:
        StkdDescriptor
    """
    theta_g = STKD_CONFIG['theta_g'] if theta_g is None else theta_g
    min_keep = STKD_CONFIG['min_keep'] if min_keep is None else min_keep
    normalization = normalization or STKD_CONFIG['normalization']
    l1 = STKD_CONFIG['l1'] if l1 is None else l1
    if m_k is None:
        m_k = default_mk(nk or DETECTOR_CONFIG['nk'])
    if min_keep < 4 or m_k < 1:
        raise ValueError(f"需要 min_keep >= 4 且 m_k >= 1: {min_keep}, {m_k}")
    if len(stks) < min_keep:
        raise TooFewKeypoints(f"STK数量 {len(stks)} 少于 {min_keep}")

    raw = np.array([[*s.position, s.t] for s in stks], dtype=np.float64)
    quality = np.array([s.quality for s in stks], dtype=np.float64)
    # 标准化前先按规范顺序排列，保证结果与输入顺序无关
    order = canonical_order(raw, quality)
    return stkd_from_normalized(normalize_positions(raw[order], normalization), quality[order],
                                theta_g, m_k, min_keep, l1)


def default_mk(nk: int) -> int:
    """m_k = ceil(mk_ratio * n_k)"""
    return max(1, math.ceil(STKD_CONFIG['mk_ratio'] * nk))
