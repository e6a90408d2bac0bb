"""
HOPC描述子模块 - 主成分方向直方图

将消歧后的三个特征向量投影到正十二面体的20个顶点方向，按阈值psi量化，
再乘以对应特征值，拼接成 3 x 20 = 60 维描述子。
"""
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import EmptySupport, NotUnit
from .geometry import EigenBasis, SupportVolume

PHI = (1 + np.sqrt(5)) / 2
N_DIRECTIONS = 20
HOPC_DIM = 3 * N_DIRECTIONS
QUANTIZE_TOL = 1e-12
UNIT_TOL = 1e-9

# HopcDescriptor: 长度60的非负float64数组，三段依次对应降序的三个特征向量
HopcDescriptor = np.ndarray


@dataclass(frozen=True, eq=False)
class DirectionSet:
    """直方图方向集合：vertices为(m,3)行向量，psi为量化阈值"""
    vertices: np.ndarray
    psi: float
    mode: str = 'normalized'

    @property
    def U(self) -> np.ndarray:
        """3 x m 列向量矩阵"""
        return self.vertices.T

    @property
    def m(self) -> int:
        return len(self.vertices)


def _raw_vertices() -> np.ndarray:
    """20个原始顶点：8个立方体顶点，然后三组4顶点族，各自按符号字典序"""
    inv = 1 / PHI
    signs = list(itertools.product((-1.0, 1.0), repeat=2))
    rows = [list(s) for s in itertools.product((-1.0, 1.0), repeat=3)]
    rows += [[0.0, a * inv, b * PHI] for a, b in signs]
    rows += [[a * inv, b * PHI, 0.0] for a, b in signs]
    rows += [[a * PHI, 0.0, b * inv] for a, b in signs]
    return np.array(rows)


def dodecahedron(mode: str = 'normalized') -> DirectionSet:
    """
    正十二面体方向集合

    Args:
        mode: 'normalized' 顶点归一化为单位长度，psi = sqrt(5)/3；
              'raw' 使用原始顶点（模长sqrt(3)），psi = phi + 1/phi = sqrt(5)

    Returns:
        DirectionSet
    """
    raw = _raw_vertices()
    if mode == 'raw':
        return DirectionSet(raw, float(PHI + 1 / PHI), mode)
    if mode != 'normalized':
        raise ValueError(f"未知的顶点模式: {mode}")
    return DirectionSet(raw / np.sqrt(3.0), float(np.sqrt(5.0) / 3.0), mode)


def quantize(b: np.ndarray, psi: float) -> np.ndarray:
    """b <= psi 置0，否则减去psi"""
    return np.where(b <= psi + QUANTIZE_TOL, 0.0, b - psi)


def project_quantize(v, dirs: DirectionSet) -> np.ndarray:
    """
    单位向量投影到方向集合并量化

    Args:
        v: 单位3维向量
        dirs: 方向集合

    Returns:
        长度m的非负量化投影
    """
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise NotUnit(f"投影向量必须是单位向量: |v|={np.linalg.norm(v):.12f}")
    return quantize(dirs.vertices @ v, dirs.psi)


def _scaled_blocks(eigenvalues: np.ndarray, eigenvectors: np.ndarray, dirs: DirectionSet) -> np.ndarray:
    """
    批量计算HOPC

    Args:
        eigenvalues: (n, 3)
        eigenvectors: (n, 3, 3)，第j列为第j个特征向量

    Returns:
        (n, 60)
    """
    # b[n, j, z] = u_z · v_j
    b = np.einsum('zi,nij->njz', dirs.vertices, eigenvectors)
    bq = quantize(b, dirs.psi)
    norms = np.linalg.norm(bq, axis=2, keepdims=True)
    scale = np.where(norms > 0, eigenvalues[:, :, None] / np.where(norms > 0, norms, 1.0), 0.0)
    return (bq * scale).reshape(len(eigenvalues), 3 * dirs.m)


def hopc_from_basis(eigenvalues, eigenvectors, dirs: DirectionSet,
                    rotation: Optional[np.ndarray] = None) -> np.ndarray:
    """
    由特征值和特征向量计算HOPC（支持批量）

    Args:
        eigenvalues: (3,) 或 (n, 3)
        eigenvectors: (3, 3) 或 (n, 3, 3)
        dirs: 方向集合
        rotation: 投影前先左乘的旋转（(3,3) 或 (n,3,3)），用于在局部坐标系下描述

    Returns:
        (60,) 或 (n, 60)
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    V = np.asarray(eigenvectors, dtype=np.float64)
    single = lam.ndim == 1
    if single:
        lam, V = lam[None], V[None]
    if rotation is not None:
        V = np.matmul(rotation, V)
    h = _scaled_blocks(lam, V, dirs)
    return h[0] if single else h


def hopc(vol: SupportVolume, basis: EigenBasis, dirs: DirectionSet) -> HopcDescriptor:
    """
    HOPC描述子

    h_j = lambda_j * b_j / ||b_j||，b_j为0或lambda_j为0时该段为0
    """
    if vol.is_empty:
        raise EmptySupport(f"帧{vol.t}处的支撑体为空")
    return hopc_from_basis(basis.eigenvalues, basis.eigenvectors, dirs)


def blocks(h: np.ndarray) -> np.ndarray:
    """把60维描述子拆成 (3, 20)"""
    return np.asarray(h).reshape(3, -1)
