"""
STK与描述子文件模块 - npz容器与PLY导出
"""
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import plyfile

from core.detector import StkRecord
from core.exceptions import DataError
from core.geometry import EigenBasis

PathLike = Union[str, Path]


def _write_npz(path: PathLike, meta: dict, **arrays) -> Path:
    """写入npz（通过文件句柄，保持原始文件名）"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        np.savez(f, meta=np.array(json.dumps(meta, ensure_ascii=False)), **arrays)
    return path


def _read_npz(path: PathLike, kind: str) -> Tuple[Dict[str, np.ndarray], dict]:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            arrays = {k: data[k] for k in data.files}
    except (OSError, ValueError) as e:
        raise DataError(f"无法读取{kind}文件 {path}: {e}") from e
    meta = json.loads(str(arrays.pop('meta'))) if 'meta' in arrays else {}
    if meta.get('kind') != kind:
        raise DataError(f"{path} 不是{kind}文件 (kind={meta.get('kind')})")
    return arrays, meta


def _basis_arrays(bases: List[EigenBasis], prefix: str) -> Dict[str, np.ndarray]:
    n = len(bases)
    return {
        f'{prefix}_eigenvalues': np.array([b.eigenvalues for b in bases]).reshape(n, 3),
        f'{prefix}_eigenvectors': np.array([b.eigenvectors for b in bases]).reshape(n, 3, 3),
        f'{prefix}_mean': np.array([b.mean for b in bases]).reshape(n, 3),
        f'{prefix}_degenerate': np.array([b.degenerate for b in bases], dtype=bool).reshape(n, 3),
    }


def save_stks(path: PathLike, stks: List[StkRecord], meta: dict = None) -> Path:
    """
    保存STK列表

    Args:
        path: 输出文件
        stks: STK列表
        meta: 运行参数（写入文件头，便于复现）
    """
    meta = dict(meta or {}, kind='stks', count=len(stks))
    n = len(stks)
    return _write_npz(
        path, meta,
        position=np.array([s.position for s in stks]).reshape(n, 3),
        t=np.array([s.t for s in stks], dtype=np.int64),
        tau_star=np.array([s.tau_star for s in stks], dtype=np.int64),
        quality=np.array([s.quality for s in stks], dtype=np.float64),
        radius=np.array([s.radius for s in stks], dtype=np.float64),
        order=np.array([s.order for s in stks], dtype=np.int64),
        point_index=np.array([s.point_index for s in stks], dtype=np.int64),
        **_basis_arrays([s.spatial_basis for s in stks], 'spatial'),
        **_basis_arrays([s.st_basis for s in stks], 'st'),
    )


def load_stks(path: PathLike) -> Tuple[List[StkRecord], dict]:
    """读取STK列表与运行参数"""
    a, meta = _read_npz(path, 'stks')

    def basis(prefix, i):
        return EigenBasis(a[f'{prefix}_eigenvalues'][i], a[f'{prefix}_eigenvectors'][i],
                          a[f'{prefix}_mean'][i], a[f'{prefix}_degenerate'][i])

    stks = [
        StkRecord(
            position=a['position'][i],
            t=int(a['t'][i]),
            tau_star=int(a['tau_star'][i]),
            spatial_basis=basis('spatial', i),
            st_basis=basis('st', i),
            quality=float(a['quality'][i]),
            radius=float(a['radius'][i]),
            order=int(a['order'][i]),
            point_index=int(a['point_index'][i]),
        )
        for i in range(len(a['t']))
    ]
    return stks, meta


@dataclass
class DescriptorFile:
    """
    一段序列的描述子文件

    local: (n_stk, gamma*60) Local HOPC；stkd: 600维直方图；holistic: Holistic HOPC向量；
    meta含样本编号、标签、视角、受试者与运行参数。
    """
    local: Optional[np.ndarray] = None
    stkd: Optional[np.ndarray] = None
    holistic: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def save_descriptors(path: PathLike, desc: DescriptorFile) -> Path:
    """保存描述子（只写出非空的部分）"""
    arrays = {name: np.asarray(getattr(desc, name), dtype=np.float64)
              for name in ('local', 'stkd', 'holistic') if getattr(desc, name) is not None}
    meta = dict(desc.meta, kind='descriptors', parts=sorted(arrays))
    return _write_npz(path, meta, **arrays)


def load_descriptors(path: PathLike) -> DescriptorFile:
    a, meta = _read_npz(path, 'descriptors')
    return DescriptorFile(a.get('local'), a.get('stkd'), a.get('holistic'), meta)


def export_ply(stks: List[StkRecord], path: PathLike, meta: dict = None) -> Path:
    """
    STK导出为二进制PLY（仅用于静态可视化）

    颜色按质量因子从蓝到红渐变，另附帧号t、时间尺度与质量因子属性；meta写入头部注释。
    """
    n = len(stks)
    vertex_dtype = [
        ('x', 'f4'), ('y', 'f4'), ('z', 'f4'),
        ('red', 'u1'), ('green', 'u1'), ('blue', 'u1'),
        ('t', 'i4'), ('tau', 'i4'), ('quality', 'f4'),
    ]
    vertices = np.empty(n, dtype=vertex_dtype)
    if n:
        pos = np.array([s.position for s in stks])
        eta = np.array([s.quality for s in stks])
        level = (eta - eta.min()) / (np.ptp(eta) or 1.0)
        vertices['x'], vertices['y'], vertices['z'] = pos[:, 0], pos[:, 1], pos[:, 2]
        vertices['red'] = np.round(255 * level).astype(np.uint8)
        vertices['green'] = 64
        vertices['blue'] = np.round(255 * (1 - level)).astype(np.uint8)
        vertices['t'] = [s.t for s in stks]
        vertices['tau'] = [s.tau_star for s in stks]
        vertices['quality'] = eta

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    element = plyfile.PlyElement.describe(vertices, 'vertex')
    comments = [f'{k}: {v}' for k, v in (meta or {}).items()]
    plyfile.PlyData([element], comments=comments).write(str(path))
    return path
