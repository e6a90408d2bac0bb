"""
深度图导入模块 - 16位深度帧反投影为点云

清单为UTF-8 JSON，深度帧为16位PGM或16位灰度PNG，0表示无效像素。
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from PIL import Image

from config import HOPC_WORKERS
from core.exceptions import DepthFormatError, HopcError, ManifestError
from core.geometry import PointCloudFrame, PointCloudSequence

UNIT_SCALES = {'mm': 0.001, 'cm': 0.01, 'm': 1.0}
# Pillow 中16位灰度图的模式，'I' 为16位PGM的解码结果
DEPTH_MODES = ('I', 'I;16', 'I;16B', 'I;16L')


@dataclass
class CameraIntrinsics:
    """针孔相机内参，depth_scale为每个存储单位对应的米数"""
    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float = 0.001
    width: Optional[int] = None
    height: Optional[int] = None

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DepthFormatError(f"焦距必须为正: fx={self.fx}, fy={self.fy}")
        if self.depth_scale <= 0:
            raise DepthFormatError(f"depth_scale必须为正: {self.depth_scale}")


def backproject(depth: np.ndarray, intrinsics: CameraIntrinsics, index: int = 1) -> PointCloudFrame:
    """
    深度图反投影

    x = (u - cx) * z / fx, y = (v - cy) * z / fy, z = d * depth_scale，
    按行优先顺序输出，d = 0 的像素跳过。

    Args:
        depth: (H, W) 16位无符号深度
        intrinsics: 相机内参
        index: 帧号

    Returns:
        PointCloudFrame
    """
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise DepthFormatError(f"深度图必须是二维数组: shape={depth.shape}")
    h, w = depth.shape
    if (intrinsics.width is not None and intrinsics.width != w) or \
            (intrinsics.height is not None and intrinsics.height != h):
        raise DepthFormatError(
            f"深度图尺寸 {w}x{h} 与内参 {intrinsics.width}x{intrinsics.height} 不一致")
    if depth.dtype.kind == 'f' or depth.min(initial=0) < 0 or depth.max(initial=0) > 65535:
        raise DepthFormatError("深度值必须是16位无符号整数")

    v, u = np.nonzero(depth)
    z = depth[v, u].astype(np.float64) * intrinsics.depth_scale
    x = (u - intrinsics.cx) * z / intrinsics.fx
    y = (v - intrinsics.cy) * z / intrinsics.fy
    return PointCloudFrame(index, np.column_stack([x, y, z]))


# ==================== 深度帧读取器 ====================
DepthReader = Callable[[Path], np.ndarray]
_IMPORTERS: Dict[str, DepthReader] = {}


def register_importer(*suffixes: str):
    """按文件后缀注册深度帧读取器（数据集专用格式在此扩展）"""
    def wrap(reader: DepthReader) -> DepthReader:
        for suffix in suffixes:
            _IMPORTERS[suffix.lower()] = reader
        return reader
    return wrap


@register_importer('.png', '.pgm')
def read_depth_image(path: Path) -> np.ndarray:
    """Pillow读取16位灰度图"""
    try:
        with Image.open(path) as img:
            if img.mode not in DEPTH_MODES:
                raise DepthFormatError(f"不是16位灰度图: {path} (mode={img.mode})")
            return np.array(img, dtype=np.int64)
    except (OSError, SyntaxError) as e:
        raise DepthFormatError(f"无法解码深度帧 {path}: {e}") from e


def write_depth_png(depth: np.ndarray, path: Union[str, Path]) -> Path:
    """写出16位PNG深度帧"""
    path = Path(path)
    Image.fromarray(np.asarray(depth, dtype=np.uint16)).save(path, format='PNG')
    return path


def read_depth(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    reader = _IMPORTERS.get(path.suffix.lower())
    if reader is None:
        raise DepthFormatError(f"没有 {path.suffix} 格式的读取器: {path}")
    return reader(path)


# ==================== 序列清单 ====================
@dataclass
class SequenceManifest:
    """一段深度序列的描述"""
    id: str
    action_label: str
    subject_id: int
    view_id: int
    frames: List[str]
    intrinsics: CameraIntrinsics
    units: str = 'mm'
    views: Optional[List[int]] = None
    root: Path = field(default=Path('.'), repr=False)

    def __post_init__(self):
        if not self.frames:
            raise ManifestError(f"序列 {self.id} 的帧列表为空")
        if self.views is not None and self.view_id not in self.views:
            raise ManifestError(f"view_id {self.view_id} 不在声明的视角集合 {self.views} 中")
        if self.units not in UNIT_SCALES:
            raise ManifestError(f"未知的深度单位: {self.units}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SequenceManifest':
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestError(f"无法读取清单 {path}: {e}") from e
        return cls.from_dict(raw, root=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, root: Path = Path('.')) -> 'SequenceManifest':
        try:
            units = raw.get('units', 'mm')
            intr = dict(raw['intrinsics'])
            intr.setdefault('depth_scale', UNIT_SCALES.get(units, 0.001))
            return cls(
                id=str(raw['id']),
                action_label=str(raw['action_label']),
                subject_id=int(raw['subject_id']),
                view_id=int(raw['view_id']),
                frames=list(raw['frames']),
                intrinsics=CameraIntrinsics(**intr),
                units=units,
                views=raw.get('views'),
                root=root,
            )
        except HopcError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"清单字段缺失或类型错误: {e}") from e

    def to_dict(self) -> dict:
        return {
            'id': self.id,
            'action_label': self.action_label,
            'subject_id': self.subject_id,
            'view_id': self.view_id,
            'frames': self.frames,
            'intrinsics': asdict(self.intrinsics),
            'units': self.units,
            'views': self.views,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding='utf-8')
        return path

    def frame_paths(self) -> List[Path]:
        return [self.root / f for f in self.frames]


def convert_manifest(manifest: SequenceManifest, workers: Optional[int] = None) -> PointCloudSequence:
    """
    清单 -> 点云序列

    帧解码在线程池中并行，结果按清单顺序组装。
    """
    paths = manifest.frame_paths()
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ManifestError(f"缺少深度帧: {missing[:3]}")

    def convert(item):
        i, path = item
        return backproject(read_depth(path), manifest.intrinsics, index=i)

    with ThreadPoolExecutor(max_workers=workers or HOPC_WORKERS) as pool:
        frames = list(pool.map(convert, enumerate(paths, start=1)))
    return PointCloudSequence(frames)
