"""
模型文件模块 - HOPCMODL 版本化二进制容器

布局（整数均为小端）：
    magic "HOPCMODL" | u32 version | u32 头部长度 | UTF-8 JSON头部 | 小端f32数组...
头部记录容器类型、全部参数与每个数组的名称和形状，数组按头部顺序紧密排列。
"""
import json
import math
import struct
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from core.exceptions import ModelFormatError
from .classifier import KernelModel
from .codebook import Codebook
from .pipeline import ActionModel, PipelineParams

MAGIC = b'HOPCMODL'
VERSION = 1
_U32 = struct.Struct('<I')
_F32 = np.dtype('<f4')
_PREFIX = len(MAGIC) + 2 * _U32.size

PathLike = Union[str, Path]


def encode_container(header: Dict, arrays: Dict[str, np.ndarray]) -> bytes:
    """头部 + f32数组 -> 字节串"""
    specs = [{'name': name, 'shape': list(np.shape(a))} for name, a in arrays.items()]
    head = json.dumps(dict(header, arrays=specs), ensure_ascii=False, sort_keys=True).encode('utf-8')
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(head)), head]
    parts += [np.ascontiguousarray(a, dtype=_F32).tobytes() for a in arrays.values()]
    return b''.join(parts)


def decode_container(buf: bytes) -> Tuple[Dict, Dict[str, np.ndarray]]:
    """
    解析容器

    Raises:
        ModelFormatError: magic/版本错误、头部损坏、数组截断，带字节偏移
    """
    if len(buf) < len(MAGIC) or buf[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"magic错误: {bytes(buf[:len(MAGIC)])!r}", offset=0)
    if len(buf) < _PREFIX:
        raise ModelFormatError("文件截断，缺少版本号或头部长度", offset=len(MAGIC))
    version = _U32.unpack_from(buf, len(MAGIC))[0]
    if version != VERSION:
        raise ModelFormatError(f"不支持的版本: {version}", offset=len(MAGIC))
    head_len = _U32.unpack_from(buf, len(MAGIC) + _U32.size)[0]
    if _PREFIX + head_len > len(buf):
        raise ModelFormatError(f"头部长度 {head_len} 超出文件", offset=len(MAGIC) + _U32.size)
    try:
        header = json.loads(buf[_PREFIX:_PREFIX + head_len].decode('utf-8'))
        specs = header.pop('arrays')
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, AttributeError, TypeError) as e:
        raise ModelFormatError(f"头部无法解析: {e}", offset=_PREFIX) from e

    if not isinstance(specs, list):
        raise ModelFormatError(f"数组列表无效: {type(specs).__name__}", offset=_PREFIX)

    offset = _PREFIX + head_len
    arrays = {}
    for spec in specs:
        try:
            name = str(spec['name'])
            shape = tuple(int(v) for v in spec['shape'])
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"数组描述无效: {spec!r}", offset=_PREFIX) from e
        if any(d < 0 for d in shape):
            raise ModelFormatError(f"数组 {name} 形状含负数: {shape}", offset=_PREFIX)
        count = math.prod(shape)
        size = count * _F32.itemsize
        if offset + size > len(buf):
            raise ModelFormatError(f"数组 {name} 截断: 需要 {size} 字节", offset=offset)
        arrays[name] = np.frombuffer(buf, dtype=_F32, count=count, offset=offset).reshape(shape).copy()
        offset += size
    if offset != len(buf):
        raise ModelFormatError(f"文件末尾有 {len(buf) - offset} 字节多余数据", offset=offset)
    return header, arrays


def _read(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise ModelFormatError(f"无法读取 {path}: {e}", offset=0) from e


def _write(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return path


# ==================== 码本 ====================

def _codebook_parts(codebook: Codebook, prefix: str = 'codebook') -> Tuple[Dict, Dict[str, np.ndarray]]:
    header = {f'{prefix}_seed': int(codebook.seed), f'{prefix}_inertia': float(codebook.inertia),
              f'{prefix}_views': [int(v) for v in codebook.views]}
    arrays = {f'{prefix}_centroids': codebook.centroids,
              f'{prefix}_keep_mask': codebook.keep_mask.astype(np.float32)}
    return header, arrays


def _codebook_from(header: Dict, arrays: Dict[str, np.ndarray], prefix: str = 'codebook') -> Codebook:
    try:
        return Codebook(
            centroids=arrays[f'{prefix}_centroids'].astype(np.float64),
            keep_mask=arrays[f'{prefix}_keep_mask'] > 0.5,
            seed=int(header[f'{prefix}_seed']),
            inertia=float(header[f'{prefix}_inertia']),
            views=list(header[f'{prefix}_views']),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"码本字段缺失或无效: {e}", offset=_PREFIX) from e


def save_codebook(path: PathLike, codebook: Codebook, meta: Dict = None) -> Path:
    header, arrays = _codebook_parts(codebook)
    header.update(kind='codebook', meta=meta or {})
    return _write(path, encode_container(header, arrays))


def load_codebook(path: PathLike) -> Tuple[Codebook, Dict]:
    header, arrays = decode_container(_read(path))
    if header.get('kind') != 'codebook':
        raise ModelFormatError(f"不是码本文件 (kind={header.get('kind')})", offset=_PREFIX)
    return _codebook_from(header, arrays), header.get('meta', {})


# ==================== 模型 ====================

def save_model(path: PathLike, model: ActionModel, meta: Dict = None) -> Path:
    """保存识别模型（参数、码本、分类器）"""
    clf = model.classifier
    header = {
        'kind': 'model',
        'params': model.params.to_dict(),
        'classes': list(clf.classes),
        'c': clf.c,
        'iterations': list(clf.iterations),
        'train_views': [int(v) for v in model.train_views],
        'has_codebook': model.codebook is not None,
        'meta': meta or {},
    }
    arrays = {
        'support_vectors': clf.support_vectors,
        'dual_coef': clf.dual_coef,
        'intercept': clf.intercept,
    }
    if model.codebook is not None:
        cb_header, cb_arrays = _codebook_parts(model.codebook)
        header.update(cb_header)
        arrays.update(cb_arrays)
    return _write(path, encode_container(header, arrays))


def load_model(path: PathLike) -> ActionModel:
    header, arrays = decode_container(_read(path))
    if header.get('kind') != 'model':
        raise ModelFormatError(f"不是模型文件 (kind={header.get('kind')})", offset=_PREFIX)
    try:
        classifier = KernelModel(
            classes=[str(c) for c in header['classes']],
            support_vectors=arrays['support_vectors'],
            dual_coef=arrays['dual_coef'],
            intercept=arrays['intercept'],
            c=float(header['c']),
            iterations=list(header.get('iterations', [])),
        )
        params = PipelineParams.from_dict(header['params'])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"模型字段缺失或无效: {e}", offset=_PREFIX) from e
    codebook = _codebook_from(header, arrays) if header.get('has_codebook') else None
    return ActionModel(params, classifier, codebook, list(header.get('train_views', [])))
