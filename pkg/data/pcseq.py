"""
点云序列文件模块 - PCSQ二进制容器读写

格式（整数均为小端）：
    magic "PCSQ" | u32 version=1 | u32 帧数 | 每帧 [u32 点数, 点数 x 3 个小端f32]
"""
import os
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.exceptions import PcseqFormatError
from core.geometry import PointCloudFrame, PointCloudSequence

MAGIC = b'PCSQ'
VERSION = 1
_U32 = struct.Struct('<I')
_F32 = np.dtype('<f4')


def encode_pcseq(seq: PointCloudSequence) -> bytes:
    """序列编码为字节串，坐标以f32存储"""
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(seq.n_f)]
    for frame in seq.frames:
        pts = frame.points.astype(_F32)
        if not np.all(np.isfinite(pts)):
            raise PcseqFormatError("坐标必须有限", offset=sum(len(p) for p in parts),
                                   frame_index=frame.index)
        parts.append(_U32.pack(len(pts)))
        parts.append(pts.tobytes())
    return b''.join(parts)


def decode_pcseq(buf: bytes) -> PointCloudSequence:
    """
    解析PCSQ字节串

    Raises:
        PcseqFormatError: magic/版本错误、截断、非有限坐标，带字节偏移与帧号
    """
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise PcseqFormatError(f"magic错误: {bytes(buf[:4])!r}", offset=0)
    offset = 4

    def read_u32(what: str, frame_index=None) -> int:
        nonlocal offset
        if offset + 4 > len(buf):
            raise PcseqFormatError(f"文件截断，缺少{what}", offset=offset, frame_index=frame_index)
        value = _U32.unpack_from(buf, offset)[0]
        offset += 4
        return value

    version = read_u32("版本号")
    if version != VERSION:
        raise PcseqFormatError(f"不支持的版本: {version}", offset=4)
    n_frames = read_u32("帧数")

    frames = []
    for i in range(1, n_frames + 1):
        count = read_u32("点数", frame_index=i)
        size = count * 3 * _F32.itemsize
        if offset + size > len(buf):
            raise PcseqFormatError(f"文件截断: 需要 {size} 字节坐标", offset=offset, frame_index=i)
        pts = np.frombuffer(buf, dtype=_F32, count=count * 3, offset=offset).reshape(count, 3)
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise PcseqFormatError("坐标非有限", offset=offset + bad * 12, frame_index=i)
        frames.append(PointCloudFrame(i, pts.astype(np.float64)))
        offset += size

    if offset != len(buf):
        raise PcseqFormatError(f"文件末尾有 {len(buf) - offset} 字节多余数据", offset=offset)
    return PointCloudSequence(frames)


def save_pcseq(seq: PointCloudSequence, path: Union[str, Path]) -> Path:
    """写入PCSQ文件"""
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    path.write_bytes(encode_pcseq(seq))
    return path


def load_pcseq(path: Union[str, Path]) -> PointCloudSequence:
    """读取PCSQ文件"""
    return decode_pcseq(Path(path).read_bytes())
