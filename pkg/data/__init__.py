"""
数据模块 - 点云序列文件、深度图导入、合成数据与STK文件
"""
from .pcseq import save_pcseq, load_pcseq, encode_pcseq, decode_pcseq
from .depth import (
    CameraIntrinsics, SequenceManifest, backproject, convert_manifest,
    read_depth, write_depth_png, register_importer
)
from .synth import (
    SynthSpec, BodyProportions, BenchmarkSample, synth_generate, make_benchmark, MOTIONS
)
from .stk_io import DescriptorFile, save_stks, load_stks, save_descriptors, load_descriptors, export_ply

__all__ = [
    'save_pcseq', 'load_pcseq', 'encode_pcseq', 'decode_pcseq',
    'CameraIntrinsics', 'SequenceManifest', 'backproject', 'convert_manifest',
    'read_depth', 'write_depth_png', 'register_importer',
    'SynthSpec', 'BodyProportions', 'BenchmarkSample', 'synth_generate', 'make_benchmark', 'MOTIONS',
    'DescriptorFile', 'save_stks', 'load_stks', 'save_descriptors', 'load_descriptors', 'export_ply',
]
