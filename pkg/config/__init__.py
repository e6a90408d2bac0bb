"""
配置模块 - 统一管理所有配置
"""
from .settings import (
    HOPC_SEED,
    HOPC_WORKERS,
    SCALE_CONFIG,
    DETECTOR_CONFIG,
    DESCRIPTOR_CONFIG,
    STKD_CONFIG,
    CODEBOOK_CONFIG,
    CLASSIFIER_CONFIG,
    SYNTH_CONFIG,
    BENCHMARK_CONFIG,
    LOG_CONFIG,
    validate_config
)

__all__ = [
    'HOPC_SEED',
    'HOPC_WORKERS',
    'SCALE_CONFIG',
    'DETECTOR_CONFIG',
    'DESCRIPTOR_CONFIG',
    'STKD_CONFIG',
    'CODEBOOK_CONFIG',
    'CLASSIFIER_CONFIG',
    'SYNTH_CONFIG',
    'BENCHMARK_CONFIG',
    'LOG_CONFIG',
    'validate_config'
]
