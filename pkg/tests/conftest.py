"""
测试公共夹具 - 小规模合成序列与STK构造工具
"""
import numpy as np
import pytest

from core.detector import StkRecord
from core.geometry import EigenBasis, PointCloudSequence
from data.synth import SynthSpec, synth_generate
from utils import monitor as monitor_module
from utils.monitor import RunMonitor


def make_stk(position, t: int = 1, quality: float = 1.0, order: int = 0, radius: float = 0.3) -> StkRecord:
    """只带位置、帧号与质量因子的STK（特征基取单位阵）"""
    basis = EigenBasis(np.array([3.0, 2.0, 1.0]), np.eye(3), np.asarray(position, dtype=np.float64))
    return StkRecord(np.asarray(position, dtype=np.float64), t, 1, basis, basis, quality, radius, order)


def single_frame(points) -> PointCloudSequence:
    return PointCloudSequence.from_arrays([np.asarray(points, dtype=np.float64)])


def fibonacci_sphere(n: int, radius: float = 1.0) -> np.ndarray:
    """近似均匀的球面点"""
    i = np.arange(n) + 0.5
    polar = np.arccos(1 - 2 * i / n)
    azimuth = np.pi * (1 + 5 ** 0.5) * i
    return radius * np.column_stack([np.cos(azimuth) * np.sin(polar),
                                     np.sin(azimuth) * np.sin(polar),
                                     np.cos(polar)])


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture(scope='session')
def wave_sequence():
    """12帧挥手序列（不做遮挡，静止部件每帧坐标相同）及运动掩码"""
    spec = SynthSpec(motion='wave', frames=12, points_per_frame=400, seed=3, translation=(0.0, 0.0, 0.0))
    return synth_generate(spec)


@pytest.fixture
def quiet_monitor(tmp_path, monkeypatch):
    """事件日志写到临时目录，控制台不输出"""
    monitor = RunMonitor(log_file=str(tmp_path / 'events.jsonl'), verbose=False)
    monkeypatch.setattr(monitor_module, '_monitor', monitor)
    return monitor
