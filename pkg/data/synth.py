"""
合成数据模块 - 关节棒状人体点云序列生成

人体由圆柱（躯干、四肢）和球（头部）组成，表面采样点在局部坐标系中固定，
随关节运动；动作类型 wave / punch / sit / raise 按相位周期运动，
speed为整段序列内完成的周期数。最后经过相机位姿变换，可选只保留朝向相机的表面
（模拟单视角深度采集）和仅作用于z的噪声。
"""
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from config import BENCHMARK_CONFIG, HOPC_SEED, SYNTH_CONFIG
from core.geometry import PointCloudFrame, PointCloudSequence, rotation_matrix

MOTIONS = ('wave', 'punch', 'sit', 'raise')


@dataclass
class BodyProportions:
    """身体各部分尺寸（身高的比例）"""
    shoulder: float = 0.12
    upper_arm: float = 0.17
    forearm: float = 0.16
    thigh: float = 0.25
    shin: float = 0.24
    torso_length: float = 0.29
    torso_radius: float = 0.085
    head_radius: float = 0.065
    arm_radius: float = 0.03
    leg_radius: float = 0.04

    @classmethod
    def for_subject(cls, subject_id: int, spread: float = 0.08) -> 'BodyProportions':
        """按受试者编号生成确定的体型差异"""
        rng = np.random.default_rng(10007 + subject_id)
        base = asdict(cls())
        return cls(**{k: v * (1 + spread * (2 * rng.random() - 1)) for k, v in base.items()})


@dataclass
class SynthSpec:
    """合成序列参数，角度单位为度"""
    motion: str = 'wave'
    speed: float = 1.0
    height: float = SYNTH_CONFIG['height']
    yaw: float = 0.0
    pitch: float = 0.0
    translation: Tuple[float, float, float] = (0.0, 0.0, SYNTH_CONFIG['distance'])
    noise: float = SYNTH_CONFIG['noise']
    frames: int = SYNTH_CONFIG['frames']
    seed: int = HOPC_SEED
    points_per_frame: int = SYNTH_CONFIG['points_per_frame']
    phase: float = 0.0
    occlusion: bool = False
    subject_id: int = 0
    proportions: Optional[BodyProportions] = None

    def __post_init__(self):
        if self.motion not in MOTIONS:
            raise ValueError(f"未知的动作: {self.motion}，可选 {MOTIONS}")
        if self.frames < 4:
            raise ValueError(f"帧数必须 >= 4: {self.frames}")
        if self.speed <= 0:
            raise ValueError(f"速度必须为正: {self.speed}")
        if self.height <= 0 or self.noise < 0 or self.points_per_frame < 1:
            raise ValueError("height > 0, noise >= 0, points_per_frame >= 1")
        if isinstance(self.proportions, dict):
            self.proportions = BodyProportions(**self.proportions)
        self.translation = tuple(float(v) for v in self.translation)

    @property
    def body(self) -> BodyProportions:
        return self.proportions or BodyProportions.for_subject(self.subject_id, spread=0.0)

    @property
    def camera_rotation(self) -> np.ndarray:
        return rotation_matrix(math.radians(self.yaw), math.radians(self.pitch))

    def to_dict(self) -> dict:
        data = asdict(self)
        data['translation'] = list(self.translation)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'SynthSpec':
        return cls(**data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'SynthSpec':
        return cls.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


# ==================== 骨架 ====================

def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def _rz(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


_DOWN = np.array([0.0, -1.0, 0.0])


def _envelope(phase: float) -> float:
    """0 -> 1 -> 0 的平滑周期包络"""
    return 0.5 * (1 - math.cos(2 * math.pi * phase))


def skeleton(motion: str, phase: float, height: float, body: BodyProportions) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    各部件的局部坐标系

    Returns:
        {部件名: (原点, 旋转)}，圆柱沿局部 -y 方向延伸，受试者面向 -z
    """
    H = height
    e = _envelope(phase)
    drop = 0.0
    thigh_r = [np.eye(3), np.eye(3)]
    knee_r = [np.eye(3), np.eye(3)]
    arm_r = [np.eye(3), np.eye(3)]       # 右(+x)、左(-x)
    elbow_r = [np.eye(3), np.eye(3)]

    if motion == 'wave':
        arm_r[0] = _rz(2.4)
        elbow_r[0] = _rz(0.7 * math.sin(2 * math.pi * phase))
    elif motion == 'punch':
        arm_r[0] = _rx(0.5 * math.pi * e)
        elbow_r[0] = _rx(1.6 * (1 - e))
    elif motion == 'sit':
        b = (math.pi / 2.2) * e
        thigh_r = [_rx(b), _rx(b)]
        knee_r = [_rx(-b), _rx(-b)]
        drop = body.thigh * H * (1 - math.cos(b))
    elif motion == 'raise':
        a = 0.85 * math.pi * e
        arm_r = [_rz(a), _rz(-a)]
    else:
        raise ValueError(f"未知的动作: {motion}")

    hip_y = 0.53 * H - drop
    neck_y = hip_y + body.torso_length * H
    parts = {
        'torso': (np.array([0.0, neck_y, 0.0]), np.eye(3)),
        'head': (np.array([0.0, neck_y + 0.09 * H, 0.0]), np.eye(3)),
    }
    for side, sign in ((0, 1.0), (1, -1.0)):
        shoulder = np.array([sign * body.shoulder * H, neck_y - 0.01 * H, 0.0])
        elbow = shoulder + arm_r[side] @ _DOWN * body.upper_arm * H
        parts[f'upper_arm_{side}'] = (shoulder, arm_r[side])
        parts[f'forearm_{side}'] = (elbow, arm_r[side] @ elbow_r[side])

        hip = np.array([sign * 0.055 * H, hip_y, 0.0])
        knee = hip + thigh_r[side] @ _DOWN * body.thigh * H
        parts[f'thigh_{side}'] = (hip, thigh_r[side])
        parts[f'shin_{side}'] = (knee, thigh_r[side] @ knee_r[side])
    return parts


def _part_shapes(height: float, body: BodyProportions) -> Dict[str, Tuple[str, float, float]]:
    """{部件名: (形状, 长度, 半径)}"""
    H = height
    shapes = {
        'torso': ('cylinder', body.torso_length * H, body.torso_radius * H),
        'head': ('sphere', 0.0, body.head_radius * H),
    }
    for side in (0, 1):
        shapes[f'upper_arm_{side}'] = ('cylinder', body.upper_arm * H, body.arm_radius * H)
        shapes[f'forearm_{side}'] = ('cylinder', body.forearm * H, 0.85 * body.arm_radius * H)
        shapes[f'thigh_{side}'] = ('cylinder', body.thigh * H, body.leg_radius * H)
        shapes[f'shin_{side}'] = ('cylinder', body.shin * H, 0.8 * body.leg_radius * H)
    return shapes


@dataclass
class SurfaceSamples:
    """固定在各部件局部坐标系中的表面采样点"""
    part: np.ndarray             # (N,) 部件编号
    local: np.ndarray            # (N, 3) 局部坐标
    normal: np.ndarray           # (N, 3) 局部法向
    names: List[str] = field(default_factory=list)


def sample_surface(height: float, body: BodyProportions, n_points: int,
                   rng: np.random.Generator) -> SurfaceSamples:
    """按表面积分配采样点数"""
    shapes = _part_shapes(height, body)
    names = list(shapes)
    areas = np.array([2 * math.pi * r * L if kind == 'cylinder' else 4 * math.pi * r * r
                      for kind, L, r in shapes.values()])
    counts = np.floor(areas / areas.sum() * n_points).astype(int)
    counts[np.argmax(areas)] += n_points - counts.sum()

    parts, local, normal = [], [], []
    for i, name in enumerate(names):
        kind, L, r = shapes[name]
        n = counts[i]
        if kind == 'cylinder':
            s = rng.random(n)
            theta = 2 * math.pi * rng.random(n)
            nrm = np.column_stack([np.cos(theta), np.zeros(n), np.sin(theta)])
            pts = nrm * r + np.outer(s, _DOWN * L)
        else:
            nrm = rng.normal(size=(n, 3))
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
            pts = nrm * r
        parts.append(np.full(n, i))
        local.append(pts)
        normal.append(nrm)
    return SurfaceSamples(np.concatenate(parts), np.concatenate(local), np.concatenate(normal), names)


def pose_points(samples: SurfaceSamples, parts: Dict[str, Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    """表面点与法向变换到身体坐标系"""
    points = np.empty_like(samples.local)
    normals = np.empty_like(samples.normal)
    for i, name in enumerate(samples.names):
        rows = samples.part == i
        origin, R = parts[name]
        points[rows] = samples.local[rows] @ R.T + origin
        normals[rows] = samples.normal[rows] @ R.T
    return points, normals


# ==================== 序列生成 ====================

def synth_generate(spec: SynthSpec) -> Tuple[PointCloudSequence, List[np.ndarray]]:
    """
    生成合成序列

    Args:
        spec: 合成参数

    Returns:
        (点云序列, 每帧每个点是否属于运动部件的布尔掩码)
    """
    rng = np.random.default_rng(spec.seed)
    body = spec.body
    samples = sample_surface(spec.height, body, spec.points_per_frame, rng)

    posed = []
    for k in range(spec.frames):
        phase = spec.phase + spec.speed * k / spec.frames
        posed.append(pose_points(samples, skeleton(spec.motion, phase, spec.height, body)))

    rest = posed[0][0]
    displacement = np.max([np.linalg.norm(p - rest, axis=1) for p, _ in posed], axis=0)
    moving_all = displacement > 1e-9 * spec.height

    R = spec.camera_rotation
    t = np.asarray(spec.translation)
    frames, masks = [], []
    for k, (points, normals) in enumerate(posed):
        cam = points @ R.T + t
        keep = np.ones(len(cam), dtype=bool)
        if spec.occlusion:
            keep = np.einsum('ij,ij->i', normals @ R.T, -cam) > 0
        cam = cam[keep]
        if spec.noise > 0:
            cam[:, 2] += rng.normal(scale=spec.noise, size=len(cam))
        frames.append(PointCloudFrame(k + 1, cam))
        masks.append(moving_all[keep])
    return PointCloudSequence(frames), masks


@dataclass
class BenchmarkSample:
    """合成基准中的一段序列"""
    id: str
    label: str
    subject: int
    view: int
    seq: PointCloudSequence
    moving: List[np.ndarray] = field(repr=False, default_factory=list)


def benchmark_spec(label: str, subject: int, view: int, views: List[float], seed: int,
                   frames: Optional[int] = None, points: Optional[int] = None,
                   noise: Optional[float] = None) -> SynthSpec:
    """基准中单个样本的合成参数"""
    rng = np.random.default_rng([seed, subject, MOTIONS.index(label)])
    body = BodyProportions.for_subject(subject)
    height = SYNTH_CONFIG['height'] * (0.92 + 0.16 * rng.random())
    return SynthSpec(
        motion=label,
        speed=0.9 + 0.2 * rng.random(),
        height=height,
        yaw=float(views[view]),
        noise=SYNTH_CONFIG['noise'] if noise is None else noise,
        frames=frames or SYNTH_CONFIG['frames'],
        seed=int(rng.integers(2 ** 31)) + view,
        points_per_frame=points or SYNTH_CONFIG['points_per_frame'],
        phase=0.1 * rng.random(),
        occlusion=True,
        subject_id=subject,
        proportions=body,
    )


def make_benchmark(classes: Optional[List[str]] = None, subjects: Optional[int] = None,
                   views: Optional[List[float]] = None, seed: Optional[int] = None,
                   frames: Optional[int] = None, points: Optional[int] = None,
                   noise: Optional[float] = None) -> List[BenchmarkSample]:
    """
    多视角合成基准：动作类别 x 受试者 x 相机视角

    同一受试者同一动作在不同视角下是同一段运动，只有相机偏航角和采样不同。
    """
    classes = classes or BENCHMARK_CONFIG['classes']
    subjects = BENCHMARK_CONFIG['subjects'] if subjects is None else subjects
    views = views or BENCHMARK_CONFIG['views']
    seed = HOPC_SEED if seed is None else seed

    samples = []
    for label in classes:
        for subject in range(subjects):
            for view in range(len(views)):
                spec = benchmark_spec(label, subject, view, views, seed, frames, points, noise)
                seq, moving = synth_generate(spec)
                samples.append(BenchmarkSample(f"{label}_s{subject}_v{view}", label, subject, view,
                                               seq, moving))
    return samples
