"""
评估模块 - 跨视角/跨受试者评估、参数扫描

每个样本只提取一次特征（所需设置的特征并集），各设置共享。
"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from config import BENCHMARK_CONFIG
from core.exceptions import ManifestError, TooFewKeypoints, TooFewSamples
from core.geometry import PointCloudSequence
from data.depth import SequenceManifest, convert_manifest
from data.pcseq import load_pcseq
from data.synth import make_benchmark
from utils.formatter import ReportFormatter
from .pipeline import (
    SETTING_PARTS, SETTINGS, PipelineParams, SequenceFeatures, extract_features, fit_model, predict_features
)

PROTOCOLS = ('cross-view', 'cross-subject')
INDEX_COLUMNS = ('path', 'label', 'subject', 'view')
SWEEP_PARAMS = {'nk': int, 'theta_stk': float, 'theta_l': float, 'theta_g': float}


@dataclass
class Sample:
    """带标签的一段序列"""
    id: str
    label: str
    subject: int
    view: int
    seq: PointCloudSequence = field(repr=False)


@dataclass
class EvaluationResult:
    report: pd.DataFrame
    confusion: Dict[str, pd.DataFrame] = field(default_factory=dict)
    predictions: Dict[str, Dict[str, Optional[str]]] = field(default_factory=dict)

    def accuracy(self, setting: str) -> float:
        return float(self.report.loc[self.report['setting'] == setting, 'accuracy'].iloc[0])


# ==================== 数据来源 ====================

def load_sequence(path: Union[str, Path]) -> PointCloudSequence:
    """.pcseq 直接读取，.json 视为深度序列清单"""
    path = Path(path)
    if path.suffix.lower() == '.json':
        return convert_manifest(SequenceManifest.load(path))
    return load_pcseq(path)


def load_index(path: Union[str, Path]) -> List[Sample]:
    """
    读取样本索引CSV（列 path,label,subject,view，path相对CSV所在目录）

    Raises:
        ManifestError: 缺少列或文件无法读取
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype={'path': str, 'label': str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ManifestError(f"无法读取索引 {path}: {e}") from e
    missing = [c for c in INDEX_COLUMNS if c not in df.columns]
    if missing:
        raise ManifestError(f"索引 {path} 缺少列: {missing}")

    samples = []
    for row in df.itertuples(index=False):
        seq_path = path.parent / row.path
        sample_id = Path(row.path).with_suffix('').as_posix()
        samples.append(Sample(sample_id, str(row.label), int(row.subject), int(row.view),
                              load_sequence(seq_path)))
    print(f"[完成] 从 {path} 读取 {len(samples)} 个样本")
    return samples


def benchmark_samples(seed: Optional[int] = None, classes: Optional[List[str]] = None,
                      subjects: Optional[int] = None, frames: Optional[int] = None,
                      points: Optional[int] = None) -> List[Sample]:
    """合成多视角基准（默认规模取BENCHMARK_CONFIG）"""
    bench = make_benchmark(
        classes=classes, subjects=subjects, seed=seed,
        frames=frames or BENCHMARK_CONFIG['frames'],
        points=points or BENCHMARK_CONFIG['points_per_frame'],
    )
    return [Sample(b.id, b.label, b.subject, b.view, b.seq) for b in bench]


def benchmark_params(**overrides) -> PipelineParams:
    """合成基准的流程参数：码本和STK数量按数据规模缩小"""
    defaults = {'k': BENCHMARK_CONFIG['k'], 'nk': BENCHMARK_CONFIG['nk'], 'stride': BENCHMARK_CONFIG['stride']}
    defaults.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineParams.from_config(**defaults)


# ==================== 划分 ====================

def split_cross_view(samples: Sequence[Sample], train_views: Sequence[int],
                     test_views: Sequence[int]) -> Tuple[List[Sample], List[Sample]]:
    """
    按视角划分

    Raises:
        ValueError: 训练与测试视角有交集
        TooFewSamples: 某一侧为空
    """
    overlap = set(train_views) & set(test_views)
    if overlap:
        raise ValueError(f"训练视角与测试视角重叠: {sorted(overlap)}")
    train = [s for s in samples if s.view in set(train_views)]
    test = [s for s in samples if s.view in set(test_views)]
    if not train or not test:
        raise TooFewSamples(f"视角划分为空: 训练 {len(train)}，测试 {len(test)}")
    return train, test


def split_cross_subject(samples: Sequence[Sample],
                        train_subjects: Optional[Sequence[int]] = None) -> Tuple[List[Sample], List[Sample]]:
    """按受试者划分，默认前一半受试者（按编号）用于训练"""
    subjects = sorted({s.subject for s in samples})
    if train_subjects is None:
        train_subjects = subjects[:max(1, len(subjects) // 2)]
    chosen = set(train_subjects)
    train = [s for s in samples if s.subject in chosen]
    test = [s for s in samples if s.subject not in chosen]
    if not train or not test:
        raise TooFewSamples(f"受试者划分为空: 训练 {len(train)}，测试 {len(test)}")
    return train, test


# ==================== 评估 ====================

def _extract_all(samples: Sequence[Sample], params: PipelineParams, parts, monitor) -> Tuple[List[SequenceFeatures], float]:
    features = []
    frames = 0
    start = time.perf_counter()
    for sample in samples:
        features.append(extract_features(sample.seq, params, sample_id=sample.id, label=sample.label,
                                          subject=sample.subject, view=sample.view, parts=parts,
                                          monitor=monitor))
        frames += sample.seq.n_f
    elapsed = time.perf_counter() - start
    return features, 1000.0 * elapsed / max(1, frames)


def evaluate(samples: Sequence[Sample], protocol: str = 'cross-view', settings: Sequence[str] = SETTINGS,
             params: Optional[PipelineParams] = None, train_views: Optional[Sequence[int]] = None,
             test_views: Optional[Sequence[int]] = None, train_subjects: Optional[Sequence[int]] = None,
             monitor=None) -> EvaluationResult:
    """
    评估一组识别设置

    Args:
        samples: 带标签的样本
        protocol: 'cross-view' 或 'cross-subject'
        settings: 要评估的设置
        params: 流程参数（mode 会按设置替换）
        train_views/test_views: cross-view 的视角划分
        train_subjects: cross-subject 的训练受试者
        monitor: RunMonitor

    Returns:
        EvaluationResult；STK不足而无法分类的测试样本计为错误并记入 rejected
    """
    params = params or PipelineParams()
    unknown = [s for s in settings if s not in SETTINGS]
    if unknown:
        raise ValueError(f"未知的设置: {unknown}")
    if protocol == 'cross-view':
        train_views = BENCHMARK_CONFIG['train_views'] if train_views is None else list(train_views)
        test_views = BENCHMARK_CONFIG['test_views'] if test_views is None else list(test_views)
        train, test = split_cross_view(samples, train_views, test_views)
    elif protocol == 'cross-subject':
        train, test = split_cross_subject(samples, train_subjects)
        train_views = sorted({s.view for s in train})
        test_views = sorted({s.view for s in test})
    else:
        raise ValueError(f"未知的评估协议: {protocol}，可选 {PROTOCOLS}")

    parts = set().union(*(SETTING_PARTS[s] for s in settings))
    print(f"[同步] {protocol}: 训练 {len(train)} 个样本，测试 {len(test)} 个样本，提取特征 {sorted(parts)}")
    train_features, train_ms = _extract_all(train, params, parts, monitor)
    test_features, test_ms = _extract_all(test, params, parts, monitor)
    frame_ms = (train_ms * len(train) + test_ms * len(test)) / (len(train) + len(test))

    result = EvaluationResult(report=pd.DataFrame())
    rows = []
    for setting in settings:
        start = time.perf_counter()
        p = params.replace(mode=setting)
        model = fit_model(train_features, p, test_views=test_views if protocol == 'cross-view' else None,
                          monitor=monitor)

        predictions: Dict[str, Optional[str]] = {}
        rejected = 0
        for f in test_features:
            try:
                predictions[f.sample_id] = predict_features(model, f)[0]
            except TooFewKeypoints:
                predictions[f.sample_id] = None
                rejected += 1
        correct = sum(1 for f in test_features if predictions[f.sample_id] == f.label)

        rows.append({
            'setting': setting,
            'protocol': protocol,
            'train_views': ','.join(map(str, train_views)),
            'test_views': ','.join(map(str, test_views)),
            'n_train': len(train),
            'n_test': len(test),
            'accuracy': correct / len(test),
            'rejected': rejected,
            'seconds': time.perf_counter() - start,
            'frame_ms': frame_ms,
        })
        labels = model.classifier.classes
        truth = [f.label for f in test_features]
        predicted = [predictions[f.sample_id] for f in test_features]
        result.confusion[setting] = ReportFormatter.confusion_frame(labels, truth, predicted)
        result.predictions[setting] = predictions
        if monitor is not None:
            monitor.log_confusion(f"混淆矩阵 [{setting}]", labels, result.confusion[setting].values)
        print(f"[完成] {setting}: 准确率 {correct}/{len(test)} = {correct / len(test):.2%}")

    result.report = ReportFormatter.results_frame(rows)
    if monitor is not None:
        monitor.log_result(f"{protocol} 评估结果", rows)
    return result


def sweep(samples: Sequence[Sample], param: str, values: Sequence, setting: str = 'combined',
          protocol: str = 'cross-view', params: Optional[PipelineParams] = None,
          train_views: Optional[Sequence[int]] = None, test_views: Optional[Sequence[int]] = None,
          monitor=None) -> pd.DataFrame:
    """
    参数扫描：对 n_k、theta_stk、theta_l 或 theta_g 的每个取值重新评估

    Returns:
        DataFrame，前两列为 param、value
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"不支持扫描的参数: {param}，可选 {sorted(SWEEP_PARAMS)}")
    params = params or PipelineParams()
    rows = []
    for value in values:
        value = SWEEP_PARAMS[param](value)
        print(f"[同步] 扫描 {param} = {value}")
        result = evaluate(samples, protocol, [setting], params.replace(**{param: value}),
                          train_views, test_views, monitor=monitor)
        for row in result.report.to_dict('records'):
            rows.append({'param': param, 'value': value, **row})
    if monitor is not None:
        monitor.log_result(f"参数扫描 {param}", [{k: r[k] for k in ('param', 'value', 'accuracy')} for r in rows])
    return ReportFormatter.results_frame(rows, extra_columns=('param', 'value'))


if __name__ == "__main__":
    bench = benchmark_samples(subjects=2, frames=12, points=300)
    outcome = evaluate(bench, settings=['stkd', 'combined'], params=benchmark_params(k=20, nk=60))
    print(outcome.report.to_string(index=False))
