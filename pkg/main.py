"""
主程序 - hopc 命令行入口

退出码: 0 成功，2 用法/参数错误，3 数据错误
"""
import argparse
import dataclasses
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from config import HOPC_SEED, LOG_CONFIG, validate_config
from core import HopcError, TooFewKeypoints, spatial_scale, detect, describe_stks, holistic_hopc, stkd
from core.detector import DetectionStats
from data import (
    DescriptorFile, SequenceManifest, SynthSpec, convert_manifest, export_ply, load_descriptors,
    load_pcseq, load_stks, save_descriptors, save_pcseq, save_stks, synth_generate
)
from recognition import (
    PipelineParams, benchmark_params, benchmark_samples, classify_sequence, evaluate,
    features_from_descriptors, fit_model, kmeans, load_codebook, load_index, load_model,
    mine_codewords, save_codebook, save_model, sweep
)
from recognition.evaluate import PROTOCOLS, SWEEP_PARAMS
from recognition.pipeline import SETTINGS
from utils import ReportFormatter, get_monitor

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3

# 命令行参数名 -> PipelineParams字段
PARAM_ARGS = {
    'mode': 'mode', 'sigma': 'sigma', 'tau_max': 'tau_max', 'temporal_mode': 'temporal_mode',
    'theta_stk': 'theta_stk', 'nk': 'nk', 'stride': 'stride', 'grid': 'grid', 'theta_l': 'theta_l',
    'theta_g': 'theta_g', 'tau': 'holistic_tau', 'k': 'k', 'seed': 'seed', 'keep': 'keep_fraction',
    'c': 'c', 'vertex_mode': 'vertex_mode',
}


class Logger:
    """同时输出到终端和文件的日志类"""
    def __init__(self, filename):
        self.terminal = sys.stdout
        self.log = open(filename, 'a', encoding='utf-8')

    def write(self, message):
        self.terminal.write(message)
        self.log.write(message)
        self.log.flush()

    def flush(self):
        self.terminal.flush()
        self.log.flush()


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"需要逗号分隔的整数: {text}")


def _params(args, base: Optional[PipelineParams] = None) -> PipelineParams:
    """命令行参数覆盖默认流程参数"""
    overrides = {field: getattr(args, name) for name, field in PARAM_ARGS.items()
                 if getattr(args, name, None) is not None}
    if getattr(args, 'radius', None) is not None:
        overrides.update(spatial_mode='constant', constant_radius=args.radius)
    base = base or PipelineParams()
    return base.replace(**overrides)


def _header(params: PipelineParams, **extra) -> Dict:
    """复现信息：全部参数 + 随机种子、sigma、r"""
    return {**params.to_dict(), 'm_k': params.m_k, **extra}


def _descriptor_files(directory: str) -> List[Path]:
    files = sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix in ('.bin', '.npz'))
    if not files:
        raise FileNotFoundError(f"{directory} 中没有描述子文件")
    return files


# ==================== 子命令 ====================

def cmd_convert(args, monitor):
    manifest = SequenceManifest.load(args.manifest)
    monitor.log_header('convert', {'manifest': args.manifest, **manifest.to_dict()})
    seq = convert_manifest(manifest, workers=args.workers)
    save_pcseq(seq, args.out)
    print(ReportFormatter.format_sequence_summary(seq, manifest.id))
    print(f"[完成] 已写出 {args.out}")


def cmd_synth(args, monitor):
    spec = SynthSpec.load(args.spec) if args.spec else SynthSpec(motion=args.motion)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    monitor.log_header('synth', spec.to_dict())
    seq, _ = synth_generate(spec)
    save_pcseq(seq, args.out)
    print(ReportFormatter.format_sequence_summary(seq, spec.motion))
    print(f"[完成] 已写出 {args.out}")


def cmd_detect(args, monitor):
    params = _params(args)
    seq = load_pcseq(args.input)
    scale = params.scale_params()
    r = spatial_scale(seq, scale)
    tau_m = scale.resolve_tau_max(seq.n_f)
    header = _header(params, r=r, tau_m=tau_m, source=args.input)
    monitor.log_header('detect', header)

    stats = DetectionStats()
    stks = detect(seq, params.detector_params(r), scale_params=scale, dirs=params.directions(), stats=stats)
    monitor.log_detection(Path(args.input).stem, stats, r, tau_m)
    save_stks(args.out, stks, header)
    print(f"[完成] {len(stks)} 个STK已写出 {args.out}")


def cmd_describe(args, monitor):
    params = _params(args)
    seq = load_pcseq(args.input)
    stks, stk_meta = load_stks(args.stks)
    r = stk_meta.get('r') or spatial_scale(seq, params.scale_params())
    meta = _header(params, r=r, tau_m=stk_meta.get('tau_m'), sample=args.id or Path(args.input).stem,
                   label=args.label, subject=args.subject, view=args.view)
    monitor.log_header('describe', meta)

    local = describe_stks(stks, seq, params.cell_grid(), params.theta_l, params.directions(), r)
    desc = DescriptorFile(local=local)
    try:
        result = stkd(stks, params.theta_g, params.m_k, params.min_keep, params.normalization)
        desc.stkd = result.histogram
        meta.update(stkd_retained=result.retained, stkd_iterations=result.iterations,
                    stkd_constraints_met=result.constraints_met)
        monitor.log_stkd(meta['sample'], result.iterations, result.retained, result.constraints_met)
    except TooFewKeypoints as e:
        meta['stkd_error'] = str(e)
        monitor.log_warning(f"{meta['sample']}: {e}")
    desc.meta = meta
    save_descriptors(args.out, desc)
    print(f"[完成] {len(local)} 个Local HOPC描述子已写出 {args.out}")


def cmd_holistic(args, monitor):
    params = _params(args)
    if args.grid is not None:
        params = params.replace(holistic_grid=args.grid, grid=PipelineParams().grid)
    seq = load_pcseq(args.input)
    r = spatial_scale(seq, params.scale_params())
    meta = _header(params, r=r, sample=args.id or Path(args.input).stem, label=args.label,
                   subject=args.subject, view=args.view)
    monitor.log_header('holistic', meta)
    vector = holistic_hopc(seq, params.holistic_cell_grid(), params.holistic_tau, params.directions(), r,
                           params.holistic_stride)
    save_descriptors(args.out, DescriptorFile(holistic=vector, meta=meta))
    print(f"[完成] Holistic HOPC（{len(vector)}维）已写出 {args.out}")


def cmd_codebook(args, monitor):
    params = _params(args)
    files = [load_descriptors(p) for p in _descriptor_files(args.descs)]
    local = [d.local for d in files if d.local is not None and len(d.local)]
    if not local:
        raise TooFewKeypoints(f"{args.descs} 中没有Local HOPC描述子")
    monitor.log_header('codebook', _header(params, descs=args.descs, files=len(files)))
    codebook = kmeans(np.vstack(local), params.k, params.seed, params.max_iter)
    codebook.views = sorted({int(d.meta['view']) for d in files if d.meta.get('view') is not None})
    save_codebook(args.out, codebook, meta=_header(params))
    print(f"[完成] K={codebook.k} 码本已写出 {args.out}（inertia {codebook.inertia:.4f}）")


def _read_labels(path: Optional[str]) -> Dict[str, str]:
    if not path:
        return {}
    df = pd.read_csv(path, dtype=str)
    if not {'id', 'label'} <= set(df.columns):
        raise ValueError(f"标签文件 {path} 需要 id,label 两列")
    return dict(zip(df['id'], df['label']))


def cmd_train(args, monitor):
    params = _params(args)
    labels = _read_labels(args.labels)
    features = []
    for path in _descriptor_files(args.features):
        desc = load_descriptors(path)
        sample = str(desc.meta.get('sample', path.stem))
        features.append(features_from_descriptors(desc, labels.get(sample)))
    unlabeled = [f.sample_id for f in features if f.label is None]
    if unlabeled:
        raise ValueError(f"以下样本没有标签: {unlabeled[:5]}")
    monitor.log_header('train', _header(params, features=args.features, samples=len(features)))

    codebook = None
    if args.codebook and 'local' in params.parts:
        codebook, _ = load_codebook(args.codebook)
        usable = [f for f in features if not ('stkd' in params.parts and f.stkd is None)]
        codebook = mine_codewords(codebook, usable, [f.label for f in usable], params, monitor)
    model = fit_model(features, params, codebook, monitor=monitor)
    save_model(args.out, model, meta={'features': args.features})
    kept = f"，保留码字 {model.codebook.n_kept}/{model.codebook.k}" if model.codebook is not None else ''
    print(f"[完成] {len(model.classifier.classes)} 个类别的模型已写出 {args.out}{kept}")


def cmd_classify(args, monitor):
    model = load_model(args.model)
    seq = load_pcseq(args.input)
    r = spatial_scale(seq, model.params.scale_params())
    monitor.log_header('classify', _header(model.params, r=r, model=args.model, source=args.input))
    label, scores = classify_sequence(model, seq, sample_id=Path(args.input).stem, monitor=monitor)
    monitor.log_prediction(label, scores)
    print(label)
    for cls, score in scores.items():
        print(f"{cls}\t{score:+.6f}")


def _samples(args):
    if args.index:
        return load_index(args.index)
    return benchmark_samples(seed=args.seed, subjects=args.subjects, frames=args.frames, points=args.points)


def _eval_params(args) -> PipelineParams:
    base = None if args.index else benchmark_params()
    return _params(args, base)


def cmd_evaluate(args, monitor):
    params = _eval_params(args)
    settings = list(SETTINGS) if args.settings == 'all' else args.settings.split(',')
    header = _header(params, protocol=args.protocol, settings=settings, train_views=args.train_views,
                     test_views=args.test_views, index=args.index or 'synthetic')
    monitor.log_header('evaluate', header)
    result = evaluate(_samples(args), args.protocol, settings, params, args.train_views, args.test_views,
                      args.train_subjects, monitor=monitor)
    if args.out:
        ReportFormatter.write_report(result.report, args.out, header)
        print(f"[完成] 报告已写出 {args.out}")


def cmd_sweep(args, monitor):
    params = _eval_params(args)
    header = _header(params, sweep=args.param, values=args.values, setting=args.setting,
                     index=args.index or 'synthetic')
    monitor.log_header('sweep', header)
    report = sweep(_samples(args), args.param, args.values.split(','), args.setting, args.protocol, params,
                   args.train_views, args.test_views, monitor=monitor)
    if args.out:
        ReportFormatter.write_report(report, args.out, header)
        print(f"[完成] 报告已写出 {args.out}")


def cmd_export_ply(args, monitor):
    stks, meta = load_stks(args.stks)
    monitor.log_header('export-ply', {'stks': args.stks, 'count': len(stks)})
    export_ply(stks, args.out, meta={k: v for k, v in meta.items() if k != 'kind'})
    print(f"[完成] {len(stks)} 个STK已写出 {args.out}")


# ==================== 参数解析 ====================

def _add_scale_args(p):
    p.add_argument('--sigma', type=float, help='空间尺度 r = sigma * 身高')
    p.add_argument('--radius', type=float, help='直接指定空间尺度 r（所有受试者相同）')
    p.add_argument('--tau-max', dest='tau_max', type=int, help='最大时间尺度，默认 ceil(0.2 * n_f)')
    p.add_argument('--temporal-mode', dest='temporal_mode', choices=['auto', 'constant'])
    p.add_argument('--vertex-mode', dest='vertex_mode', choices=['normalized', 'raw'])


def _add_detect_args(p):
    p.add_argument('--theta-stk', dest='theta_stk', type=float)
    p.add_argument('--nk', type=int)
    p.add_argument('--stride', type=int)


def _add_descriptor_args(p):
    p.add_argument('--grid', help='单元划分，如 2x2x3')
    p.add_argument('--theta-l', dest='theta_l', type=float)
    p.add_argument('--theta-g', dest='theta_g', type=float)


def _add_provenance_args(p):
    p.add_argument('--id', help='样本编号，默认取输入文件名')
    p.add_argument('--label')
    p.add_argument('--subject', type=int)
    p.add_argument('--view', type=int)


def _add_eval_args(p):
    p.add_argument('--index', help='样本索引CSV（path,label,subject,view），默认使用合成基准')
    p.add_argument('--protocol', choices=PROTOCOLS, default='cross-view')
    p.add_argument('--train-views', dest='train_views', type=_int_list)
    p.add_argument('--test-views', dest='test_views', type=_int_list)
    p.add_argument('--train-subjects', dest='train_subjects', type=_int_list)
    p.add_argument('--subjects', type=int, help='合成基准的受试者数')
    p.add_argument('--frames', type=int, help='合成基准的帧数')
    p.add_argument('--points', type=int, help='合成基准每帧点数')
    p.add_argument('--seed', type=int)
    p.add_argument('--k', type=int)
    p.add_argument('--keep', type=float)
    p.add_argument('--c', type=float)
    _add_scale_args(p)
    _add_detect_args(p)
    _add_descriptor_args(p)
    p.add_argument('--out', help='CSV报告')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='hopc', description='HOPC点云动作识别')
    parser.add_argument('--quiet', action='store_true', help='不在控制台显示表格')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('convert', help='深度序列清单 -> .pcseq')
    p.add_argument('--manifest', required=True)
    p.add_argument('--workers', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser('synth', help='生成合成点云序列')
    p.add_argument('--spec', help='SynthSpec JSON')
    p.add_argument('--motion', default='wave')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('detect', help='检测STK')
    p.add_argument('--in', dest='input', required=True)
    _add_scale_args(p)
    _add_detect_args(p)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser('describe', help='Local HOPC + STK-D')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--stks', required=True)
    _add_scale_args(p)
    _add_descriptor_args(p)
    _add_provenance_args(p)
    p.add_argument('--nk', type=int, help='用于默认 m_k')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser('holistic', help='Holistic HOPC')
    p.add_argument('--in', dest='input', required=True)
    p.add_argument('--grid', help='单元划分，默认 6x5x3')
    p.add_argument('--tau', type=int)
    _add_scale_args(p)
    _add_provenance_args(p)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_holistic)

    p = sub.add_parser('codebook', help='K-means码本')
    p.add_argument('--descs', required=True, help='描述子文件目录')
    p.add_argument('--k', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_codebook)

    p = sub.add_parser('train', help='训练HIK-SVM模型')
    p.add_argument('--features', required=True, help='描述子文件目录')
    p.add_argument('--labels', help='标签CSV（id,label），缺省使用描述子文件中的label')
    p.add_argument('--codebook')
    p.add_argument('--mode', choices=SETTINGS)
    p.add_argument('--k', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--keep', type=float)
    p.add_argument('--c', type=float)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('classify', help='对一段序列分类')
    p.add_argument('--model', required=True)
    p.add_argument('--in', dest='input', required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser('evaluate', help='跨视角/跨受试者评估')
    p.add_argument('--settings', default='all', help="逗号分隔的设置或 'all'")
    _add_eval_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('sweep', help='参数扫描')
    p.add_argument('--param', required=True, choices=sorted(SWEEP_PARAMS))
    p.add_argument('--values', required=True, help='逗号分隔的取值')
    p.add_argument('--setting', choices=SETTINGS, default='combined')
    _add_eval_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('export-ply', help='STK导出为PLY')
    p.add_argument('--stks', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_export_ply)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数，返回退出码"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    monitor = get_monitor(verbose=False if args.quiet else None)
    try:
        validate_config()
        args.func(args, monitor)
    except (HopcError, OSError) as e:
        print(f"[失败] {e}")
        return EXIT_DATA
    except ValueError as e:
        print(f"[失败] 参数错误: {e}")
        return EXIT_USAGE
    except Exception as e:
        print(f"[失败] 输入无法解析: {type(e).__name__}: {e}")
        import traceback
        traceback.print_exc()
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    # 设置日志文件
    log_dir = LOG_CONFIG['log_dir']
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    log_file = os.path.join(log_dir, LOG_CONFIG['files']['main'].format(date=datetime.now().strftime('%Y%m%d')))
    sys.stdout = Logger(log_file)
    sys.stderr = sys.stdout

    print(f"[日志] 日志文件: {log_file}  种子: {HOPC_SEED}")

    sys.exit(main())
