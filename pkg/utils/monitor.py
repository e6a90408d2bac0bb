"""
运行监控器 - 控制台展示检测/训练/评估过程，同时写入JSONL事件日志
"""
import json
import os
from datetime import datetime
from typing import Dict, List, Optional, Sequence

from rich import box
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from config import LOG_CONFIG

console = Console()


class RunMonitor:
    """运行监控器 - rich表格输出 + JSONL持久化"""

    def __init__(self, log_file: Optional[str] = None, verbose: Optional[bool] = None):
        """
        初始化监控器

        Args:
            log_file: 事件日志路径，默认 logs/hopc_events.jsonl
            verbose: 是否在控制台输出
        """
        self.log_file = log_file or os.path.join(LOG_CONFIG['log_dir'], LOG_CONFIG['files']['events'])
        self.verbose = LOG_CONFIG['verbose'] if verbose is None else verbose
        self.ensure_log_dir()

    def ensure_log_dir(self):
        """确保日志目录存在"""
        log_dir = os.path.dirname(self.log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

    @staticmethod
    def _timestamp() -> str:
        return datetime.now().strftime('%Y-%m-%d %H:%M:%S.%f')[:-3]

    def log_header(self, command: str, params: Dict):
        """
        记录复现信息（所有参数、随机种子、sigma、r）

        Args:
            command: 子命令
            params: 参数字典
        """
        timestamp = self._timestamp()
        if self.verbose:
            table = Table(title=f"hopc {command} [{timestamp}]", show_header=False, box=box.SIMPLE)
            table.add_column("参数", style="cyan")
            table.add_column("数值", style="yellow")
            for key, value in params.items():
                table.add_row(str(key), str(value))
            console.print(table)
        self._write_to_log({'timestamp': timestamp, 'type': 'header', 'command': command,
                            'params': params})

    def log_detection(self, sample_id: str, stats, r: float, tau_m: int):
        """记录一段序列的STK检测统计"""
        timestamp = self._timestamp()
        frame_ms = [round(1000 * s, 2) for s in stats.frame_seconds]
        entry = {
            'timestamp': timestamp,
            'type': 'detection',
            'sample': sample_id,
            'r': r,
            'tau_m': tau_m,
            'candidates': stats.candidates,
            'scale_rejected': stats.scale_rejected,
            'ratio_rejected': stats.ratio_rejected,
            'quality_rejected': stats.quality_rejected,
            'survivors': stats.survivors,
            'kept': stats.kept,
            'frame_ms': frame_ms,
        }
        if self.verbose:
            mean_ms = sum(frame_ms) / len(frame_ms) if frame_ms else 0.0
            console.print(f"[同步] {sample_id}: 候选 {stats.candidates}，尺度丢弃 {stats.scale_rejected}，"
                          f"特征值比丢弃 {stats.ratio_rejected}，质量丢弃 {stats.quality_rejected}，"
                          f"保留 {stats.kept} STK（每帧 {mean_ms:.1f} ms）")
        self._write_to_log(entry)

    def log_stkd(self, sample_id: str, iterations: int, retained: int, constraints_met: bool):
        """记录STK-D精炼迭代次数"""
        self._write_to_log({'timestamp': self._timestamp(), 'type': 'stkd', 'sample': sample_id,
                            'iterations': iterations, 'retained': retained,
                            'constraints_met': constraints_met})

    def log_warning(self, message: str, **metadata):
        if self.verbose:
            console.print(f"[yellow][警告] {message}[/yellow]")
        self._write_to_log({'timestamp': self._timestamp(), 'type': 'warning', 'message': message,
                            'metadata': metadata})

    def log_result(self, title: str, rows: List[Dict]):
        """
        以表格显示结果

        Args:
            title: 标题
            rows: 每行一个字典，列取第一行的键
        """
        if self.verbose and rows:
            table = Table(title=title, box=box.ROUNDED)
            for key in rows[0]:
                table.add_column(str(key), style="cyan" if key == 'setting' else None)
            for row in rows:
                table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row.values()])
            console.print(table)
        self._write_to_log({'timestamp': self._timestamp(), 'type': 'result', 'title': title,
                            'rows': rows})

    def log_confusion(self, title: str, labels: Sequence[str], matrix):
        """显示混淆矩阵（行为真实类别，列为预测类别）"""
        if self.verbose:
            table = Table(title=title, box=box.ROUNDED)
            table.add_column("真实\\预测", style="cyan")
            for label in labels:
                table.add_column(str(label), justify="right")
            for label, row in zip(labels, matrix):
                table.add_row(str(label), *[str(int(v)) for v in row])
            console.print(table)
        self._write_to_log({'timestamp': self._timestamp(), 'type': 'confusion', 'title': title,
                            'labels': list(labels), 'matrix': [[int(v) for v in row] for row in matrix]})

    def log_prediction(self, label: str, scores: Dict[str, float]):
        if self.verbose:
            console.print(Panel(
                "\n".join(f"{k}: {v:+.6f}" for k, v in scores.items()),
                title=f"[bold green]预测: {label}[/bold green]",
                border_style="green",
            ))
        self._write_to_log({'timestamp': self._timestamp(), 'type': 'prediction', 'label': label,
                            'scores': scores})

    def _write_to_log(self, data: dict):
        """写入日志文件"""
        try:
            with open(self.log_file, 'a', encoding='utf-8') as f:
                f.write(json.dumps(data, ensure_ascii=False, default=str) + '\n')
        except OSError as e:
            console.print(f"[red]写入日志失败: {e}[/red]")

    def show_summary(self):
        """按事件类型统计日志"""
        if not os.path.exists(self.log_file):
            console.print("[yellow]暂无运行记录[/yellow]")
            return
        counts: Dict[str, int] = {}
        with open(self.log_file, 'r', encoding='utf-8') as f:
            for line in f:
                try:
                    kind = json.loads(line).get('type', 'unknown')
                except json.JSONDecodeError:
                    continue
                counts[kind] = counts.get(kind, 0) + 1
        table = Table(show_header=False, box=box.ROUNDED)
        table.add_column("事件", style="cyan")
        table.add_column("次数", style="yellow")
        for kind, n in sorted(counts.items()):
            table.add_row(kind, str(n))
        console.print(table)


# 全局监控器实例
_monitor = None


def get_monitor(log_file: Optional[str] = None, verbose: Optional[bool] = None) -> RunMonitor:
    """获取全局监控器实例"""
    global _monitor
    if _monitor is None or log_file is not None:
        _monitor = RunMonitor(log_file=log_file, verbose=verbose)
    elif verbose is not None:
        _monitor.verbose = verbose
    return _monitor
