"""
报告格式化模块 - 评估结果表、复现信息头与序列概要
"""
import os
from datetime import datetime
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

REPORT_COLUMNS = ['setting', 'protocol', 'train_views', 'test_views', 'n_train', 'n_test',
                  'accuracy', 'rejected', 'seconds', 'frame_ms']


class ReportFormatter:
    """报告格式化器"""

    @staticmethod
    def format_header(params: Dict) -> List[str]:
        """
        复现信息头，每行以 '#' 开头

        Args:
            params: 运行参数（含种子、sigma、r等）
        """
        lines = [f"# hopc report {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}"]
        for key, value in params.items():
            lines.append(f"# {key}: {value}")
        return lines

    @staticmethod
    def write_report(df: pd.DataFrame, path: str, params: Optional[Dict] = None) -> str:
        """写出带注释头的CSV报告"""
        directory = os.path.dirname(path)
        if directory and not os.path.exists(directory):
            os.makedirs(directory)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            for line in ReportFormatter.format_header(params or {}):
                f.write(line + '\n')
            df.to_csv(f, index=False, float_format='%.6f')
        return path

    @staticmethod
    def read_report(path: str) -> pd.DataFrame:
        return pd.read_csv(path, comment='#')

    @staticmethod
    def results_frame(rows: List[Dict], extra_columns: Sequence[str] = ()) -> pd.DataFrame:
        """结果行 -> DataFrame，列顺序固定"""
        columns = list(extra_columns) + REPORT_COLUMNS
        df = pd.DataFrame(rows)
        for column in columns:
            if column not in df.columns:
                df[column] = np.nan
        return df[columns]

    @staticmethod
    def confusion_frame(labels: Sequence[str], truth: Sequence[str], predicted: Sequence[str]) -> pd.DataFrame:
        """混淆矩阵，行为真实类别，列为预测类别"""
        cat = pd.CategoricalDtype(categories=list(labels))
        table = pd.crosstab(pd.Series(list(truth), dtype=cat, name='truth'),
                            pd.Series(list(predicted), dtype=cat, name='predicted'),
                            dropna=False)
        return table.reindex(index=list(labels), columns=list(labels), fill_value=0)

    @staticmethod
    def format_sequence_summary(seq, name: str = '') -> str:
        """序列概要：帧数、点数、包围盒"""
        counts = [len(f) for f in seq.frames]
        non_empty = [f.points for f in seq.frames if len(f)]
        lines = [f"【序列 {name}】" if name else "【序列】",
                 f"帧数: {seq.n_f}",
                 f"总点数: {sum(counts)}（每帧 {min(counts) if counts else 0}~{max(counts) if counts else 0}）"]
        if non_empty:
            pts = np.concatenate(non_empty)
            lo, hi = pts.min(axis=0), pts.max(axis=0)
            lines.append("包围盒: " + ", ".join(f"{a}[{l:.3f}, {h:.3f}]" for a, l, h in zip('xyz', lo, hi)))
        return "\n".join(lines)
