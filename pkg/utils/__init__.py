"""工具模块"""
from .monitor import RunMonitor, get_monitor
from .formatter import ReportFormatter, REPORT_COLUMNS

__all__ = ['RunMonitor', 'get_monitor', 'ReportFormatter', 'REPORT_COLUMNS']
