"""
Report Formatter Module
Renders evaluation, benchmark and pooling results as JSON or aligned plain text
"""

import json
from typing import Any, Dict, List, Optional

import config
from core.evaluation import EvalReport


class ReportFormatter:
    """Format toolkit results for standard output"""

    def __init__(self, format_type: Optional[str] = None):
        """
        Args:
            format_type: "json" or "text" (defaults to config.DEFAULT_REPORT_FORMAT)
        """
        self.format_type = format_type or config.DEFAULT_REPORT_FORMAT
        if self.format_type not in config.REPORT_FORMATS:
            raise ValueError(
                f"Unknown report format '{self.format_type}'. Choose from: {', '.join(config.REPORT_FORMATS)}"
            )

    @staticmethod
    def _json(data: Any) -> str:
        return json.dumps(data, indent=2, sort_keys=False)

    def format_report(self, report: EvalReport) -> str:
        """
        Format one EvalReport

        Args:
            report: Evaluation report

        Returns:
            JSON object or a two-column table
        """
        if self.format_type == "json":
            return self._json(report.to_dict())

        rows = [(key, f"{value:.6f}") for key, value in report.scores().items()]
        for key in config.TIMING_KEYS:
            if key in report.timings:
                rows.append((config.BENCH_COLUMN_LABELS[key], f"{report.timings[key]:.6f}"))
        if report.leaf_count is not None:
            rows.append(("leaf_count", str(report.leaf_count)))
        if report.cell_count is not None:
            rows.append(("cell_count", str(report.cell_count)))
        return self._format_pairs(rows, header=("Metric", "Value"))

    def format_bench(self, reports: List[EvalReport]) -> str:
        """
        Comparison table, one row per mode

        Args:
            reports: Reports from timed_pipeline

        Returns:
            JSON list or aligned table with the five timing columns plus leaf counts
        """
        if self.format_type == "json":
            return self._json([
                {**r.to_dict(), "mode": config.PIPELINE_MODE_LABELS.get(r.mode, r.mode)}
                for r in reports
            ])

        header = ["Mode"] + [config.BENCH_COLUMN_LABELS[key] for key in config.TIMING_KEYS] + ["Leaves", "Cells"]
        rows = []
        for report in reports:
            row = [config.PIPELINE_MODE_LABELS.get(report.mode, str(report.mode))]
            row += [f"{report.timings.get(key, float('nan')):.4f}" for key in config.TIMING_KEYS]
            row += [str(report.leaf_count), str(report.cell_count)]
            rows.append(row)
        return self._format_table(header, rows)

    def format_pooling(self, results: Dict[str, Dict[str, Any]]) -> str:
        """
        Pooling output per variant

        Args:
            results: variant -> {"lambda": float, "g": list, ...}

        Returns:
            JSON object or one block per variant
        """
        if self.format_type == "json":
            return self._json(results)

        lines = []
        for variant, data in results.items():
            lines.append(f"{variant}")
            for key, value in data.items():
                if isinstance(value, (list, tuple)):
                    value = " ".join(f"{v:.6g}" for v in value)
                elif isinstance(value, float):
                    value = f"{value:.6g}"
                lines.append(f"  {key:<18} {value}")
        return "\n".join(lines)

    def format_summary(self, summary: Dict[str, Any]) -> str:
        """Flat key/value summary (voxelize, grad-check)"""
        if self.format_type == "json":
            return self._json(summary)
        rows = [(key, f"{value:.6g}" if isinstance(value, float) else str(value)) for key, value in summary.items()]
        return self._format_pairs(rows, header=("Key", "Value"))

    @staticmethod
    def _format_pairs(rows, header) -> str:
        width = max(len(header[0]), *(len(r[0]) for r in rows)) if rows else len(header[0])
        output = [f"{header[0]:<{width}}  {header[1]}", "-" * (width + 2 + max(len(header[1]), 12))]
        output += [f"{key:<{width}}  {value}" for key, value in rows]
        return "\n".join(output)

    @staticmethod
    def _format_table(header: List[str], rows: List[List[str]]) -> str:
        widths = [max(len(header[c]), *(len(r[c]) for r in rows)) if rows else len(header[c])
                  for c in range(len(header))]
        output = [" | ".join(f"{h:<{w}}" for h, w in zip(header, widths))]
        output.append("-+-".join("-" * w for w in widths))
        output += [" | ".join(f"{v:<{w}}" for v, w in zip(row, widths)) for row in rows]
        return "\n".join(output)


def format_report(report: EvalReport, format_type: Optional[str] = None) -> str:
    """Convenience function to format one EvalReport"""
    return ReportFormatter(format_type).format_report(report)
