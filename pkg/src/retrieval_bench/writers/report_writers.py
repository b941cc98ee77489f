"""Renders evaluation reports as json, markdown and csv."""
import logging
from pathlib import Path
from typing import Iterable, List, Sequence

import pandas as pd

from retrieval_bench.evaluation.evaluator import EvalReport
from retrieval_bench.readers.artifact_readers import ArtifactFiles

LABEL_COLUMNS = ["Model", "Index", "Chunking", "Reranker"]
FLOAT_FORMAT = "{:.3f}"
SUPPORTED_FORMATS = ("json", "md", "csv")


def metric_columns(k_values: Sequence[int]) -> List[str]:
    """Acc@k then NDCG@k for each k, ascending"""
    columns = []
    for k in sorted(k_values):
        columns.extend([f"Acc@{k}", f"NDCG@{k}"])
    return columns


def report_row(report: EvalReport) -> list:
    """Labels followed by the metric values in column order"""
    row = [
        report.labels.model,
        report.labels.index,
        report.labels.chunking,
        report.labels.reranker,
    ]
    for k in sorted(report.k_values):
        row.extend([report.acc_at_k[k], report.ndcg_at_k[k]])
    return row


def reports_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """One row per report. All reports must share k_values."""
    if not reports:
        raise ValueError("No reports to tabulate")
    k_values = sorted(reports[0].k_values)
    if any(sorted(r.k_values) != k_values for r in reports):
        raise ValueError(
            "Reports with different k values can't share a table"
        )
    return pd.DataFrame(
        [report_row(report) for report in reports],
        columns=LABEL_COLUMNS + metric_columns(k_values),
    )


def render_markdown_table(reports: Sequence[EvalReport]) -> str:
    """
    Markdown table in the shape Model | Index | Chunking | Reranker | Acc@3 |
    NDCG@3 | ... with metrics to 3 decimals.
    Args:
        reports (Sequence[EvalReport]): Rows, in order.

    Returns:
        str: The table, newline terminated.
    """
    frame = reports_frame(reports)
    header = "| " + " | ".join(frame.columns) + " |"
    separator = (
        "|"
        + "|".join(
            "---" if column in LABEL_COLUMNS else "---:"
            for column in frame.columns
        )
        + "|"
    )
    lines = [header, separator]
    for row in frame.itertuples(index=False):
        cells = [
            value if column in LABEL_COLUMNS else FLOAT_FORMAT.format(value)
            for column, value in zip(frame.columns, row)
        ]
        lines.append("| " + " | ".join(str(c) for c in cells) + " |")
    return "\n".join(lines) + "\n"


def render_markdown(report: EvalReport) -> str:
    """The report table plus dataset and exclusion counts. Doesn't include
    timings, so it's identical for identical runs."""
    summary = report.dataset_summary
    lines = [
        render_markdown_table([report]),
        f"Queries evaluated: {report.n_queries}  ",
        f"Queries excluded: {report.n_excluded}  ",
        f"Questions generated: {summary.generated}, filtered: "
        f"{summary.filtered}, retained: {summary.retained}  ",
        f"Status: {'FAILED' if report.failed else 'ok'}",
    ]
    return "\n".join(lines) + "\n"


def _write_text(file_path: Path, text: str) -> Path:
    """utf-8, LF"""
    with open(file_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return file_path


def write_csv(frame: pd.DataFrame, file_path: Path) -> Path:
    """Full precision csv of a report frame"""
    return _write_text(file_path, frame.to_csv(index=False))


def load_report(file_path: Path) -> EvalReport:
    """Parse a report.json"""
    with open(file_path, encoding="utf-8") as f:
        return EvalReport.model_validate_json(f.read())


def emit_report(
    report: EvalReport, formats: Iterable[str], output_dir: Path
) -> List[Path]:
    """
    Write the requested renderings of a report.
    Args:
        report (EvalReport): Report to write.
        formats (Iterable[str]): Any of "json", "md", "csv".
        output_dir (Path): Created if missing. OSError if it can't be
          written.

    Returns:
        List[Path]: Written files in json, md, csv order.
    """
    formats = set(formats)
    unknown = sorted(formats - set(SUPPORTED_FORMATS))
    if unknown:
        raise ValueError(f"Unknown report formats: {unknown}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        written.append(
            _write_text(
                output_dir / ArtifactFiles.report_json.value,
                report.model_dump_json(indent=2) + "\n",
            )
        )
    if "md" in formats:
        written.append(
            _write_text(
                output_dir / ArtifactFiles.report_md.value,
                render_markdown(report),
            )
        )
    if "csv" in formats:
        written.append(
            write_csv(
                reports_frame([report]),
                output_dir / ArtifactFiles.report_csv.value,
            )
        )
    logging.info(f"Wrote reports: {[p.name for p in written]}")
    return written


def emit_matrix(
    reports: Sequence[EvalReport], output_dir: Path
) -> List[Path]:
    """matrix.md and matrix.csv, one row per run in run order"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    return [
        _write_text(output_dir / "matrix.md", render_markdown_table(reports)),
        write_csv(reports_frame(reports), output_dir / "matrix.csv"),
    ]
