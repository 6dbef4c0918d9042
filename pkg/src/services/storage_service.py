"""
Report Storage Service

Writes experiment reports into an output directory as CSV (machine
interchange), Markdown (bit-width tables) and JSON (full report including
the RunConfig). Output is byte-identical for identical reports.

Storage Structure:
    results/
    ├── sweep_resnet_lite_1shot.csv
    ├── sweep_resnet_lite_1shot.md
    ├── sweep_resnet_lite_1shot.json
    ├── eval_ptq_Q8.8_1shot.json
    └── ...
"""
import csv
import io
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from models.schemas import EvalReport, LossRecord, SweepReport, SweepRow
from utils.logger import logger


CI_NOTE = "± is the 95% normal-approximation half-width over episodes: 1.96 * std / sqrt(episodes)"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _row_cells(row: SweepRow) -> List[Any]:
    acc = row.accuracy
    return [
        "" if row.int_bits is None else row.int_bits,
        "" if row.frac_bits is None else row.frac_bits,
        "" if row.int_bits is None else row.total_bits,
        row.mode,
        "" if acc is None else f"{acc.mean:.4f}",
        "" if acc is None else f"{acc.half_width:.4f}",
        "" if acc is None else acc.episodes,
        row.error or "",
    ]


SWEEP_CSV_HEADER = ["int_bits", "frac_bits", "total_bits", "mode", "mean", "half_width", "episodes", "error"]


def sweep_csv(report: SweepReport) -> str:
    """One line per (format, mode) row, float baseline last."""
    rows = [_row_cells(row) for row in report.rows] + [_row_cells(report.baseline)]
    return _csv_text(SWEEP_CSV_HEADER, rows)


def _cell(row: Optional[SweepRow]) -> str:
    if row is None:
        return "-"
    if row.accuracy is None:
        return "failed"
    return row.accuracy.formatted()


def sweep_markdown(report: SweepReport) -> str:
    """Bit-width table: int / frac bit-width, QAT and PTQ cells as 'mean±half_width'."""
    cfg = report.run_config
    by_format: Dict[tuple, Dict[str, SweepRow]] = {}
    for row in report.rows:
        by_format.setdefault((row.int_bits, row.frac_bits), {})[row.mode] = row

    lines = [
        f"# Bit-width sweep: {cfg.arch}, {cfg.ways}-way {cfg.shots}-shot",
        "",
        f"{cfg.queries} queries per class, {cfg.episodes} episodes, seed {cfg.seed}, "
        f"preprocess {cfg.preprocess}.",
        "",
        "| int bit-width | frac bit-width | QAT | PTQ |",
        "|---|---|---|---|",
    ]
    for (int_bits, frac_bits), modes in by_format.items():
        lines.append(f"| {int_bits} | {frac_bits} | {_cell(modes.get('qat'))} | {_cell(modes.get('ptq'))} |")
    baseline = _cell(report.baseline)
    lines.append(f"| float | float | {baseline} | {baseline} |")

    failures = [row for row in report.rows if row.error]
    if failures:
        lines += ["", "Failed rows:", ""]
        lines += [f"- Q{r.int_bits}.{r.frac_bits} {r.mode}: {r.error}" for r in failures]
    lines += ["", CI_NOTE, "Training hyperparameters are desk-scale defaults.", ""]
    return "\n".join(lines)


def eval_csv(report: EvalReport) -> str:
    acc = report.accuracy
    return _csv_text(
        ["command", "mode", "qformat", "preprocess", "mean", "half_width", "episodes"],
        [[report.command, report.mode, report.qformat or "", report.preprocess,
          f"{acc.mean:.4f}", f"{acc.half_width:.4f}", acc.episodes]],
    )


def loss_history_csv(history: Sequence[LossRecord]) -> str:
    return _csv_text(
        ["epoch", "batch", "loss", "train_acc"],
        [[r.epoch, r.batch, repr(r.loss), repr(r.train_acc)] for r in history],
    )


class StorageService:
    """
    Handles saving and loading reports in one output directory.
    """

    def __init__(self, storage_dir: str = "results"):
        self.storage_dir = Path(storage_dir)

    def _write(self, filename: str, text: str) -> str:
        self.storage_dir.mkdir(parents=True, exist_ok=True)
        path = self.storage_dir / filename
        path.write_text(text, encoding="utf-8")
        logger.info(f"[IO] Wrote {path}")
        return str(path)

    def _write_json(self, filename: str, document: Dict[str, Any]) -> str:
        return self._write(filename, json.dumps(document, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def save_sweep(self, stem: str, report: SweepReport) -> Dict[str, str]:
        return {
            "csv": self._write(f"{stem}.csv", sweep_csv(report)),
            "markdown": self._write(f"{stem}.md", sweep_markdown(report)),
            "json": self._write_json(f"{stem}.json", report.model_dump(mode="json")),
        }

    def save_eval(self, stem: str, report: EvalReport) -> Dict[str, str]:
        return {
            "csv": self._write(f"{stem}.csv", eval_csv(report)),
            "json": self._write_json(f"{stem}.json", report.model_dump(mode="json")),
        }

    def save_loss_history(self, stem: str, history: Sequence[LossRecord]) -> str:
        return self._write(f"{stem}.csv", loss_history_csv(history))

    def list_reports(self) -> List[str]:
        """Names (file stems) of stored JSON reports."""
        if not self.storage_dir.is_dir():
            return []
        return sorted(p.stem for p in self.storage_dir.glob("*.json"))

    def load_report(self, name: str) -> Optional[Dict[str, Any]]:
        path = self.storage_dir / f"{name}.json"
        if not path.is_file():
            logger.warning(f"[WARN] No stored report '{name}'")
            return None
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
