"""CSV persistence, run manifests and the two-scheme comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .config import SimConfig, format_config, parse_config_text
from .simulator import RECORD_FIELDS, RoundRecord, summarize

_INT_FIELDS = {"round", "device", "iterations"}
_METRIC_FIELDS = [f for f in RECORD_FIELDS if f not in ("round", "device", "scheme", "skipped")]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "" if not math.isfinite(value) else format(value, ".17g")
    return str(value)


def record_row(rec: RoundRecord) -> list[str]:
    row = []
    for name in RECORD_FIELDS:
        value = getattr(rec, name)
        if rec.skipped and name in _METRIC_FIELDS:
            value = None
        row.append(_fmt(value))
    return row


def write_records(records: Iterable[RoundRecord], stream) -> int:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RECORD_FIELDS)
    n = 0
    for rec in sorted(records, key=lambda r: (r.round, r.device)):
        writer.writerow(record_row(rec))
        n += 1
    return n


def emit_records(records: Iterable[RoundRecord], path) -> Path:
    """Write records as CSV ordered by (round, device); skipped rows carry empty metrics."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            write_records(records, fh)
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc
    return path


def parse_records(text: str) -> list[RoundRecord]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != RECORD_FIELDS:
        raise ValueError(f"unexpected CSV header {header!r}")
    out = []
    for row in reader:
        kw = {}
        for name, cell in zip(RECORD_FIELDS, row):
            if name == "scheme":
                kw[name] = cell
            elif name == "skipped":
                kw[name] = cell == "1"
            elif name in _INT_FIELDS:
                kw[name] = int(cell) if cell else None
            else:
                kw[name] = float(cell) if cell else math.nan
        out.append(RoundRecord(**kw))
    return out


def read_records(path) -> list[RoundRecord]:
    return parse_records(Path(path).read_text())


def compare_schemes(proposed: list[RoundRecord], benchmark: list[RoundRecord]) -> dict:
    """Headline differences of the proposed scheme relative to the benchmark, in percent."""
    shape = lambda recs: sorted((r.round, r.device) for r in recs)
    if not proposed or shape(proposed) != shape(benchmark):
        raise ValueError("record sets differ in rounds or devices; runs are not paired")
    p, b = summarize(proposed), summarize(benchmark)

    def reduction(new, old):
        return 0.0 if new == old else 100.0 * (old - new) / old

    def gap(new, old):
        return 0.0 if new == old else 100.0 * (new - old) / old

    return {
        "energy_std_reduction_pct": reduction(p["energy_std"], b["energy_std"]),
        "mean_energy_reduction_pct": reduction(p["energy_mean"], b["energy_mean"]),
        "loss_std_proposed": p["loss_std"],
        "loss_std_benchmark": b["loss_std"],
        "mean_loss_gap_pct": gap(p["loss_mean"], b["loss_mean"]),
        "final_loss_gap_pct": gap(p["final_loss"], b["final_loss"]),
        "energy_std_proposed": p["energy_std"],
        "energy_std_benchmark": b["energy_std"],
        "energy_mean_proposed": p["energy_mean"],
        "energy_mean_benchmark": b["energy_mean"],
        "final_loss_proposed": p["final_loss"],
        "final_loss_benchmark": b["final_loss"],
    }


def format_summary(summary: dict, title: str) -> str:
    lines = [f"== {title} ==",
             f"devices {summary['devices']}  rounds {summary['rounds']}  skipped {summary['skipped']}",
             f"mean energy per round   {summary['energy_mean']:.6g} J",
             f"cross-device energy std {summary['energy_std']:.6g} J",
             f"mean loss {summary['loss_mean']:.6g}  final loss {summary['final_loss']:.6g}  "
             f"loss std {summary['loss_std']:.6g}",
             "device  e_cp_j      e_tx_j      e_tot_j     iters     rate_bps"]
    for k, d in summary["per_device"].items():
        lines.append(f"{k:6d}  {d['e_cp_j']:<10.4g}  {d['e_tx_j']:<10.4g}  {d['e_tot_j']:<10.4g}  "
                     f"{d['iterations']:<8.1f}  {d['rate_bps']:.4g}")
    return "\n".join(lines)


def format_comparison(cmp: dict) -> str:
    return "\n".join(["== proposed vs benchmark ==",
                      f"energy std reduction  {cmp['energy_std_reduction_pct']:.2f} %",
                      f"mean energy reduction {cmp['mean_energy_reduction_pct']:.2f} %",
                      f"mean loss gap         {cmp['mean_loss_gap_pct']:.2f} %",
                      f"final loss gap        {cmp['final_loss_gap_pct']:.2f} %",
                      f"loss std proposed     {cmp['loss_std_proposed']:.6g}",
                      f"loss std benchmark    {cmp['loss_std_benchmark']:.6g}"])


@dataclass
class RunManifest:
    config: str
    seed: int
    schemes: list
    version: str
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: Optional[str] = None
    outputs: dict = field(default_factory=dict)

    @classmethod
    def for_config(cls, cfg: SimConfig, schemes, version: str) -> "RunManifest":
        return cls(config=format_config(cfg), seed=cfg.run.seed, schemes=list(schemes), version=version)

    def snapshot(self) -> SimConfig:
        return parse_config_text(self.config)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))
