"""Run reports and collected/selected count tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .ingest import dumps


@dataclass
class RunReport:
    stage: str
    records_in: int = 0
    records_out: int = 0
    rejects_by_reason: dict[str, int] = field(default_factory=dict)
    wall_time: float = 0.0
    per_class_counts: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def reject(self, reason: str) -> None:
        self.rejects_by_reason[reason] = self.rejects_by_reason.get(reason, 0) + 1

    @property
    def consistent(self) -> bool:
        return self.records_in == self.records_out + sum(self.rejects_by_reason.values())

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "rejects_by_reason": dict(sorted(self.rejects_by_reason.items())),
            "wall_time": round(self.wall_time, 3),
            "per_class_counts": self.per_class_counts,
            "diagnostics": self.diagnostics,
        }

    def write(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def count_table(rows: Iterable[dict]) -> dict:
    """Collected/selected counts per source tag and per class from scored rows."""
    by_source: dict[str, Counter] = {}
    by_class: dict[str, Counter] = {}
    reasons: Counter = Counter()
    total = Counter()
    for row in rows:
        kept = bool(row.get("kept"))
        src = str(row.get("source_tag", "other"))
        cls = str(row.get("class_id"))
        for bucket in (by_source.setdefault(src, Counter()), by_class.setdefault(cls, Counter()), total):
            bucket["collected"] += 1
            bucket["selected"] += kept
        if not kept:
            reasons[row.get("reject_reason") or "unknown"] += 1

    def plain(d):
        return {k: {"collected": v["collected"], "selected": v["selected"]} for k, v in sorted(d.items())}

    return {
        "total": {"collected": total["collected"], "selected": total["selected"]},
        "by_source": plain(by_source),
        "by_class": plain(by_class),
        "rejects_by_reason": dict(sorted(reasons.items())),
    }


def format_table(table: dict) -> str:
    lines = [f"{'group':<24}{'collected':>12}{'selected':>12}"]
    for title, key in (("source", "by_source"), ("class", "by_class")):
        for name, c in table[key].items():
            lines.append(f"{title + ':' + name:<24}{c['collected']:>12}{c['selected']:>12}")
    t = table["total"]
    lines.append(f"{'total':<24}{t['collected']:>12}{t['selected']:>12}")
    return "\n".join(lines) + "\n"
