"""Benchmark rows, variance summaries and their CSV/JSON serialisation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

CSV_HEADER = ("instance", "n", "method", "length", "ref_length", "gap_pct", "seconds", "seed")


@dataclass(frozen=True)
class BenchRow:
    instance: str
    n: int
    method: str
    length: float
    ref_length: float | None
    seconds: float | None
    seed: int

    @property
    def gap(self) -> float | None:
        """Fractional gap, always recomputed from the two lengths."""
        if self.ref_length is None:
            return None
        return (self.length - self.ref_length) / self.ref_length

    @property
    def gap_pct(self) -> float | None:
        gap = self.gap
        return None if gap is None else 100.0 * gap

    def sort_key(self):
        return (self.instance, self.method, self.seed)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(rows, sink) -> None:
    """Write rows sorted by instance id, then method name (then seed).

    ``sink`` may be a text or binary stream.  Floats use their shortest
    round-tripping representation; missing values are empty fields.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for row in sorted(rows, key=BenchRow.sort_key):
        writer.writerow([_fmt(row.instance), _fmt(row.n), _fmt(row.method), _fmt(float(row.length)),
                         _fmt(None if row.ref_length is None else float(row.ref_length)),
                         _fmt(row.gap_pct), _fmt(row.seconds), _fmt(row.seed)])
    text = buf.getvalue()
    if isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


def report_csv_bytes(rows) -> bytes:
    buf = io.BytesIO()
    write_report_csv(rows, buf)
    return buf.getvalue()


def read_report_csv(source) -> list[BenchRow]:
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source, newline="")
    reader = csv.DictReader(source)
    rows = []
    for rec in reader:
        rows.append(BenchRow(
            instance=rec["instance"], n=int(rec["n"]), method=rec["method"], length=float(rec["length"]),
            ref_length=float(rec["ref_length"]) if rec["ref_length"] else None,
            seconds=float(rec["seconds"]) if rec["seconds"] else None,
            seed=int(rec["seed"]),
        ))
    return rows


@dataclass
class VarianceReport:
    """Per (method, instance) gap mean and standard deviation over repeats.

    Standard deviations are sample values (ddof=1) when an instance has
    more than one repetition, else 0.
    """

    per_instance: dict = field(default_factory=dict)  # method -> {instance: (mean, std, count)}

    @classmethod
    def from_rows(cls, rows) -> "VarianceReport":
        groups = {}
        for row in rows:
            if row.gap is None:
                continue
            groups.setdefault(row.method, {}).setdefault(row.instance, []).append(row.gap)
        per = {}
        for method, by_inst in groups.items():
            per[method] = {}
            for inst, gaps in sorted(by_inst.items()):
                g = np.asarray(gaps)
                std = float(g.std(ddof=1)) if g.size > 1 else 0.0
                per[method][inst] = (float(g.mean()), std, int(g.size))
        return cls(per)

    def stds(self, method: str) -> dict:
        return {k: v[1] for k, v in self.per_instance.get(method, {}).items()}

    def means(self, method: str) -> dict:
        return {k: v[0] for k, v in self.per_instance.get(method, {}).items()}

    def pooled_std(self, method: str) -> float:
        stds = list(self.stds(method).values())
        return float(np.mean(stds)) if stds else float("nan")

    def methods(self) -> list[str]:
        return sorted(self.per_instance)

    def write_csv(self, sink) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(("method", "instance", "mean_gap_pct", "std_gap_pct", "repetitions"))
        for method in self.methods():
            for inst, (mean, std, count) in sorted(self.per_instance[method].items()):
                writer.writerow((method, inst, repr(100 * mean), repr(100 * std), count))
        text = buf.getvalue()
        sink.write(text if isinstance(sink, io.TextIOBase) else text.encode("utf-8"))


def summarize(rows) -> list[dict]:
    """One JSON-ready summary per method."""
    out = []
    by_method = {}
    for row in rows:
        by_method.setdefault(row.method, []).append(row)
    for method in sorted(by_method):
        group = by_method[method]
        gaps = np.array([100.0 * r.gap for r in group if r.gap is not None])
        secs = [r.seconds for r in group if r.seconds is not None]
        out.append({
            "method": method,
            "mean_gap_pct": float(gaps.mean()) if gaps.size else None,
            "std_gap_pct": float(gaps.std(ddof=1)) if gaps.size > 1 else 0.0,
            "mean_seconds": float(np.mean(secs)) if secs else None,
            "n_instances": len({r.instance for r in group}),
        })
    return out


def write_summary_json(rows, sink) -> None:
    text = json.dumps(summarize(rows), indent=2, sort_keys=True) + "\n"
    sink.write(text if isinstance(sink, io.TextIOBase) else text.encode("utf-8"))
