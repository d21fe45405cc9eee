"""Aggregate row files produced by ``run``."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .runner import ROW_COLUMNS, SCHEMA_VERSION

REPORT_COLUMNS = ("experiment", "metric", "count", "mean", "min", "q25", "median", "q75", "max", "pass_rate")
VERDICTS = ("pass", "fail", "info", "excluded")


class MalformedRows(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class SchemaConflict(ValueError):
    pass


@dataclass(frozen=True)
class ParsedRow:
    schema_version: str
    config_hash: str
    experiment: str
    instance: int
    metric: str
    value: float
    verdict: str


def parse_rows(path: Path) -> list[ParsedRow]:
    problems = []
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != ROW_COLUMNS:
            raise MalformedRows([f"{path}:1: unexpected header {header!r}"])
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(ROW_COLUMNS):
                problems.append(f"{path}:{lineno}: expected {len(ROW_COLUMNS)} fields, got {len(rec)}")
                continue
            version, chash, exp, inst, metric, value, verdict = rec
            try:
                inst_i = int(inst)
                val = float(value)
            except ValueError:
                problems.append(f"{path}:{lineno}: non-numeric instance or value")
                continue
            if verdict not in VERDICTS:
                problems.append(f"{path}:{lineno}: unknown verdict {verdict!r}")
                continue
            if not exp or not metric:
                problems.append(f"{path}:{lineno}: empty experiment or metric")
                continue
            rows.append(ParsedRow(version, chash, exp, inst_i, metric, val, verdict))
    if problems:
        raise MalformedRows(problems)
    return rows


def find_row_files(root: Path) -> list[Path]:
    return sorted(root.rglob("rows.csv"))


def aggregate(rows: list[ParsedRow]) -> list[dict]:
    versions = {r.schema_version for r in rows}
    if len(versions) > 1:
        raise SchemaConflict(f"conflicting schema versions: {sorted(versions)}")
    if versions and versions != {SCHEMA_VERSION}:
        raise SchemaConflict(f"unsupported schema version {versions.pop()!r}")
    groups: dict[tuple[str, str], list[ParsedRow]] = {}
    for r in rows:
        groups.setdefault((r.experiment, r.metric), []).append(r)
    out = []
    for (exp, metric), items in sorted(groups.items()):
        vals = np.array([r.value for r in items])
        finite = vals[np.isfinite(vals)]
        graded = [r for r in items if r.verdict in ("pass", "fail")]
        q = np.quantile(finite, [0.0, 0.25, 0.5, 0.75, 1.0]) if finite.size else [math.nan] * 5
        out.append({
            "experiment": exp,
            "metric": metric,
            "count": len(items),
            "mean": float(finite.mean()) if finite.size else math.nan,
            "min": float(q[0]),
            "q25": float(q[1]),
            "median": float(q[2]),
            "q75": float(q[3]),
            "max": float(q[4]),
            "pass_rate": sum(r.verdict == "pass" for r in graded) / len(graded) if graded else math.nan,
        })
    return out


def report_csv(table: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for rec in table:
        w.writerow([rec[c] if c in ("experiment", "metric", "count") else repr(float(rec[c])) for c in REPORT_COLUMNS])
    return buf.getvalue()


def report_text(table: list[dict]) -> str:
    if not table:
        return "(no rows)\n"
    head = f"{'experiment':<14} {'metric':<28} {'count':>6} {'mean':>11} {'median':>11} {'max':>11} {'pass':>6}"
    lines = [head, "-" * len(head)]
    for r in table:
        pr = "-" if math.isnan(r["pass_rate"]) else f"{r['pass_rate']:.3f}"
        lines.append(
            f"{r['experiment']:<14} {r['metric'][:28]:<28} {r['count']:>6} "
            f"{r['mean']:>11.4g} {r['median']:>11.4g} {r['max']:>11.4g} {pr:>6}"
        )
    return "\n".join(lines) + "\n"


def build_report(root: str | Path) -> list[dict]:
    rows: list[ParsedRow] = []
    problems: list[str] = []
    for path in find_row_files(Path(root)):
        try:
            rows.extend(parse_rows(path))
        except MalformedRows as exc:
            problems.extend(exc.problems)
    if problems:
        raise MalformedRows(problems)
    return aggregate(rows)
