"""Report serialization: CSV tables or a single JSON document."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .experiments import Report, aggregate

AGGREGATE_FIELDS = ("variant", "alpha", "bandwidth", "metric", "stat", "param", "value")


class ReportError(OSError):
    pass


def fmt_float(x: float) -> str:
    """17 significant digits; ``inf``, ``-inf`` and ``nan`` spelled out."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return fmt_float(v)
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


class _Encoder(json.JSONEncoder):
    def iterencode(self, o, _one_shot=False):
        # float.__repr__ is what the C encoder uses; route through the pure-Python one
        return json.encoder._make_iterencode(
            {} if self.check_circular else None, self.default, json.encoder.py_encode_basestring,
            self.indent, fmt_float, self.key_separator, self.item_separator,
            self.sort_keys, self.skipkeys, _one_shot)(o, 0)


def _restore(v):
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    if isinstance(v, dict):
        return {k: _restore(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_restore(x) for x in v]
    return v


def to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_cell(r[f]) for f in fields])
    return buf.getvalue()


def to_json(report: Report, timestamp: bool = True) -> str:
    prov = dict(report.provenance)
    if not timestamp:
        prov.pop("created", None)
    doc = {"kind": report.kind, "records": report.records,
           "aggregates": report.aggregates, "provenance": prov}
    return json.dumps(_json_value(doc), cls=_Encoder, indent=1) + "\n"


def emit_report(report: Report, out_dir, fmt: str = "json", timestamp: bool = True) -> list:
    """Write ``report`` under ``out_dir`` and return the written paths.

    ``csv`` writes ``records.csv``, ``aggregates.csv`` and ``provenance.json``;
    ``json`` writes one ``report.json``.  The creation timestamp lives only
    in the provenance block.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            path = out / "report.json"
            path.write_text(to_json(report, timestamp), encoding="utf-8")
            return [path]
        if fmt != "csv":
            raise ValueError(f"unknown format {fmt!r}")
        fields = list(report.records[0]) if report.records else []
        paths = [out / "records.csv", out / "aggregates.csv", out / "provenance.json"]
        paths[0].write_text(to_csv(report.records, fields), encoding="utf-8")
        paths[1].write_text(to_csv(report.aggregates, AGGREGATE_FIELDS), encoding="utf-8")
        prov = {"kind": report.kind, **report.provenance}
        if not timestamp:
            prov.pop("created", None)
        paths[2].write_text(json.dumps(_json_value(prov), cls=_Encoder, indent=1) + "\n",
                            encoding="utf-8")
        return paths
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc


def _read_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _typed(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if k in ("variant", "metric", "stat"):
            out[k] = v
        elif k in ("trial", "seed", "test_index"):
            out[k] = int(v)
        else:
            out[k] = float(v)
    return out


def load_report(path, check: bool = True) -> Report:
    """Read a report written by :func:`emit_report` (a directory or ``report.json``).

    With ``check`` the aggregates are recomputed from the records and must match.
    """
    p = Path(path)
    if p.is_dir() and (p / "records.csv").exists():
        prov = json.loads((p / "provenance.json").read_text(encoding="utf-8"))
        prov = _restore(prov)
        kind = prov.pop("kind")
        report = Report(kind, [_typed(r) for r in _read_csv(p / "records.csv")],
                        [_typed(r) for r in _read_csv(p / "aggregates.csv")], prov)
    else:
        if p.is_dir():
            p = p / "report.json"
        doc = _restore(json.loads(p.read_text(encoding="utf-8")))
        report = Report(doc["kind"], doc["records"], doc["aggregates"], doc["provenance"])
    if check and not aggregates_consistent(report):
        raise ReportError(f"{path}: aggregates do not match the records")
    return report


def aggregates_consistent(report: Report, rtol: float = 1e-12) -> bool:
    fresh = aggregate(report)
    if len(fresh) != len(report.aggregates):
        return False
    for a, b in zip(fresh, report.aggregates):
        for k in AGGREGATE_FIELDS:
            x, y = a[k], b[k]
            if isinstance(x, str):
                if x != y:
                    return False
            elif not (x == y or (math.isnan(x) and math.isnan(y))
                      or abs(x - y) <= rtol * max(abs(x), abs(y))):
                return False
    return True
