"""Serialisation of experiment reports.

Floats are written with 17 significant digits so every value round-trips
bit for bit.  Only the manifest carries a timestamp; everything else is a
pure function of (config hash, master seed).
"""

import csv
import datetime as dt
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .abm import SERIES
from .metrics import MetricsRecord

CSV_SCHEMA_VERSION = 1


def fmt_value(x):
    """One CSV field: 17 significant digits for floats, '' for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    if isinstance(x, (list, tuple, dict)):
        return json.dumps(to_jsonable(x), sort_keys=True)
    return str(x)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt_value(x) for x in r])
    Path(path).write_text(buf.getvalue())


def run_hash(spec):
    """Hash of everything that determines the outputs, except the master seed."""
    blob = {"kind": spec.kind, "params": spec.base.to_dict(), "seeds": spec.seeds,
            "axes": {k: list(v) for k, v in sorted(spec.axes.items())},
            "options": to_jsonable(spec.options)}
    text = json.dumps(blob, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def cells_table(report, config_hash, master_seed):
    """Header and rows for the cells CSV: identifiers, grid point, metrics, extras."""
    point_keys, extra_keys = [], []
    for c in report.cells:
        point_keys += [k for k in c.point if k not in point_keys]
        extra_keys += [k for k in c.extra if k not in extra_keys]
    metric_keys = MetricsRecord.columns()
    header = (["config_hash", "master_seed", "run_index"] + point_keys + ["unstable"]
              + metric_keys + extra_keys)
    rows = []
    for c in report.cells:
        rows.append([config_hash, master_seed, c.seed] + [c.point.get(k) for k in point_keys]
                    + [c.unstable] + c.record.to_row() + [c.extra.get(k) for k in extra_keys])
    return header, rows


def to_jsonable(x):
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if x is None or isinstance(x, str):
        return x
    return repr(x)


def dump_json(path, obj):
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def summary_document(report, spec, config_hash, horizon):
    return {
        "experiment": report.kind,
        "config_hash": config_hash,
        "master_seed": spec.master_seed,
        "seeds": spec.seeds,
        "horizon": horizon,
        "n_periods": spec.base.n_periods,
        "schema_version": CSV_SCHEMA_VERSION,
        "summary": report.summary,
        "checks": dict(report.checks),
        "all_checks_passed": report.passed(),
    }


def manifest_document(spec, config_path, out_dir, horizon, config_hash):
    return {
        "config_path": None if config_path is None else str(config_path),
        "experiment": spec.kind,
        "master_seed": spec.master_seed,
        "output_dir": str(out_dir),
        "jobs": spec.jobs,
        "horizon": horizon,
        "config_hash": config_hash,
        "params": spec.base.to_dict(),
        "axes": {k: list(v) for k, v in spec.axes.items()},
        "options": spec.options,
        "package_version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }


def write_report(report, spec, out_root, config_path=None, horizon=None):
    """Write cells.csv, summary.json, table.txt, series.csv and manifest.json."""
    config_hash = run_hash(spec)
    out = Path(out_root) / f"{report.kind}-{config_hash}-s{spec.master_seed}"
    out.mkdir(parents=True, exist_ok=True)
    header, rows = cells_table(report, config_hash, spec.master_seed)
    write_csv(out / "cells.csv", header, rows)
    dump_json(out / "summary.json", summary_document(report, spec, config_hash, horizon))
    top = f"# {report.kind}  config {config_hash}  master seed {spec.master_seed}\n"
    (out / "table.txt").write_text(top + report.table + "\n")
    if report.series:
        names = list(report.series)
        cols = [np.asarray(report.series[n]) for n in names]
        write_csv(out / "series.csv", names, zip(*(c.tolist() for c in cols)))
    dump_json(out / "manifest.json", manifest_document(spec, config_path, out, horizon, config_hash))
    return out


def write_sim(res, out_dir, stem="sim"):
    """Per-period series as CSV and metadata plus terminal state as JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{stem}.csv", list(SERIES), res.rows())
    meta = {"seed": res.seed, "run_index": res.run_index, "config_hash": res.config_hash,
            "intervention": res.intervention, "unstable": res.unstable,
            "blowup_period": res.blowup_period, "n_periods": len(res.t),
            "terminal": {"v": res.v[-1], "p": res.p[-1], "phi": res.phi_t[-1],
                         "mean_d": res.mean_d[-1], "mean_sigma_h2": res.mean_sigma_h2[-1]}}
    dump_json(out / f"{stem}.json", meta)
    return out / f"{stem}.csv", out / f"{stem}.json"
