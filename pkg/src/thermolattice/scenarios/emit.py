"""Write a run record to disk: run.json, CSV tables and SVG plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..report import to_jsonable
from . import plotting
from .runner import RunRecord


class EmitError(OSError):
    pass


def _cell(v) -> str:
    v = to_jsonable(v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """RFC-4180 CSV (CRLF line ends, minimal quoting) with a header row."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _bound_rows(record: RunRecord) -> list[dict]:
    rows = []
    for res in record.results:
        for rep in res.reports:
            rows.append(
                {
                    "n": res.n,
                    "N": res.N,
                    "name": rep.name,
                    "kind": rep.kind,
                    "region": rep.details.get("region"),
                    "lhs": rep.lhs,
                    "rhs": rep.rhs,
                    "holds": rep.holds,
                    "premises_ok": rep.premises_ok,
                    "vacuous": rep.vacuous,
                }
            )
    return rows


def _scalar_metrics(record: RunRecord) -> list[str]:
    keys = set()
    for res in record.results:
        keys.update(k for k, v in res.metrics.items() if np.isscalar(v))
    return sorted(keys)


def emit_reports(record: RunRecord, out_dir: str | Path) -> list[Path]:
    """Write every artifact of ``record`` into ``out_dir`` and return the paths.

    ``run.json`` is byte-stable for fixed inputs and seed; the wall time goes
    to ``timing.json`` instead.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise EmitError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []

    def text(name: str, payload: str) -> None:
        path = out / name
        try:
            path.write_text(payload, encoding="utf-8")
        except OSError as exc:
            raise EmitError(f"cannot write {path}: {exc.strerror}") from exc
        written.append(path)

    text("run.json", json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n")
    text("timing.json", json.dumps({"wall_time_s": record.wall_time}) + "\n")

    if record.frontier:
        cols = ["d", "alpha", "l", "xi", "K", "d_loc", "log_base", "min_N", "conclusion_at_min_N"]
        written.append(write_csv(out / "frontier.csv", cols, ([r.get(c) for c in cols] for r in record.frontier)))
    if not record.results:
        return written

    results = record.results
    spec_rows = [
        [res.n, i, res.spectrum["energy"][i], res.spectrum["group_id"][i], res.spectrum["population"][i]]
        for res in results
        if res.spectrum
        for i in range(len(res.spectrum["energy"]))
    ]
    if spec_rows:
        written.append(write_csv(out / "spectra.csv", ["n", "index", "energy", "group_id", "population"], spec_rows))
    level_cols = ("energy", "multiplicity", "population", "F", "G")
    level_rows = [
        [res.n, k] + [res.levels[c][k] if c in res.levels else None for c in level_cols]
        for res in results
        if res.levels
        for k in range(len(res.levels["energy"]))
    ]
    if level_rows:
        written.append(write_csv(out / "levels.csv", ["n", "group_id", *level_cols], level_rows))

    corr_rows = [
        [res.n, name, s.distance, s.lower, s.upper, list(s.x), list(s.y)]
        for res in results
        for name, fit in res.fits.items()
        for s in fit.samples
    ]
    if corr_rows:
        header = ["n", "state", "distance", "lower", "upper", "x", "y"]
        written.append(write_csv(out / "correlations.csv", header, corr_rows))

    trace_rows = [
        [res.n, label, i, t, v]
        for res in results
        for label, est in res.traces.items()
        for i, (t, v) in enumerate(zip(est.times, est.values))
    ]
    if trace_rows:
        written.append(write_csv(out / "mc_traces.csv", ["n", "region", "sample", "time", "distance"], trace_rows))

    keys = _scalar_metrics(record)
    written.append(
        write_csv(out / "size_sweep.csv", ["n", "N"] + keys, ([r.n, r.N] + [r.metrics.get(k) for k in keys] for r in results))
    )
    bounds = _bound_rows(record)
    if bounds:
        cols = list(bounds[0])
        written.append(write_csv(out / "bounds.csv", cols, ([b[c] for c in cols] for b in bounds)))

    last_cdf = next((r for r in reversed(results) if r.cdfs is not None), None)
    if last_cdf is not None:
        written.append(plotting.cdf_overlay(last_cdf.cdfs, out / "cdf_overlay.svg", f"N = {last_cdf.N}"))
    last_fit = next((r for r in reversed(results) if r.fits), None)
    if last_fit is not None:
        written.append(plotting.correlation_decay(last_fit.fits, out / "correlation_decay.svg"))
    if bounds:
        written.append(plotting.bounds_vs_N(bounds, out / "bounds_vs_N.svg"))
    return written
