"""Tidy CSV/JSON outputs and the checksummed run manifest.

Number formatting is fixed (money 2 decimals, raw coefficients 4 decimals,
BII 6 decimals) and rows are stably sorted, so identical inputs always give
identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .data import SummaryRow
from .econ import CEResult, Dominance, RankEntry
from .quantreg import QuantileModel
from .simulate import SimulationRun

REPORT_DIR = "report"
MANIFEST = "manifest.json"


def money(x: float) -> str:
    return f"{x:.2f}"


def coef4(x: float) -> str:
    return f"{x:.4f}"


def _num(x: float, fmt) -> str:
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else fmt(x)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    sha256: str
    bytes: int


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> ManifestEntry:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return ManifestEntry(path.name, sha256_file(path), path.stat().st_size)


# -- tables --------------------------------------------------------------------

def emit_summary(rows: Sequence[SummaryRow], path) -> ManifestEntry:
    return write_csv(
        path,
        ("treatment", "statistic", "unit", "rep", "mean", "sd", "min", "max"),
        ((r.treatment, r.statistic, r.unit, r.rep, money(r.mean), _num(r.sd, money), money(r.min), money(r.max))
         for r in rows),
    )


def significance_stars(coef: float, se: float | None) -> str:
    """Two-sided normal-approximation test at the 0.1 / 0.05 / 0.01 levels."""
    if se is None or math.isnan(se) or coef == 0:
        return ""
    if se == 0:
        return "***"
    p = math.erfc(abs(coef / se) / math.sqrt(2.0))
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def coefficient_cell(coef: float, se: float | None) -> str:
    if se is None or math.isnan(se):
        return coef4(coef)
    return f"{coef4(coef)}{significance_stars(coef, se)} ({coef4(se)})"


def emit_coefficient_table(models: Sequence[QuantileModel], path) -> ManifestEntry:
    """One row per regressor, one column per quantile, cells ``coef[stars] (se)``."""
    if not models:
        raise ValueError("no models to tabulate")
    models = sorted(models, key=lambda m: m.tau)
    names = models[0].names
    for m in models[1:]:
        if m.names != names:
            raise ValueError("models have different regressor sets")
    rows = []
    for j, name in enumerate(names):
        row = [name]
        for m in models:
            se = None if m.standard_errors is None else float(m.standard_errors[j])
            row.append(coefficient_cell(float(m.coefficients[j]), se))
        rows.append(row)
    return write_csv(path, ("regressor", *(f"Q = {m.tau:g}" for m in models)), rows)


def emit_ce_plot_data(results: Mapping[str, Sequence[CEResult]], path) -> ManifestEntry:
    """Long-format ``scenario_id,treatment,rac,ce`` sorted by scenario, treatment, rac."""
    if not results or not any(results.values()):
        raise ValueError("no CE results to emit")
    rows = sorted(
        (sid, res.treatment, float(rac), float(ce))
        for sid, group in results.items()
        for res in group
        for rac, ce in zip(res.rac, res.ce)
    )
    return write_csv(path, ("scenario_id", "treatment", "rac", "ce"),
                     ((s, t, f"{r:.2f}", money(c)) for s, t, r, c in rows))


def emit_ce_results(results: Mapping[str, Sequence[CEResult]], path) -> ManifestEntry:
    rows = sorted(
        (sid, rec["treatment"], rec["rac"], rec["ce"], rec["emv"], rec["risk_premium"])
        for sid, group in results.items()
        for res in group
        for rec in res.records()
    )
    return write_csv(
        path,
        ("scenario_id", "treatment", "rac", "ce", "emv", "risk_premium"),
        ((s, t, f"{r:.2f}", money(c), money(e), money(rp)) for s, t, r, c, e, rp in rows),
    )


def ce_results_json(results: Sequence[CEResult]) -> str:
    return json.dumps([
        {"treatment": r.treatment, "emv": r.emv, "records": r.records()} for r in results
    ], indent=2, sort_keys=True) + "\n"


def emit_rankings(rankings: Mapping[str, Mapping[float, Sequence[RankEntry]]], path) -> ManifestEntry:
    rows = []
    for sid in sorted(rankings):
        for rac in sorted(rankings[sid]):
            for e in rankings[sid][rac]:
                rows.append((sid, f"{rac:.2f}", e.rank, e.treatment, money(e.ce), int(e.tied)))
    return write_csv(path, ("scenario_id", "rac", "rank", "treatment", "ce", "tied"), rows)


def emit_dominance(entries: Iterable[tuple[str, str, str, str, Dominance]], path) -> ManifestEntry:
    """Rows of (sample, measure, a, b, result)."""
    rows = [
        (sample, measure, a, b, d.relation, int(d.a_fsd_b), int(d.b_fsd_a), int(d.a_ssd_b), int(d.b_ssd_a))
        for sample, measure, a, b, d in entries
    ]
    return write_csv(
        path,
        ("sample", "measure", "a", "b", "relation", "a_fsd_b", "b_fsd_a", "a_ssd_b", "b_ssd_a"),
        rows,
    )


def _by_scenario(runs: Iterable[SimulationRun]) -> list[SimulationRun]:
    return sorted(runs, key=lambda r: (r.scenario.scenario_id, r.treatment))


def emit_sim_draws(runs: Iterable[SimulationRun], path) -> ManifestEntry:
    runs = _by_scenario(runs)

    def rows():
        for run in runs:
            sid = run.scenario.scenario_id
            for d in range(run.draws.shape[0]):
                for n in range(run.draws.shape[1]):
                    yield (sid, run.treatment, d, n + 1, f"{run.bii_draws[d, n]:.6f}", coef4(run.draws[d, n]))
    return write_csv(path, ("scenario_id", "treatment", "draw", "harvest", "bii", "yield"), rows())


def emit_sim_profits(runs: Iterable[SimulationRun], path) -> ManifestEntry:
    rows = (
        (run.scenario.scenario_id, run.treatment, d, money(p))
        for run in _by_scenario(runs)
        for d, p in enumerate(run.profits)
    )
    return write_csv(path, ("scenario_id", "treatment", "draw", "profit"), rows)


# -- manifest ------------------------------------------------------------------

def run_metadata(config_hash: str, seed: int) -> dict:
    """Run identity derived from the config, so repeated runs are byte-identical.

    The timestamp is taken from ``SOURCE_DATE_EPOCH`` when set, else null.
    """
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    return {
        "run_id": hashlib.sha256(f"{config_hash}:{seed}".encode()).hexdigest()[:16],
        "seed": seed,
        "config_hash": config_hash,
        "timestamp": int(epoch) if epoch and epoch.isdigit() else None,
    }


def scan_outputs(out_dir) -> list[ManifestEntry]:
    out_dir = Path(out_dir)
    skip = out_dir / REPORT_DIR / MANIFEST
    entries = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p != skip:
            entries.append(ManifestEntry(p.relative_to(out_dir).as_posix(), sha256_file(p), p.stat().st_size))
    return entries


def write_manifest(out_dir, metadata: dict) -> Path:
    """(Re)write ``report/manifest.json`` listing every file under ``out_dir``."""
    path = Path(out_dir) / REPORT_DIR / MANIFEST
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "metadata": metadata,
        "files": [e.__dict__ for e in scan_outputs(out_dir)],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(out_dir) -> list[str]:
    """Problems found when checking the manifest against the files on disk."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / REPORT_DIR / MANIFEST).read_text(encoding="utf-8"))
    problems = []
    listed = {e["path"]: e for e in doc["files"]}
    for rel, e in listed.items():
        p = out_dir / rel
        if not p.is_file():
            problems.append(f"missing: {rel}")
        elif sha256_file(p) != e["sha256"]:
            problems.append(f"checksum mismatch: {rel}")
    for e in scan_outputs(out_dir):
        if e.path not in listed:
            problems.append(f"unlisted: {e.path}")
    return problems
