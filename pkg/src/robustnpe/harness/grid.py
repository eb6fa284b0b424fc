"""Resumable (method x lambda x scenario x seed) grids and report files.

Output directory layout::

    checkpoints/<train-hash>.ckpt   trained parameters, shared across cells
    cells/<cell-hash>.json          one record per cell (status ok or failed)
    report.csv / report.json        long-form metrics, one row per value
    aggregate.csv                   mean and sd over seeds
    radar.csv                       per-scenario max-normalised aggregate means

Cells whose record exists with status ``ok`` are skipped on a rerun; the
report files are rebuilt from the cell records, sorted, so reruns and
resumed runs give byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..simulators import ScenarioSpec
from .config import ConfigError, EvalConfig, TrainConfig, canonical_json, config_hash
from .evaluation import evaluate
from .training import TrainingDiverged, train_cached

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("method", "scenario", "variant_param", "seed", "metric", "value")
AGGREGATE_COLUMNS = ("method", "scenario", "variant_param", "metric", "n", "mean", "sd")
RADAR_COLUMNS = ("scenario", "variant_param", "method", "metric", "normalized")

DEFAULT_LAMBDAS = {"gaussian2d": (0.1, 1.0, 10.0), "camera": (0.01, 0.1, 1.0)}
EXPERIMENT1_SCENARIOS = (
    {"family": "gaussian2d", "variant": "well_specified"},
    {"family": "gaussian2d", "variant": "prior_location", "params": {"mu0": [1.0, 1.0]}},
    {"family": "gaussian2d", "variant": "prior_location", "params": {"mu0": [3.0, 3.0]}},
    {"family": "gaussian2d", "variant": "prior_scale", "params": {"tau0": 4.0}},
    {"family": "gaussian2d", "variant": "prior_scale", "params": {"tau0": 16.0}},
    {"family": "gaussian2d", "variant": "likelihood_scale", "params": {"tau": 4.0}},
    {"family": "gaussian2d", "variant": "likelihood_scale", "params": {"tau": 20.0}},
    {"family": "gaussian2d", "variant": "contamination", "params": {"eps": 0.1}},
    {"family": "gaussian2d", "variant": "contamination", "params": {"eps": 0.2}},
)


class GridError(ConfigError):
    pass


@dataclass
class Cell:
    config: TrainConfig

    @property
    def key(self) -> str:
        return config_hash(self.config)

    @property
    def train_key(self) -> str:
        return config_hash(self.config.training_key())

    def describe(self) -> dict:
        c = self.config
        return {"method": c.method, "lam": c.lam, "seed": c.seed,
                "scenario": c.scenario.label, "variant_param": c.scenario.variant_param()}


@dataclass
class GridResult:
    out: Path
    completed: list[dict] = field(default_factory=list)
    failed: list[dict] = field(default_factory=list)
    skipped: int = 0


def parse_manifest(raw: dict) -> list[Cell]:
    """Expand a manifest into cells.

    Keys: ``methods`` (entries ``{"method", "lam": number or list}``),
    ``scenarios`` (scenario dicts), ``seeds``, and optional ``train`` and
    ``eval`` overrides applied to every cell. UDA methods without ``lam``
    use the family's default lambda grid.
    """
    if not isinstance(raw, dict):
        raise GridError("manifest must be a JSON object")
    methods = raw.get("methods") or []
    scenarios = raw.get("scenarios") or []
    seeds = raw.get("seeds") or []
    if not methods or not scenarios or not seeds:
        raise GridError("manifest needs non-empty 'methods', 'scenarios' and 'seeds'")
    train_over = dict(raw.get("train") or {})
    for k in ("method", "lam", "seed", "scenario", "eval"):
        if k in train_over:
            raise GridError(f"'train' overrides may not set {k!r}")
    try:
        ev = EvalConfig(**(raw.get("eval") or {}))
        specs = [ScenarioSpec.from_dict(s) for s in scenarios]
    except (TypeError, ValueError) as exc:
        raise GridError(f"invalid manifest: {exc}") from exc
    cells = []
    for m in methods:
        m = {"method": m} if isinstance(m, str) else dict(m)
        name = m.get("method")
        for spec in specs:
            if name in ("npe_mmd", "npe_dann"):
                lams = m.get("lam", DEFAULT_LAMBDAS[spec.family])
            else:
                lams = m.get("lam", 0.0)
            for lam in lams if isinstance(lams, (list, tuple)) else [lams]:
                for seed in seeds:
                    cfg = TrainConfig.from_dict({**train_over, "method": name, "lam": float(lam),
                                                 "seed": int(seed), "scenario": spec, "eval": ev})
                    cells.append(Cell(cfg))
    seen, unique = set(), []
    for c in cells:
        if c.key not in seen:
            seen.add(c.key)
            unique.append(c)
    return unique


def load_manifest(path) -> list[Cell]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise GridError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(raw)


def _run_group(cells: list[dict], out: str) -> list[dict]:
    """Train one shared run and evaluate each of its cells; runs in a worker."""
    out_dir = Path(out)
    results = []
    record, error = None, None
    try:
        record = train_cached(TrainConfig.from_dict(cells[0]["config"]), out_dir / "checkpoints")
    except TrainingDiverged as exc:
        error = {"type": "numerical", "message": str(exc), "step": exc.step}
    except Exception as exc:  # a failing cell must not stop the grid
        error = {"type": type(exc).__name__, "message": str(exc)}
    for c in cells:
        entry = {"cell": c["describe"], "config": c["config"], "config_hash": c["key"],
                 "train_hash": c["train_key"]}
        if record is None:
            entry.update(status="failed", error=error)
        else:
            try:
                cfg = TrainConfig.from_dict(c["config"])
                report = evaluate(record, cfg.scenario, cfg.eval, cfg.seed)
                entry.update(status="ok", report=report.to_dict(), rows=report.rows(),
                             wall_clock=record.wall_clock)
            except Exception as exc:
                entry.update(status="failed", error={"type": type(exc).__name__, "message": str(exc)})
        _write_json(out_dir / "cells" / f"{c['key']}.json", entry)
        results.append(entry)
    return results


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")
    os.replace(tmp, path)


def _done(out: Path, cell: Cell) -> bool:
    path = out / "cells" / f"{cell.key}.json"
    if not path.exists():
        return False
    try:
        return json.loads(path.read_text()).get("status") == "ok"
    except json.JSONDecodeError:
        return False


def run_grid(manifest, out, workers: int = 1) -> GridResult:
    """Train and evaluate every cell not already completed in ``out``; rebuild reports."""
    cells = load_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else parse_manifest(manifest)
    out = Path(out)
    result = GridResult(out)
    todo = [c for c in cells if not _done(out, c)]
    result.skipped = len(cells) - len(todo)
    groups: dict[str, list[dict]] = {}
    for c in todo:
        groups.setdefault(c.train_key, []).append(
            {"config": c.config.to_dict(), "describe": c.describe(), "key": c.key,
             "train_key": c.train_key})
    out.mkdir(parents=True, exist_ok=True)
    batches = [groups[k] for k in sorted(groups)]
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_group, batches, [str(out)] * len(batches)))
    else:
        outcomes = [_run_group(b, str(out)) for b in batches]
    for entries in outcomes:
        for e in entries:
            (result.completed if e["status"] == "ok" else result.failed).append(e)
    write_reports(out)
    return result


def _read_cells(out: Path) -> list[dict]:
    cells_dir = Path(out) / "cells"
    if not cells_dir.is_dir():
        raise GridError(f"{out} holds no grid results")
    return [json.loads(p.read_text()) for p in sorted(cells_dir.glob("*.json"))]


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _row_key(r):
    return (r["scenario"], r["variant_param"], r["method"], r["seed"], r["metric"])


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r["method"], r["scenario"], r["variant_param"], r["metric"]), []).append(r["value"])
    out = []
    for (method, scen, vp, metric), vals in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][0], kv[0][3])):
        n = len(vals)
        mean = math.fsum(vals) / n
        sd = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        out.append({"method": method, "scenario": scen, "variant_param": vp, "metric": metric,
                    "n": n, "mean": mean, "sd": sd})
    return out


def radar(agg: list[dict]) -> list[dict]:
    """Divide each aggregate mean by the maximum over methods within its scenario and metric."""
    tops: dict[tuple, float] = {}
    for r in agg:
        k = (r["scenario"], r["variant_param"], r["metric"])
        tops[k] = max(tops.get(k, -math.inf), r["mean"])
    out = []
    for r in agg:
        top = tops[(r["scenario"], r["variant_param"], r["metric"])]
        norm = r["mean"] / top if top > 0 else float("nan")
        out.append({"scenario": r["scenario"], "variant_param": r["variant_param"],
                    "method": r["method"], "metric": r["metric"], "normalized": norm})
    return out


def write_reports(out) -> dict[str, Path]:
    out = Path(out)
    entries = _read_cells(out)
    ok = [e for e in entries if e["status"] == "ok"]
    rows = sorted((r for e in ok for r in e["rows"]), key=_row_key)
    agg = aggregate(rows)
    paths = {"csv": out / "report.csv", "json": out / "report.json",
             "aggregate": out / "aggregate.csv", "radar": out / "radar.csv"}
    paths["csv"].write_text(_csv(REPORT_COLUMNS, rows))
    mirror = {
        "rows": rows,
        "cells": sorted(({**e["cell"], "config_hash": e["config_hash"], "train_hash": e["train_hash"],
                          "status": e["status"], **({"error": e["error"]} if "error" in e else {}),
                          "meta": e.get("report", {}).get("meta", {})} for e in entries),
                        key=lambda c: c["config_hash"]),
        "aggregate": agg,
    }
    paths["json"].write_text(canonical_json(_nan_to_none(mirror)) + "\n")
    paths["aggregate"].write_text(_csv(AGGREGATE_COLUMNS, agg))
    paths["radar"].write_text(_csv(RADAR_COLUMNS, radar(agg)))
    return paths


def _nan_to_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj
