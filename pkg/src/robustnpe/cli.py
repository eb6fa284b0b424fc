"""Command-line entry point: ``train``, ``eval``, ``grid`` and ``report``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
Outputs go to ``--out`` or, when omitted, ``$RNPE_OUTPUT_DIR`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import autodiff as ad
from .harness import (
    CheckpointError,
    ConfigError,
    EvalConfig,
    TrainingDiverged,
    evaluate,
    load_config,
    load_run,
    run_grid,
    train,
    write_reports,
)
from .harness.grid import GridError
from .simulators import IdxFormatError, ImageSourceExhausted, load_scenario

OUTPUT_ENV = "RNPE_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def default_out() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else default_out()
    record = train(cfg, checkpoint_dir=out, log_every=args.log_every)
    summary = {"config_hash": record.config_hash, "checkpoint": record.checkpoint,
               "steps": record.n_steps, "final_loss": float(record.loss_trace[-1]),
               "wall_clock": round(record.wall_clock, 3)}
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def _cmd_eval(args) -> int:
    record = load_run(args.checkpoint)
    spec, extra = load_scenario(args.scenario)
    ev = record.config.eval
    overrides = {}
    if "n_datasets" in extra:
        overrides["n_test"] = int(extra["n_datasets"])
    if args.samples:
        overrides["S"] = args.samples
    if args.observed_seen:
        overrides["observed_seen"] = True
    ev = EvalConfig(**{**ev.__dict__, **overrides})
    report = evaluate(record, spec, ev, seed=extra.get("seed"))
    text = json.dumps(report.to_dict(), indent=1, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_grid(args) -> int:
    out = Path(args.out) if args.out else default_out()
    result = run_grid(args.manifest, out, workers=args.workers)
    print(f"{len(result.completed)} cells run, {result.skipped} skipped, "
          f"{len(result.failed)} failed; reports in {out}")
    if result.failed:
        numeric = any(e.get("error", {}).get("type") == "numerical" for e in result.failed)
        return EXIT_NUMERIC if numeric else EXIT_CONFIG
    return EXIT_OK


def _cmd_report(args) -> int:
    src = Path(args.input) if args.input else default_out()
    paths = write_reports(src)
    key = {"csv": "csv", "json": "json", "radar": "radar"}[args.format]
    sys.stdout.write(paths[key].read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robustnpe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="checkpoint directory")
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a scenario manifest")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", required=True)
    e.add_argument("--samples", type=int, help="posterior samples per dataset")
    e.add_argument("--observed-seen", action="store_true",
                   help="evaluate on the observed datasets used during training")
    e.add_argument("--out", help="write the JSON report here as well")
    e.set_defaults(func=_cmd_eval)

    g = sub.add_parser("grid", help="run a resumable benchmark grid")
    g.add_argument("--manifest", required=True)
    g.add_argument("--out")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=_cmd_grid)

    r = sub.add_parser("report", help="print a grid report")
    r.add_argument("--in", dest="input")
    r.add_argument("--format", choices=("csv", "json", "radar"), default="csv")
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (TrainingDiverged, ad.NonFiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, GridError, CheckpointError, IdxFormatError, ImageSourceExhausted,
            ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
