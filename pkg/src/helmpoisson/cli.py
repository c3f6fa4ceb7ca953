"""Command line: ``helmpoisson run <experiment> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _strings(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helmpoisson", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--shape", help="shape number (1, 2, 3) or preset name")
    g.add_argument("--preset", help="geometry preset name")
    r.add_argument("--shapes", type=_strings, help="comma-separated shapes for multi-shape experiments")
    r.add_argument("--h", type=float)
    k = r.add_mutually_exclusive_group()
    k.add_argument("--k", type=float)
    k.add_argument("--k-list", dest="k_list", type=_floats)
    a = r.add_mutually_exclusive_group()
    a.add_argument("--alpha", type=float)
    a.add_argument("--alpha-policy", dest="alpha_policy", choices=["k2"])
    r.add_argument("--N", type=int)
    r.add_argument("--p", type=float)
    r.add_argument("--scheme", choices=["cavity", "annular", "waveguide", "alternative"])
    r.add_argument("--m", type=int)
    r.add_argument("--L-wid", dest="L_wid", type=float)
    r.add_argument("--paths", type=int)
    r.add_argument("--dt", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--probes", type=int)
    r.add_argument("--out")
    r.add_argument("--deterministic", action="store_true", default=None)
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if ns.config:
        data = json.loads(Path(ns.config).read_text())
    data["experiment"] = ns.experiment
    for key in ("shape", "preset", "shapes", "h", "k", "k_list", "alpha", "alpha_policy", "N", "p",
                "scheme", "m", "L_wid", "paths", "dt", "seed", "probes", "out", "deterministic"):
        val = getattr(ns, key)
        if val is not None:
            data[key] = val
    return ExperimentConfig.from_json(json.dumps(data))


def _failing_operation(exc: BaseException) -> str:
    """module.function of the innermost package frame in the traceback."""
    op = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = Path(frame.filename).parts
        if "helmpoisson" in parts:
            op = f"{Path(frame.filename).stem}.{frame.name}"
    return op


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        summary, files = run_experiment(cfg)
    except Exception as exc:  # reported as a structured error
        report = {"status": "error", "error": type(exc).__name__, "message": str(exc),
                  "operation": _failing_operation(exc)}
        print(json.dumps(report, indent=2), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, ValueError)) else 1
    print(json.dumps({"status": "ok", "summary": summary, "files": files}, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
