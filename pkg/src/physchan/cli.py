"""Command-line entry point: ``physchan {fig1,fig2,fig3,sweep,validate-bounds}``.

Configuration precedence is defaults < ``--config`` file < ``--set`` < flags.
Failures print one JSON line ``{"error": code, "message": ...}`` to stderr
and exit nonzero.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

from . import experiments, validation
from .errors import PhyschanError

RUNNERS = {
    "fig1": (experiments.run_fig1, "rmse"),
    "fig2": (experiments.run_fig2, "rmse"),
    "fig3": (experiments.run_fig3, "rel_capacity"),
    "sweep": (experiments.run_sweep, "rmse"),
}

EXIT_FAILURE = 1
EXIT_BOUNDS_FAILED = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="INI file with [scenario]/[generator]/[experiment]/... sections")
    p.add_argument("--seed", type=int, help="experiment.seed")
    p.add_argument("--out", metavar="PATH", help="output.out (CSV path)")
    p.add_argument("--trials", type=int, help="experiment.trials (noise draws per cell)")
    p.add_argument("--realizations", type=int, help="experiment.realizations (channel draws)")
    p.add_argument("--svg", action="store_true", default=None, help="also render an SVG next to the CSV")
    p.add_argument("--workers", type=int, help="experiment.workers (process pool size)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="physchan", description="Physical-model channel estimation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fig1": "oracle vs OMP rMSE against p",
        "fig2": "oracle vs optimal LMMSE for several N_t",
        "fig3": "relative capacity against p",
        "sweep": "generic estimator x p x pSNR x N_t sweep",
    }
    for name, text in helps.items():
        _add_common(sub.add_parser(name, help=text))
    vb = sub.add_parser("validate-bounds", help="run the randomized bound checks")
    vb.add_argument("--seed", type=int, default=0)
    vb.add_argument("--quick", action="store_true", help="10x fewer random cases")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise experiments.InvalidArgumentError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    flags = {
        "experiment.seed": args.seed,
        "output.out": args.out,
        "experiment.trials": args.trials,
        "experiment.realizations": args.realizations,
        "output.svg": args.svg,
        "experiment.workers": args.workers,
    }
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _run_experiment(args) -> int:
    cfg = experiments.load_config(args.config, _overrides(args))
    runner, metric = RUNNERS[args.command]
    records = runner(cfg)
    for r in records:
        r.check()
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    experiments.write_csv(records, out)
    print(f"wrote {len(records)} rows to {out}")
    if cfg.svg:
        from .plotting import plot_records

        svg = out.with_suffix(".svg")
        plot_records(records, svg, metric=metric, title=args.command)
        print(f"wrote {svg}")
    return 0


def _run_validation(args) -> int:
    results = validation.run_all(seed=args.seed, quick=args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else EXIT_BOUNDS_FAILED


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate-bounds":
            return _run_validation(args)
        return _run_experiment(args)
    except PhyschanError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
    except (OSError, ValueError, configparser.Error) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
