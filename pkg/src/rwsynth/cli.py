"""``rwsynth`` command line.

Exit codes: 0 success, 2 configuration or input error, 3 risk ceiling
exceeded, 4 numerical failure in a sampler.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import OUTPUT_ENV, ConfigError, load_config
from .data_model import DataError, write_dataset
from .risk import SingletonPatternError
from .rng import stage_rng
from .samplers import NumericalError
from .simulation import (
    CE_PATTERN_VARS,
    NBMixtureSpec,
    generate_ce_fixture,
    generate_nb_mixture,
    generate_whack_a_mole_fixture,
)

EXIT_OK, EXIT_CONFIG, EXIT_CEILING, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("rwsynth")


def _common(p: argparse.ArgumentParser, config_required=True) -> None:
    p.add_argument("-c", "--config", required=config_required, help="run configuration (JSON or YAML)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set ball.r=0.25 (repeatable)")
    p.add_argument("-o", "--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./rwsynth-out)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rwsynth", description="Risk-weighted partially synthetic data.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated input table, its schema and a starter config")
    p.add_argument("--kind", choices=("nb", "ce", "wam"), default="nb")
    p.add_argument("--n", type=int, help="records (default 1000 for nb, 6208 for ce; fixed for wam)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float, nargs=2, default=(0.7, 0.3))
    p.add_argument("--mu", type=float, nargs=2, default=(100.0, 100.0))
    p.add_argument("--phi", type=float, nargs=2, default=(20.0, 5.0))
    p.add_argument("-o", "--output-dir")

    p = sub.add_parser("risk", help="confidential marginal and pairwise risks")
    _common(p)
    p = sub.add_parser("weights", help="record weights from a risk file (recomputed if absent)")
    _common(p)
    p.add_argument("--risks", help="risk CSV (default: <output-dir>/risks.csv)")
    p = sub.add_parser("synthesize", help="fit the weighted synthesizer and write L datasets")
    _common(p)
    p.add_argument("--weights", help="weight CSV (default: <output-dir>/weights.csv)")
    p = sub.add_parser("evaluate", help="synthetic risk, utility and whack-a-mole report")
    _common(p)
    p.add_argument("--manifest", help="synthetic set manifest (default: <output-dir>/synthetic/manifest.json)")
    p.add_argument("--baseline", help="manifest of the baseline run for whack-a-mole comparison")
    p = sub.add_parser("pipeline", help="risk, weights, synthesize and evaluate in one run")
    _common(p)
    return ap


def _simulate(args) -> int:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV, "rwsynth-out"))
    out.mkdir(parents=True, exist_ok=True)
    rng = stage_rng(args.seed, "simulation")
    if args.kind == "nb":
        spec = NBMixtureSpec(args.n or 1000, tuple(args.theta), tuple(args.mu), tuple(args.phi), args.seed)
        ds = generate_nb_mixture(spec, rng)
        meta = {"kind": "nb", **spec.to_dict()}
        cfg = {"pattern_vars": ["pattern"],
               "synthesizer": {"family": "negative_binomial"}, "weights": {"scheme": "marginal"}}
    elif args.kind == "wam":
        ds = generate_whack_a_mole_fixture(rng)
        meta = {"kind": "wam", "seed": args.seed}
        cfg = {"pattern_vars": ["P"],
               "synthesizer": {"family": "mixture", "model_on_log": True, "predictors": ["G"],
                               "mixture": {"K": 1}},
               "weights": {"scheme": "marginal"}}
    else:
        n = args.n or 6208
        ds = generate_ce_fixture(n, rng)
        meta = {"kind": "ce", "n": n, "seed": args.seed}
        cfg = {"pattern_vars": list(CE_PATTERN_VARS),
               "synthesizer": {"family": "mixture", "model_on_log": True,
                               "predictors": ["Gender", "Age", "Region", "Education", "Urban", "Earner"]},
               "weights": {"scheme": "marginal"}}
    write_dataset(ds, out / "data.csv")
    (out / "schema.json").write_text(json.dumps(ds.schema.to_dict(), indent=2) + "\n")
    (out / "simulation.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    cfg = {"input": "data.csv", "schema": "schema.json", **cfg, "seed": args.seed}
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
    print(f"wrote {ds.n} records to {out / 'data.csv'}")
    return EXIT_OK


def _run(args) -> int:
    cfg = load_config(args.config, args.set, args.output_dir)
    with pipeline.output_lock(cfg.output_dir) as out:
        if args.command == "risk":
            print(pipeline.run_risk(cfg, out))
        elif args.command == "weights":
            print(pipeline.run_weights(cfg, out, args.risks))
        elif args.command == "synthesize":
            print(pipeline.run_synthesize(cfg, out, args.weights))
        elif args.command == "evaluate":
            pipeline.run_evaluate(cfg, out, args.manifest, args.baseline)
            print(out / "report.json")
        else:
            pipeline.run_pipeline(cfg, out)
            print(out / "report.json")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _simulate(args) if args.command == "simulate" else _run(args)
    except pipeline.RiskCeilingError as e:
        print(f"rwsynth: {e}", file=sys.stderr)
        return EXIT_CEILING
    except NumericalError as e:
        print(f"rwsynth: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, DataError, SingletonPatternError, pipeline.OutputLockedError,
            ValueError, OSError) as e:
        print(f"rwsynth: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
