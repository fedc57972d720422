"""
Command-line entry point for the DNNGP toolkit.

Verbs: simulate, fit, predict, validate. Each verb reads a JSON run config,
logs to stdout and, on failure, writes {"error", "message"} JSON to stderr
and exits with status 1.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from dnngp.cli_io import (
    build_manifest, holdout_indices, load_dataset, load_targets, points_frame, read_json,
    read_posterior, resolve_data_path, resolve_run_dir, write_frame, write_json, write_posterior,
    write_simulation
)
from dnngp.config import load_run_config, parse_run_config
from dnngp.datagen import simulate_dataset
from dnngp.errors import ConfigError, DNNGPError
from dnngp.mcmc import run_sampler
from dnngp.metrics import fit_metrics, validation_report
from dnngp.predict import predict_points
from utils.logging_config import log_error, setup_logging

logger = logging.getLogger(__name__)

def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, threads=args.threads)
    if config.simulation is None:
        raise ConfigError("the simulate command needs a 'simulation' section in the config")
    spec = config.simulation.synthetic_spec(default_seed=config.seed)
    data = simulate_dataset(spec)
    paths = write_simulation(data, args.out)
    write_json(build_manifest(config, "simulate", synthetic=spec.model_dump(mode="json")),
               Path(args.out) / "manifest.json")
    print(f"✅ Simulated {data.ref.size} grid points and {spec.n_holdout} holdout points")
    for name, path in paths.items():
        print(f"   {name}: {path}")
    return 0

def _load_truth(data_path: Path) -> Optional[dict]:
    truth_path = data_path.with_name("truth.json")
    if truth_path.exists():
        return read_json(truth_path).get("truth")
    return None

def _holdout_frame(dataset, indices: np.ndarray):
    ref = dataset.ref
    return points_frame(
        ids=[str(int(i)) for i in indices],
        coords=ref.coords[indices],
        times=ref.point_times[indices],
        x=dataset.x[indices],
        y=dataset.raw_y()[indices],
        id_column="id"
    )

def cmd_fit(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, threads=args.threads)
    data_path = resolve_data_path(args.data)
    dataset = load_dataset(data_path, config.response_transform, args.allow_missing_cells)
    holdout = holdout_indices(dataset, config.holdout)
    spec = dataset.model_spec(config, holdout)

    samples = run_sampler(spec, config.sampler_config())
    out = Path(args.out)
    write_posterior(samples, out / "posterior.csv", w_subset=config.w_subset)
    write_frame(samples.summary(_load_truth(data_path)).reset_index(), out / "summary.csv")

    metrics = None
    if len(samples) >= 2:
        metrics = fit_metrics(samples, spec)
        if holdout.size:
            draws = predict_points(
                [dataset.ref.point(int(i)) for i in holdout], dataset.x[holdout], samples, spec,
                seed=config.seed, thresholds=config.thresholds,
                inverse_transform=config.response_transform.inverse,
                max_draws=config.max_prediction_draws, threads=config.threads
            )
            report = validation_report(draws.median(), draws.interval(0.95), dataset.raw_y()[holdout])
            metrics.rmspe = report["rmspe"]
            metrics.coverage95 = report["coverage95"]
        write_json(metrics.to_dict(), out / "fit_metrics.json")
    else:
        logger.warning(f"Only {len(samples)} stored draw(s); skipping DIC and predictive loss")

    if holdout.size:
        write_frame(_holdout_frame(dataset, holdout), out / "holdout.csv")

    write_json(build_manifest(
        config, "fit",
        data=str(data_path),
        allow_missing_cells=bool(args.allow_missing_cells),
        n_obs=spec.n_obs,
        n_reference=spec.r,
        holdout_indices=holdout.tolist()
    ), out / "manifest.json")

    print(f"✅ Fit complete: {len(samples)} draws from {config.n_chains} chain(s)")
    for chain, rate in sorted(samples.acceptance.items()):
        print(f"   chain {chain}: theta acceptance {rate:.3f}")
    if metrics is not None:
        print(f"   DIC={metrics.dic:.2f} pD={metrics.p_d:.2f} D={metrics.d:.2f}")
    return 0

def _restore_run(args: argparse.Namespace):
    """Config, dataset, model spec and posterior of a finished fit."""
    run_dir, posterior_path = resolve_run_dir(args.posterior)
    manifest = read_json(run_dir / "manifest.json")
    config = parse_run_config(manifest["config"], threads=args.threads)
    data_path = resolve_data_path(args.data) if args.data else Path(manifest["data"])
    allow_missing = bool(manifest.get("allow_missing_cells", False)) or args.allow_missing_cells
    dataset = load_dataset(data_path, config.response_transform, allow_missing)
    holdout = np.asarray(manifest.get("holdout_indices", []), dtype=np.int64)
    spec = dataset.model_spec(config, holdout)
    samples = read_posterior(posterior_path)
    return config, spec, samples

def _predict_targets(config, spec, samples, targets):
    return predict_points(
        targets.points, targets.x, samples, spec,
        seed=config.seed, thresholds=config.thresholds,
        inverse_transform=config.response_transform.inverse,
        max_draws=config.max_prediction_draws, ids=targets.ids, threads=config.threads
    )

def cmd_predict(args: argparse.Namespace) -> int:
    config, spec, samples = _restore_run(args)
    targets = load_targets(args.targets, spec.p)
    draws = _predict_targets(config, spec, samples, targets)
    write_frame(draws.to_frame(), args.out)
    print(f"✅ Predicted {len(draws)} target(s) -> {args.out}")
    return 0

def cmd_validate(args: argparse.Namespace) -> int:
    config, spec, samples = _restore_run(args)
    targets = load_targets(args.holdout, spec.p)
    if targets.y is None or not np.all(np.isfinite(targets.y)):
        raise ConfigError(f"holdout file {args.holdout} needs a complete y column")
    draws = _predict_targets(config, spec, samples, targets)
    report = validation_report(draws.median(), draws.interval(0.95), targets.y)
    write_json(report, args.out)
    if args.predictions:
        write_frame(draws.to_frame(), args.predictions)
    print(f"✅ Validation on {report['n']} point(s): RMSPE={report['rmspe']:.4f}, coverage={report['coverage95']:.1f}%")
    return 0

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Dynamic nearest-neighbor Gaussian process toolkit")
    parser.add_argument("--log-level", default=None, help="Logging level (default: LOG_LEVEL or INFO)")
    parser.add_argument("--log-file", default=None, help="Also log to this file")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Draw a synthetic dataset")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--out", required=True, help="Output directory")
    simulate.set_defaults(handler=cmd_simulate)

    fit = commands.add_parser("fit", help="Run the MCMC sampler")
    fit.add_argument("--data", required=True, help="Dataset CSV or a simulate output directory")
    fit.add_argument("--config", required=True)
    fit.add_argument("--out", required=True, help="Run directory")
    fit.set_defaults(handler=cmd_fit)

    predict = commands.add_parser("predict", help="Posterior predictive draws at target points")
    predict.add_argument("--data", default=None, help="Dataset used for the fit (default: from the manifest)")
    predict.add_argument("--posterior", required=True, help="Run directory or posterior CSV")
    predict.add_argument("--targets", required=True)
    predict.add_argument("--out", required=True)
    predict.set_defaults(handler=cmd_predict)

    validate = commands.add_parser("validate", help="Score predictions against held-out responses")
    validate.add_argument("--data", default=None, help="Dataset used for the fit (default: from the manifest)")
    validate.add_argument("--posterior", required=True, help="Run directory or posterior CSV")
    validate.add_argument("--holdout", required=True, help="Targets with a y column")
    validate.add_argument("--out", required=True, help="Report JSON")
    validate.add_argument("--predictions", default=None, help="Also write the predictions CSV here")
    validate.set_defaults(handler=cmd_validate)

    for sub in (simulate, fit, predict, validate):
        sub.add_argument("--threads", type=int, default=None, help="Worker count (overrides DNNGP_THREADS)")
    for sub in (fit, predict, validate):
        sub.add_argument("--allow-missing-cells", action="store_true",
                         help="Treat (site, time) cells absent from the file as missing responses")
    return parser

def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level or os.getenv("LOG_LEVEL", "INFO"), log_file=args.log_file)
    try:
        return args.handler(args)
    except (DNNGPError, OSError) as e:
        log_error(e, f"{args.command} command")
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1

if __name__ == "__main__":
    sys.exit(main())
