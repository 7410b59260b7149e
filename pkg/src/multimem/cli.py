"""Command-line front end: ``multimem simulate | fit | report | predict-grid``.

Exit codes: 0 success, 2 usage error, 3 invalid input or configuration,
4 numerical failure inside a sampler.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataFormatError, Hyperparams, default_hyperparams, load_columns, load_dataset, load_schema
from .diagnostics import (
    AdmissibilityRule,
    admissible_conditions,
    double_gradient_violations,
    l1_fit_report,
    score_correlation_summary,
    score_odds_ratio_summary,
    tertile_rate_table,
)
from .gibbs import DEFAULT_RETAIN, ChainConfig, MmmModel, SamplerError, run_chain
from .linalg import NumericalError
from .samples import ArchiveError, load_archive, save_archive
from .simulate import SCENARIOS, ScenarioSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3, 4

logger = logging.getLogger("multimem")


class ConfigError(ValueError):
    """Inconsistent command-line configuration."""


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    scenario = int(args.scenario) if args.scenario.isdigit() else args.scenario
    spec = ScenarioSpec(scenario, n=args.n, group_size=args.group_size, levels=args.levels, seed=args.seed)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sim = generate(spec)
    out = Path(args.out)
    paths = sim.write(out)
    if args.epochs:
        from .data import write_dataset, write_schema

        rng = np.random.default_rng([args.seed, 1])
        epoch = rng.integers(0, args.epochs, size=spec.n)
        epoch[: args.epochs] = np.arange(args.epochs)
        xy = rng.random((spec.n, 2))
        schema = sim.schema()
        schema = type(schema)(schema.variables, "epoch", ("x", "y"), schema.extra)
        write_dataset(sim.dataset, paths["dataset"], schema, {"epoch": epoch + 1, "x": xy[:, 0], "y": xy[:, 1]})
        write_schema(schema, paths["schema"])
    print(f"wrote {sim.dataset.n} subjects x {sim.dataset.p} variables (scenario {spec.scenario}, seed {spec.seed}) to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- fit


def _parse_retain(text, default):
    if text is None:
        return tuple(default)
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _space_time(schema, data_path):
    from .spatiotemporal import SpaceTimeCovariates

    if schema.time is None or schema.coords is None or len(schema.coords) != 2:
        raise ConfigError("the spatiotemporal variant needs 'time' and two 'coords' columns in the schema")
    cols = load_columns(data_path, [schema.time, *schema.coords])
    labels = cols[schema.time]
    labels = labels.astype(np.int64) if np.all(labels == np.round(labels)) else labels
    coords = np.column_stack([cols[c] for c in schema.coords])
    return SpaceTimeCovariates.from_labels(labels, coords)


def cmd_fit(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    partition = schema.partition()
    hyper = default_hyperparams(dataset, partition)
    if args.nu0 is not None:
        hyper = Hyperparams(hyper.alpha, hyper.mu0, hyper.Sigma0, args.nu0, hyper.Psi0)
    out = Path(args.out)
    if args.variant == "spatiotemporal":
        from .spatiotemporal import ST_RETAIN, StHyper, StModel, run_st_chain

        cov = _space_time(schema, args.data)
        model = StModel(MmmModel(dataset, partition, hyper), cov, StHyper.default(partition.n_groups), not args.no_spatial)
        default_retain, runner = ST_RETAIN, run_st_chain
    else:
        model = MmmModel(dataset, partition, hyper)
        default_retain, runner = DEFAULT_RETAIN, run_chain
    config = ChainConfig(args.iterations, args.burn_in, args.thin, args.seed, _parse_retain(args.retain, default_retain))
    resume = None
    if args.resume:
        resume = load_archive(out)
        if resume.meta.get("variant", "plain") != args.variant:
            raise ConfigError("cannot resume an archive produced by a different model variant")
    previous_draws = resume.n_draws if resume is not None else None
    samples = runner(model, config, resume=resume)
    samples.meta["variant"] = args.variant
    wall_time = samples.meta.pop("wall_time", None)
    save_archive(samples, out, append_from=previous_draws)
    manifest = {
        "command": "fit",
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": {
            "data": str(args.data),
            "schema": str(args.schema),
            "variant": args.variant,
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "seed": config.seed,
            "retain": list(config.retain),
            "nu0": float(hyper.nu0),
            "spatial": args.variant == "spatiotemporal" and not args.no_spatial,
        },
        "digests": {
            "data_file": _file_digest(args.data),
            "schema_file": _file_digest(args.schema),
            "dataset": dataset.digest(),
        },
        "wall_time_seconds": wall_time,
        "retained_draws": samples.n_draws,
        "label_switch": samples.meta.get("label_switch"),
    }
    _write_json(out / "run.json", manifest)
    flagged = (samples.meta.get("label_switch") or {}).get("flagged", [])
    if any(flagged):
        logger.warning("possible label switching in group(s) %s", [g + 1 for g, f in enumerate(flagged) if f])
    print(f"retained {samples.n_draws} draws in {out} ({wall_time or 0.0:.1f} s sampling)")
    return EXIT_OK


# --------------------------------------------------------------------------- report


def _load_rates(path, column, n):
    cols = load_columns(path, [column])
    rates = cols[column]
    if rates.size != n:
        raise DataFormatError(f"{path}: {rates.size} rate values for {n} subjects")
    return rates


def cmd_report(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    samples = load_archive(args.archive)
    if samples.meta.get("dataset_digest") != dataset.digest():
        raise ArchiveError("archive and dataset do not match (digest mismatch)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    quantiles = tuple(args.quantiles)
    names = list(dataset.names)
    epochs = schema.extra.get("variable_epochs")
    fit = l1_fit_report(samples, dataset, variable_epochs=epochs, quantiles=quantiles)
    (out / "fit_marginal.csv").write_text(fit.marginal_csv(names))
    (out / "fit_bivariate.csv").write_text(fit.bivariate_csv(names))
    summary = {"fit": fit.summary, "label_switch": samples.meta.get("label_switch"), "draws": samples.n_draws}

    if args.admissibility:
        rule = AdmissibilityRule(args.c1, args.c2, args.threshold)
        table = admissible_conditions(samples, dataset, rule)
        (out / "admissibility.csv").write_text(table.to_csv(names))
        summary["admissibility"] = {
            "c1": rule.c1,
            "c2": rule.c2,
            "posterior_threshold": rule.posterior_threshold,
            "admissible_count": int(table.admissible.sum()),
        }

    has_cov = ("mu" in samples and "sigma" in samples) or ("beta_t" in samples and "sigma_t" in samples)
    if has_cov and samples["lam"].shape[-1] >= 2:
        corr = score_correlation_summary(samples)
        summary["score_correlation"] = [{k: v for k, v in c.items() if k != "draws"} for c in corr]
        odds = score_odds_ratio_summary(samples)
        lines = ["epoch," + ",".join(f"q{q:g}" for q in odds["levels"])]
        for t, row in enumerate(odds["quantiles"]):
            lines.append(f"{t + 1}," + ",".join(f"{v:.6f}" for v in row))
        (out / "odds_ratio.csv").write_text("\n".join(lines) + "\n")

    if args.rates:
        rates = _load_rates(args.rates, args.rates_column, dataset.n)
        table = tertile_rate_table(samples, rates, min_count=args.min_count)
        (out / "rates.csv").write_text(table.to_csv())
        summary["rates"] = {"double_gradient_violations": len(double_gradient_violations(table))}
        time_id = samples.meta.get("time_id")
        if time_id is not None and max(time_id) > 0:
            time_id = np.asarray(time_id)
            for t in range(int(time_id.max()) + 1):
                sub = tertile_rate_table(samples, rates, min_count=args.min_count, subjects=np.flatnonzero(time_id == t))
                (out / f"rates_epoch{t + 1}.csv").write_text(sub.to_csv())
                summary["rates"][f"epoch{t + 1}_violations"] = len(double_gradient_violations(sub))

    _write_json(out / "summary.json", summary)
    print(f"report written to {out} (mean marginal L1 {fit.summary['marginal']['mean']:.3f})")
    return EXIT_OK


# --------------------------------------------------------------------------- predict-grid


def cmd_predict_grid(args) -> int:
    from .spatiotemporal import predict_zeta

    samples = load_archive(args.archive)
    if "zeta_w" not in samples or "gamma" not in samples:
        raise ConfigError("archive lacks spatial fields; fit with --variant spatiotemporal")
    if args.grid:
        cols = load_columns(args.grid, ["x", "y"])
        grid = np.column_stack([cols["x"], cols["y"]])
    else:
        xmin, xmax, ymin, ymax = args.bbox
        gx, gy = np.meshgrid(np.linspace(xmin, xmax, args.steps), np.linspace(ymin, ymax, args.steps))
        grid = np.column_stack([gx.ravel(), gy.ravel()])
    pred = predict_zeta(grid, samples)
    Path(args.out).write_text(pred.to_csv())
    print(f"wrote {grid.shape[0]} grid points to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multimem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    p.add_argument("--scenario", required=True, choices=[str(s) for s in SCENARIOS])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--group-size", type=int, default=5)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--epochs", type=int, default=0, help="also attach random epochs and unit-square coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the Gibbs sampler and write a chain archive")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["plain", "spatiotemporal"], default="plain")
    p.add_argument("--iterations", type=int, default=5000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--retain", help="comma-separated fields to keep")
    p.add_argument("--nu0", type=float, help="inverse-Wishart degrees of freedom for Sigma")
    p.add_argument("--no-spatial", action="store_true", help="spatiotemporal variant without spatial effects")
    p.add_argument("--resume", action="store_true", help="continue the archive in --out up to --iterations")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="posterior predictive and profile summaries")
    p.add_argument("--archive", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quantiles", type=float, nargs="+", default=[0.1, 0.9])
    p.add_argument("--admissibility", action="store_true")
    p.add_argument("--c1", type=float, default=1.7)
    p.add_argument("--c2", type=float, default=0.35)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--rates", help="CSV with one outcome value per subject")
    p.add_argument("--rates-column", default="rate")
    p.add_argument("--min-count", type=int, default=3)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("predict-grid", help="spatial effect predictions over a grid")
    p.add_argument("--archive", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", help="CSV with x,y columns")
    g.add_argument("--bbox", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (SamplerError, NumericalError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
