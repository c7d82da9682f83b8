"""Command-line front end.

Every command accepts settings from ``--config FILE`` (TOML or JSON, one table
per command, keys are option names with underscores); explicit flags win.
Each command that writes an output directory also writes
``run_config.json`` there, which can be fed back through ``--config`` to
replay the run.

Exit codes: 0 success, 1 runtime failure, 2 usage or schema error.
"""
from __future__ import annotations

import csv
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import analysis, diagnostics, io
from .discrete import (DiscreteModel, KlConfig, fit_discrete, fit_static, log_likelihood_discrete,
                       profile_objective)
from .export import MissingCoordinatesError, omega_rows, stations_geojson
from .ingest import CleaningPolicy, SchemaError, build_network, clean_trips, parse_trips
from .mixed import FitFailed, GdConfig, MixedModel, c_totals, fit, log_likelihood
from .network import MultilayerNetwork, degree_hour_matrix, hourly_totals

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger("tdsbm")


class SchemaFailure(click.ClickException):
    exit_code = 2


def load_config(path: str) -> dict:
    p = Path(path)
    if p.suffix.lower() == ".toml":
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p) as fh:
        return json.load(fh)


def _snapshot(out: Path, command: str, params: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clean = {k: (list(v) if isinstance(v, tuple) else v) for k, v in params.items() if k != "out"}
    clean["out"] = str(params.get("out", out))
    io.write_json(out / "run_config.json", {command: clean})


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="TOML or JSON file with per-command defaults.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, verbose):
    """Time-dependent stochastic block models for bicycle-sharing trip networks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        try:
            ctx.default_map = load_config(config_path)
        except (ValueError, OSError) as exc:
            raise SchemaFailure(f"cannot read config {config_path}: {exc}")


def _parse_column_map(text: str) -> dict:
    p = Path(text)
    if p.is_file():
        try:
            return load_config(str(p))
        except ValueError as exc:
            raise SchemaFailure(f"cannot read column map {p}: {exc}")
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise SchemaFailure(f"bad column map entry {part!r}; expected field=column")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _split_list(values) -> list[str]:
    out = []
    for v in values or ():
        out.extend(s.strip() for s in str(v).split(",") if s.strip())
    return out


@main.command("ingest")
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--column-map", required=True,
              help="JSON/TOML file, JSON object, or 'field=column,...' pairs.")
@click.option("--min-duration", default=2.0, show_default=True, type=float)
@click.option("--max-duration", default=90.0, show_default=True, type=float)
@click.option("--tz", default="UTC", show_default=True, help="IANA zone for local weekday/hour.")
@click.option("--weekdays-only/--all-days", default=True, show_default=True)
@click.option("--exclude-stations", multiple=True, help="Station ids (comma separated or repeated).")
@click.option("--delimiter", default=",", show_default=True)
@click.option("--time-format", default=None, help="strptime format when timestamps are not ISO-8601.")
@click.option("--layers", default=24, show_default=True, type=int)
@click.option("--bucket-boundaries", default=None, help="Comma-separated bucket start hours.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_ingest(ctx, inputs, column_map, min_duration, max_duration, tz, weekdays_only,
               exclude_stations, delimiter, time_format, layers, bucket_boundaries, out):
    """Parse, clean and bucket trip CSVs into a network directory."""
    out = Path(out)
    cmap = _parse_column_map(column_map)
    try:
        policy = CleaningPolicy(min_duration, max_duration, frozenset(_split_list(exclude_stations)),
                                weekdays_only, tz)
    except (ValueError, KeyError) as exc:
        raise SchemaFailure(f"invalid cleaning policy: {exc}")
    trips, errors = [], []
    for path in inputs:
        with open(path, "rb") as fh:
            try:
                t, e = parse_trips(fh, cmap, tz=tz, delimiter=delimiter, time_format=time_format)
            except SchemaError as exc:
                raise SchemaFailure(f"{path}: {exc}")
        trips.extend(t)
        errors.extend((path, err.row, err.message) for err in e)
    cleaned, report = clean_trips(trips, policy)
    bounds = [float(b) for b in bucket_boundaries.split(",")] if bucket_boundaries else None
    if bounds is not None:
        layers = len(bounds)
    if not cleaned:
        raise click.ClickException("no trips left after cleaning")
    try:
        net = build_network(cleaned, layers, bounds, tz)
    except ValueError as exc:
        raise SchemaFailure(str(exc))
    io.save_network(net, out)
    summary = report.to_dict()
    summary["row_errors"] = len(errors)
    summary["n_stations"] = net.n_nodes
    summary["policy"] = policy.to_dict()
    io.write_json(out / "cleaning_report.json", summary)
    if errors:
        io.write_rows_csv(out / "row_errors.csv", ["file", "row", "message"], errors)
    _snapshot(out, "ingest", ctx.params)
    click.echo(f"trips in={report.input_count} kept={report.output_count} "
               f"removed={report.removal_fraction:.2%} row_errors={len(errors)} stations={net.n_nodes}")


def _load_network(path) -> MultilayerNetwork:
    try:
        return io.load_network(path)
    except (io.FormatError, OSError, ValueError) as exc:
        raise SchemaFailure(f"cannot load network {path}: {exc}")


def _load_model(path):
    try:
        return io.load_model(path)
    except (io.FormatError, OSError, ValueError) as exc:
        raise SchemaFailure(f"cannot load model {path}: {exc}")


@main.command("diagnose")
@click.option("--network", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_diagnose(ctx, network, out):
    """Hourly totals, top-2 SVD profiles of degree-by-hour matrices, in/out correlation."""
    out = Path(out)
    net = _load_network(network)
    out.mkdir(parents=True, exist_ok=True)
    totals = hourly_totals(net)
    io.write_rows_csv(out / "hourly_totals.csv", ["layer", "trips"], enumerate(totals.tolist()))
    summary = {}
    profiles = {}
    for direction in ("in", "out"):
        try:
            res = diagnostics.top2_svd(degree_hour_matrix(net, direction))
        except ValueError as exc:
            raise click.ClickException(str(exc))
        profiles[direction] = [c.right for c in res.components]
        summary[f"{direction}_singular_values"] = res.singular_values.tolist()
        summary[f"{direction}_explained_fraction"] = res.explained_fraction
    rows = [(t, profiles["in"][0][t], profiles["in"][1][t], profiles["out"][0][t], profiles["out"][1][t])
            for t in range(net.n_layers)]
    io.write_rows_csv(out / "svd_profiles.csv", ["layer", "in_1", "in_2", "out_1", "out_2"], rows)
    try:
        summary["in_out_pearson_r"] = diagnostics.in_out_degree_correlation(net)
    except ValueError as exc:
        summary["in_out_pearson_r"] = None
        summary["in_out_pearson_error"] = str(exc)
    summary.update(n_nodes=net.n_nodes, n_layers=net.n_layers, total_trips=net.total)
    io.write_json(out / "summary.json", summary)
    _snapshot(out, "diagnose", ctx.params)
    click.echo(json.dumps(summary, indent=2))


@main.command("fit")
@click.option("--network", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "kind", type=click.Choice(["tdmm", "tdd", "static"]), required=True)
@click.option("--blocks", "K", type=int, required=True)
@click.option("--restarts", "--runs", "restarts", type=int, default=None,
              help="Restarts (tdmm, default 10) or KL runs (tdd/static, default 50).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--tolerance", type=float, default=1e-4, show_default=True, help="KL stopping tolerance.")
@click.option("--max-iters", type=int, default=20000, show_default=True, help="Gradient iteration cap.")
@click.option("--stall-window", type=int, default=600, show_default=True)
@click.option("--initial-step", type=float, default=1e-4, show_default=True)
@click.option("--node-order", type=click.Choice(["random", "greedy"]), default="greedy", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_fit(ctx, network, kind, K, restarts, seed, tolerance, max_iters, stall_window,
            initial_step, node_order, threads, out):
    """Fit a TDMM, TDD or static SBM and write model.json, fit_report.json, omega.csv."""
    out = Path(out)
    net = _load_network(network)
    if not 1 <= K <= net.n_nodes:
        raise SchemaFailure(f"--blocks must be in 1..{net.n_nodes}")
    try:
        if kind == "tdmm":
            cfg = GdConfig(initial_step=initial_step, stall_window=stall_window, max_iters=max_iters,
                           restarts=restarts or 10, seed=seed, threads=threads)
            model, report = fit(net, K, cfg)
            objective = None
        else:
            cfg = KlConfig(runs=restarts or 50, tolerance=tolerance, seed=seed,
                           node_order=node_order, threads=threads)
            fitter = fit_discrete if kind == "tdd" else fit_static
            model, report = fitter(net, K, cfg)
            objective = report.final_objective
    except FitFailed as exc:
        raise click.ClickException(str(exc))
    except ValueError as exc:
        raise SchemaFailure(str(exc))
    stored_cfg = {k: v for k, v in cfg.to_dict().items() if k != "threads"}
    out.mkdir(parents=True, exist_ok=True)
    io.save_model(out / "model.json", model, node_ids=net.node_ids, loglik=report.final_loglik,
                  objective=objective, seed=seed, config=stored_cfg)
    io.write_json(out / "fit_report.json", report.to_dict())
    io.write_omega_csv(out / "omega.csv", model.omega)
    if isinstance(model, DiscreteModel):
        io.write_rows_csv(out / "labels.csv", ["station_id", "block", "theta"],
                          [(s, int(b), repr(float(th))) for s, b, th in
                           zip(net.node_ids, model.labels, model.theta)])
    _snapshot(out, "fit", ctx.params)
    msg = f"{kind} K={model.n_blocks} loglik={report.final_loglik:.4f}"
    if objective is not None:
        msg += f" objective={objective:.4f}"
    click.echo(msg)


def _read_truth(path: str, node_ids) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "station_id" not in rows[0] or "block" not in rows[0]:
        raise SchemaFailure(f"{path}: expected columns station_id,block")
    truth = {r["station_id"]: int(r["block"]) for r in rows}
    missing = [s for s in node_ids if s not in truth]
    if missing:
        raise SchemaFailure(f"{path}: no truth label for stations {missing[:10]}")
    return np.array([truth[s] for s in node_ids])


def _evaluate(net, model) -> dict:
    if model.n_nodes != net.n_nodes:
        raise SchemaFailure(f"model has N={model.n_nodes}, network has N={net.n_nodes}")
    if isinstance(model, DiscreteModel) and model.kind == "static" and net.n_layers != 1:
        net = net.with_layers_merged()
    if model.n_layers != net.n_layers:
        raise SchemaFailure(f"model has T={model.n_layers}, network has T={net.n_layers}")
    kind = "tdmm" if isinstance(model, MixedModel) else model.kind
    if isinstance(model, MixedModel):
        ll = log_likelihood(net, model)
    else:
        ll = log_likelihood_discrete(net, model)
    n_p = analysis.param_count(kind, model.n_nodes, model.n_blocks, model.n_layers)
    metrics = {"kind": kind, "N": model.n_nodes, "K": model.n_blocks, "T": model.n_layers,
               "loglik": ll, "n_params": n_p, "aic": analysis.aic(n_p, ll)}
    if isinstance(model, DiscreteModel):
        metrics["objective"] = profile_objective(net, model.labels, model.n_blocks)
        metrics["degree_identity_residual"] = analysis.degree_identity_residual(
            net, model.labels, model.n_blocks)
    return metrics


@main.command("evaluate")
@click.option("--network", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model-file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels-truth", type=click.Path(exists=True, dir_okay=False),
              help="CSV with station_id,block columns.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write metrics JSON here.")
def cmd_evaluate(network, model_file, labels_truth, out):
    """Log-likelihood, parameter count, AIC, degree residual and optional ARI."""
    net = _load_network(network)
    model, node_ids = _load_model(model_file)
    metrics = _evaluate(net, model)
    if labels_truth:
        truth = _read_truth(labels_truth, net.node_ids)
        pred = model.labels if isinstance(model, DiscreteModel) else np.argmax(model.C, axis=1)
        metrics["ari"] = analysis.adjusted_rand_index(truth, pred)
    if out:
        io.write_json(out, metrics)
    for k, v in metrics.items():
        click.echo(f"{k}: {v}")


@main.command("generate")
@click.option("--model-file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_generate(ctx, model_file, seed, out):
    """Sample a synthetic network from a model file."""
    out = Path(out)
    model, node_ids = _load_model(model_file)
    net = analysis.sample_network(model, seed, node_ids=node_ids)
    io.save_network(net, out)
    _snapshot(out, "generate", ctx.params)
    click.echo(f"sampled {net.total} trips over {net.nnz} cells")


def _parse_hours(text: str) -> tuple[int, ...]:
    return tuple(int(h) for h in text.split(",") if h.strip())


@main.command("export")
@click.option("--model-file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--network", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["geojson", "csv"]), default="geojson", show_default=True)
@click.option("--morning", default="6,7,8,9", show_default=True, help="Morning hours for role labels.")
@click.option("--evening", default="16,17,18,19", show_default=True, help="Evening hours for role labels.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.pass_context
def cmd_export(ctx, model_file, network, fmt, morning, evening, out):
    """Station GeoJSON (with roles) or CSV tables behind block plots."""
    out = Path(out)
    model, _ = _load_model(model_file)
    net = _load_network(network)
    if model.n_nodes != net.n_nodes:
        raise SchemaFailure(f"model has N={model.n_nodes}, network has N={net.n_nodes}")
    roles = analysis.label_blocks(model.omega, _parse_hours(morning), _parse_hours(evening))
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "roles.json", {str(r.block): r.to_dict() for r in roles})
    if fmt == "geojson":
        try:
            gj = stations_geojson(model, net, roles)
        except MissingCoordinatesError as exc:
            raise click.ClickException(str(exc))
        io.write_json(out / "stations.geojson", gj)
    else:
        io.write_rows_csv(out / "omega.csv", ["g", "h", "t", "value"], omega_rows(model.omega))
        io.write_rows_csv(out / "hourly_totals.csv", ["layer", "trips"],
                          enumerate(hourly_totals(net).tolist()))
        if isinstance(model, DiscreteModel):
            rows = [(s, int(b), float(th)) for s, b, th in zip(net.node_ids, model.labels, model.theta)]
            io.write_rows_csv(out / "stations.csv", ["station_id", "block", "theta"], rows)
        else:
            K = model.n_blocks
            tot = c_totals(model)
            rows = [(s, *model.C[i].tolist(), float(tot[i])) for i, s in enumerate(net.node_ids)]
            io.write_rows_csv(out / "stations.csv",
                              ["station_id", *[f"C_{g}" for g in range(K)], "c_total"], rows)
    _snapshot(out, "export", ctx.params)
    click.echo(", ".join(f"block {r.block}: {r.role}" for r in roles))


@main.command("compare")
@click.option("--network", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model-file", "model_files", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Write the table as CSV here.")
def cmd_compare(network, model_files, out):
    """AIC selection table over several fitted models."""
    net = _load_network(network)
    entries = []
    for path in model_files:
        model, _ = _load_model(path)
        m = _evaluate(net, model)
        entries.append((m["kind"], m["K"], m["n_params"], m["loglik"]))
    rows = analysis.compare_models(entries)
    if out:
        Path(out).write_text(analysis.selection_table_csv(rows))
    click.echo(analysis.format_selection_table(rows))


if __name__ == "__main__":
    main()
