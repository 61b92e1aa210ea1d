"""Command-line entry point.

Every failure prints exactly one line to stderr of the form

    mileaks: error: <category>: <message>

and exits with 2 (validation), 3 (runtime or numeric) or 4 (transport).
Setting MILEAKS_SEED overrides the seed found in any spec or config file.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import datasets, learners
from .blackbox import BlackBoxModel, BlackBoxServer, TransportError
from .core import TrainConfig, ValidationError
from .defenses import StackingConfig, fit_model
from .experiment import AXES, ExperimentSpec, StageError, load_reports, reports_to_csv, reports_to_table, run_experiment, save_reports, sweep

EXIT_VALIDATION, EXIT_RUNTIME, EXIT_TRANSPORT = 2, 3, 4
SEED_ENV = "MILEAKS_SEED"


def _classify(exc: BaseException) -> tuple[str, int]:
    if isinstance(exc, StageError):
        return _classify(exc.cause)
    if isinstance(exc, TransportError):
        return "transport", EXIT_TRANSPORT
    if isinstance(exc, (ValidationError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError, KeyError, TypeError)):
        return "validation", EXIT_VALIDATION
    return "runtime", EXIT_RUNTIME


def _fail(exc: BaseException):
    category, code = _classify(exc)
    message = " ".join(str(exc).split()) or type(exc).__name__
    if isinstance(exc, StageError):
        message = f"stage {message}"
    click.echo(f"mileaks: error: {category}: {message}", err=True)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (click.exceptions.Exit, click.ClickException, SystemExit, KeyboardInterrupt):
            raise
        except Exception as exc:  # noqa: BLE001 -- every error maps to an exit code
            _fail(exc)

    return wrapper


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        seed = int(raw, 0)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    if not 0 <= seed < 2**64:
        raise ValidationError(f"{SEED_ENV} must be a 64-bit unsigned integer")
    return seed


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None


def load_experiment(path) -> ExperimentSpec:
    spec = ExperimentSpec.from_dict(read_json(path))
    seed = env_seed()
    return spec if seed is None else spec.replace(seed=seed)


def load_recipe(path):
    """A TrainConfig document, or {"stacking": {...}} for a stacked model."""
    d = read_json(path)
    seed = env_seed()
    if isinstance(d, dict) and "stacking" in d:
        if set(d) != {"stacking"}:
            raise ValidationError("a stacking config must contain only the 'stacking' key")
        recipe = StackingConfig.from_dict(d["stacking"])
    else:
        recipe = TrainConfig.from_dict(d)
    return recipe if seed is None else recipe.replace(seed=seed)


def parse_values(axis: str, raw: str) -> list:
    """Comma-separated values; dropout_grid points are written ``input:hidden``."""
    out = []
    for tok in (t.strip() for t in raw.split(",")):
        if not tok:
            continue
        try:
            if axis == "dropout_grid":
                parts = [float(p) for p in tok.split(":")]
                if len(parts) not in (1, 2):
                    raise ValueError
                out.append(tuple(parts) if len(parts) == 2 else parts[0])
            elif axis == "t_percentile":
                out.append(float(tok))
            else:
                out.append(int(tok))
        except ValueError:
            raise ValidationError(f"--values: cannot parse {tok!r} for axis {axis}") from None
    if not out:
        raise ValidationError("--values is empty")
    return out


@click.group()
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
def cli(verbose):
    """Membership inference attacks and defenses on black-box classifiers."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="SyntheticSpec JSON.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="CSV to write.")
@guarded
def gen(spec_path, out):
    """Generate a synthetic dataset."""
    spec = datasets.SyntheticSpec.from_dict(read_json(spec_path))
    seed = env_seed()
    if seed is not None:
        spec = datasets.SyntheticSpec.from_dict({**spec.to_dict(), "seed": seed})
    ds = datasets.generate(spec)
    datasets.write_csv(ds, out)
    click.echo(f"wrote {len(ds)} points (c={ds.num_classes}, d={ds.dim}, {ds.feature_space.kind}) to {out}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False), help="Unlabeled CSV, one point per row.")
@click.option("--k", required=True, type=int)
@click.option("--seed", type=int, default=None, help=f"Defaults to ${SEED_ENV} or 0.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="CSV with the cluster id appended.")
@click.option("--max-iters", default=100, show_default=True, type=int)
@click.option("--header/--no-header", default=False)
@guarded
def kmeans(in_path, k, seed, out, max_iters, header):
    """Derive class labels by K-means clustering."""
    with open(in_path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if header:
        rows = rows[1:]
    if not rows:
        raise ValidationError(f"{in_path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{in_path}: rows have differing numbers of fields")
    try:
        X = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        raise ValidationError(f"{in_path}: non-numeric value") from None
    if seed is None:
        seed = env_seed() or 0
    labels = datasets.kmeans(X, k, seed=seed, max_iters=max_iters)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r, lab in zip(rows, labels):
            w.writerow([c.strip() for c in r] + [int(lab)])
    click.echo(f"wrote {len(rows)} points in {k} clusters to {out}")


@cli.command()
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Labeled CSV.")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="TrainConfig JSON or {\"stacking\": {...}}.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Model JSON to write.")
@click.option("--has-header", is_flag=True)
@click.option("--label-column", default="-1", show_default=True, help="Index or header name.")
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), help="Split plan JSON; train on one part of it.")
@click.option("--part", default="target_train", show_default=True)
@guarded
def train(data, config_path, out, has_header, label_column, plan_path, part):
    """Train a classifier or stacked model."""
    ds = datasets.load_csv(data, has_header, label_column)
    recipe = load_recipe(config_path)
    idx = datasets.load_plan(plan_path)[part] if plan_path else np.arange(len(ds))
    model = fit_model(recipe, ds, idx)
    learners.save_model(model, out)
    acc = learners.accuracy(model, ds, idx)
    click.echo(f"trained {model.kind} on {len(idx)} points (training accuracy {acc:.4f}); wrote {out}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--addr", default="127.0.0.1:8080", show_default=True, help="host:port (port 0 picks a free port).")
@guarded
def serve(model_path, addr):
    """Serve a model as a query-counted black box over HTTP."""
    box = BlackBoxModel(learners.load_model(model_path))
    try:
        server = BlackBoxServer(box, addr)
    except OSError as exc:
        raise TransportError(f"cannot bind {addr}: {exc}") from None
    click.echo(f"serving on {server.address}", err=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        click.echo(f"stopped after {box.query_count} queries", err=True)


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON (overrides the spec's output).")
@click.option("--target", "target_address", help="Attack a served model at host:port instead of training one.")
@click.option("--model-out", type=click.Path(dir_okay=False), help="Also save the trained target model.")
@guarded
def attack(spec_path, out, target_address, model_out):
    """Run one experiment and write its report plus manifest."""
    spec = load_experiment(spec_path)
    if target_address:
        spec = spec.replace(target_address=target_address)
    report = run_experiment(spec, model_out=model_out)
    out = out or spec.output
    doc = report.to_dict(with_manifest=True)
    if out:
        Path(out).write_text(json.dumps(doc, indent=1))
    else:
        click.echo(json.dumps(doc))
    click.echo(
        f"precision={report.precision:.4f} recall={report.recall:.4f} auc={report.auc:.4f} "
        f"queries={report.query_cost}",
        err=True,
    )


@cli.command(name="sweep")
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False))
@click.option("--axis", required=True, type=click.Choice(AXES))
@click.option("--values", required=True, help="Comma-separated; dropout_grid points as input:hidden.")
@click.option("--out", type=click.Path(dir_okay=False), help="Report series JSON.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Also write the CSV table here.")
@click.option("--jobs", default=1, show_default=True, type=int)
@guarded
def sweep_cmd(spec_path, axis, values, out, csv_path, jobs):
    """Run one experiment per axis value."""
    spec = load_experiment(spec_path)
    reports = sweep(spec, axis, parse_values(axis, values), jobs=jobs)
    out = out or spec.output
    if out:
        save_reports(reports, out)
    if csv_path:
        Path(csv_path).write_text(reports_to_csv(reports))
    click.echo(reports_to_csv(reports), nl=False)


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(dir_okay=False), help="Report or report series JSON.")
@click.option("--format", "fmt", type=click.Choice(["csv", "table"]), default="csv", show_default=True)
@guarded
def report(in_path, fmt):
    """Render saved reports as CSV or an aligned table."""
    reports = load_reports(in_path)
    click.echo(reports_to_csv(reports) if fmt == "csv" else reports_to_table(reports), nl=False)


def main():
    cli(prog_name="mileaks")


if __name__ == "__main__":
    main()
