"""Sweep one axis on the OVERFIT scenario and print the resulting table.

    python scripts/sweeps.py epochs
    python scripts/sweeps.py shadows
    python scripts/sweeps.py threshold --out t.csv
    python scripts/sweeps.py dropout --jobs 2
"""

from pathlib import Path

import click

from mileaks.experiment import AdversarySpec, reports_to_csv, reports_to_table, sweep
from mileaks.metrics import spearman
from mileaks.scenarios import overfit_spec

GRID = [0.0, 0.25, 0.5, 0.75]

STUDIES = {
    "epochs": (overfit_spec(), "epochs", [10, 30, 100, 300]),
    "shadows": (overfit_spec(), "num_shadow_models", [1, 2, 5, 10]),
    "kposteriors": (overfit_spec(), "k_posteriors", [1, 2, 3, 5, 10]),
    "threshold": (overfit_spec(AdversarySpec("3", n_probes=1000)), "t_percentile", [1, 5, 10, 25, 50]),
    "dropout": (overfit_spec(), "dropout_grid", [(a, b) for a in GRID for b in GRID]),
}


@click.command()
@click.argument("study", type=click.Choice(sorted(STUDIES)))
@click.option("--out", type=click.Path(dir_okay=False), help="Write the CSV table here as well.")
@click.option("--jobs", default=1, show_default=True)
def main(study, out, jobs):
    spec, axis, values = STUDIES[study]
    reports = sweep(spec, axis, values, jobs=jobs)
    click.echo(reports_to_table(reports))
    if study == "dropout":
        base = reports[0]  # the (0, 0) point trains without dropout
        of = [base.overfitting_level - r.overfitting_level for r in reports]
        pr = [base.precision - r.precision for r in reports]
        click.echo(f"spearman(overfitting reduction, precision reduction) = {spearman(of, pr):.3f}")
    if out:
        Path(out).write_text(reports_to_csv(reports))


if __name__ == "__main__":
    main()
