"""Adversary 1 against undefended, dropout and stacked OVERFIT targets."""

import click

from mileaks.experiment import DefenseSpec, run_experiment
from mileaks.scenarios import overfit_spec, stacking_baseline_spec, stacking_spec


@click.command()
@click.option("--seed", default=0, show_default=True)
def main(seed):
    rows = {
        "none (standard split)": overfit_spec(seed=seed),
        "dropout 0.5/0.5": overfit_spec(defense=DefenseSpec("dropout", 0.5, 0.5), seed=seed),
        "none (stacking split)": stacking_baseline_spec(seed),
        "stacking": stacking_spec(seed),
    }
    click.echo(f"{'defense':<22} {'precision':>9} {'recall':>7} {'train acc':>9} {'test acc':>8} {'overfit':>7}")
    for name, spec in rows.items():
        r = run_experiment(spec)
        click.echo(
            f"{name:<22} {r.precision:>9.3f} {r.recall:>7.3f} {r.target_train_accuracy:>9.3f} "
            f"{r.target_test_accuracy:>8.3f} {r.overfitting_level:>7.3f}"
        )


if __name__ == "__main__":
    main()
