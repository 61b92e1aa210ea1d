"""Every attack against the OVERFIT and GENERALIZING targets, side by side."""

import click

from mileaks.experiment import AdversarySpec, run_experiment
from mileaks.scenarios import generalizing_spec, overfit_spec, transfer_adversary

ATTACKS = {
    "adversary 1": AdversarySpec("1"),
    "combining": AdversarySpec("combining"),
    "adversary 2 (hypercube shadow)": transfer_adversary(),
    "adversary 3 (t=10)": AdversarySpec("3", n_probes=1000, t_percent=10),
}


@click.command()
@click.option("--seed", default=0, show_default=True)
def main(seed):
    click.echo(f"{'scenario':<13} {'attack':<31} {'precision':>9} {'recall':>7} {'auc':>6} {'queries':>7}")
    for scenario, make in (("OVERFIT", overfit_spec), ("GENERALIZING", generalizing_spec)):
        for name, adv in ATTACKS.items():
            r = run_experiment(make(adv, seed=seed))
            click.echo(f"{scenario:<13} {name:<31} {r.precision:>9.3f} {r.recall:>7.3f} {r.auc:>6.3f} {r.query_cost:>7}")


if __name__ == "__main__":
    main()
