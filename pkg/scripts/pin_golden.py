"""Regenerate the pinned OVERFIT adversary-1 report used by the test suite.

Only run this after a deliberate, reviewed change to the numerics.
"""

import json
from pathlib import Path

from mileaks.experiment import run_experiment
from mileaks.scenarios import overfit_spec

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "overfit_report.json"


def rounded(d: dict) -> dict:
    return {k: float(f"{v:.12g}") if isinstance(v, float) else v for k, v in d.items()}


def main():
    report = run_experiment(overfit_spec())
    OUT.write_text(json.dumps(rounded(report.to_dict()), indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
