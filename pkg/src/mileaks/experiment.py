"""Experiment specs, the end-to-end orchestrator, sweeps and report rendering."""

from __future__ import annotations

import dataclasses
import io
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import attacks, datasets, learners
from .blackbox import BlackBoxModel, RemoteBlackBox
from .core import Dataset, TrainConfig, ValidationError, derive_seed, strict_kwargs
from .defenses import StackingConfig, apply_dropout, fit_model
from .metrics import auc, overfitting_level, precision_recall

log = logging.getLogger(__name__)

ADVERSARIES = ("1", "combining", "2", "3")
DEFENSES = ("none", "dropout", "stacking")
AXES = ("epochs", "num_shadow_models", "k_posteriors", "dropout_grid", "t_percentile")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


@dataclass(frozen=True)
class DatasetSource:
    csv: str | None = None
    synthetic: datasets.SyntheticSpec | None = None
    has_header: bool = False
    label_column: int | str = -1
    feature_kind: str | None = None

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ValidationError("dataset: give exactly one of 'csv' or 'synthetic'")

    def load(self) -> Dataset:
        if self.synthetic is not None:
            ds = datasets.generate(self.synthetic)
            return ds.with_feature_kind(self.feature_kind) if self.feature_kind else ds
        return datasets.load_csv(self.csv, self.has_header, self.label_column, self.feature_kind)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.synthetic is not None:
            d["synthetic"] = self.synthetic.to_dict()
        return {k: v for k, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, d) -> "DatasetSource":
        d = strict_kwargs(cls, d, "dataset")
        if d.get("synthetic") is not None:
            d["synthetic"] = datasets.SyntheticSpec.from_dict(d["synthetic"])
        return cls(**d)


@dataclass(frozen=True)
class DefenseSpec:
    kind: str = "none"
    dropout_input: float = 0.5
    dropout_hidden: float = 0.5
    stacking: StackingConfig | None = None

    def __post_init__(self):
        if self.kind not in DEFENSES:
            raise ValidationError(f"defense.kind must be one of {DEFENSES}, got {self.kind!r}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "dropout":
            d.update(dropout_input=self.dropout_input, dropout_hidden=self.dropout_hidden)
        if self.stacking is not None:
            d["stacking"] = self.stacking.to_dict()
        return d

    @classmethod
    def from_dict(cls, d) -> "DefenseSpec":
        d = strict_kwargs(cls, d, "defense")
        if d.get("stacking") is not None:
            d["stacking"] = StackingConfig.from_dict(d["stacking"])
        return cls(**d)


@dataclass(frozen=True)
class AdversarySpec:
    kind: str = "1"
    shadow: TrainConfig | None = None
    attack: TrainConfig | None = None
    sub_shadows: tuple[TrainConfig, ...] = ()
    shadow_dataset: DatasetSource | None = None
    shadow_split_seed: int | None = None
    k: int | None = None
    num_shadow_models: int = 1
    t_percent: float = attacks.DEFAULT_T_PERCENT
    n_probes: int = attacks.DEFAULT_PROBES
    probe_kind: str | None = None
    statistic: str = "max"
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARIES:
            raise ValidationError(f"adversary.kind must be one of {ADVERSARIES}, got {self.kind!r}")
        if self.num_shadow_models < 1:
            raise ValidationError("adversary.num_shadow_models must be >= 1")
        if self.num_shadow_models > 1 and self.kind != "1":
            raise ValidationError("adversary.num_shadow_models applies to adversary 1 only")
        if self.statistic not in attacks.STATISTICS:
            raise ValidationError(f"adversary.statistic must be one of {attacks.STATISTICS}")
        if self.statistic != "max" and self.threshold is None and self.kind == "3":
            raise ValidationError("adversary.statistic other than max needs a fixed adversary.threshold")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.shadow is not None:
            d["shadow"] = self.shadow.to_dict()
        if self.attack is not None:
            d["attack"] = self.attack.to_dict()
        if self.sub_shadows:
            d["sub_shadows"] = [c.to_dict() for c in self.sub_shadows]
        if self.shadow_dataset is not None:
            d["shadow_dataset"] = self.shadow_dataset.to_dict()
        for name in ("shadow_split_seed", "k", "probe_kind", "threshold"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        d.update(
            num_shadow_models=self.num_shadow_models,
            t_percent=self.t_percent,
            n_probes=self.n_probes,
            statistic=self.statistic,
        )
        return d

    @classmethod
    def from_dict(cls, d) -> "AdversarySpec":
        d = strict_kwargs(cls, d, "adversary")
        if "kind" in d:
            d["kind"] = str(d["kind"])
        for key in ("shadow", "attack"):
            if d.get(key) is not None:
                d[key] = TrainConfig.from_dict(d[key])
        if "sub_shadows" in d:
            d["sub_shadows"] = tuple(TrainConfig.from_dict(c) for c in d["sub_shadows"])
        if d.get("shadow_dataset") is not None:
            d["shadow_dataset"] = DatasetSource.from_dict(d["shadow_dataset"])
        return cls(**d)


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetSource
    target: TrainConfig = field(default_factory=TrainConfig)
    defense: DefenseSpec = field(default_factory=DefenseSpec)
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    seed: int = 0
    split_seed: int | None = None
    target_address: str | None = None
    output: str | None = None
    split_kind: str | None = None

    def __post_init__(self):
        if self.split_kind not in (None, "standard", "stacking"):
            raise ValidationError("split_kind must be 'standard' or 'stacking'")

    @property
    def effective_split(self) -> str:
        """The stacking defense always uses the 12-way split; others default to the 4-way one."""
        if self.defense.kind == "stacking":
            return "stacking"
        return self.split_kind or "standard"

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {
            "dataset": self.dataset.to_dict(),
            "target": self.target.to_dict(),
            "defense": self.defense.to_dict(),
            "adversary": self.adversary.to_dict(),
            "seed": self.seed,
        }
        for name in ("split_seed", "target_address", "output", "split_kind"):
            if getattr(self, name) is not None:
                d[name] = getattr(self, name)
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentSpec":
        d = strict_kwargs(cls, d, "experiment")
        if "dataset" not in d:
            raise ValidationError("experiment: missing 'dataset'")
        d["dataset"] = DatasetSource.from_dict(d["dataset"])
        if "target" in d:
            d["target"] = TrainConfig.from_dict(d["target"])
        if "defense" in d:
            d["defense"] = DefenseSpec.from_dict(d["defense"])
        if "adversary" in d:
            d["adversary"] = AdversarySpec.from_dict(d["adversary"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class AttackReport:
    precision: float
    recall: float
    auc: float | None
    target_train_accuracy: float
    target_test_accuracy: float
    overfitting_level: float
    query_cost: int
    precision_undefined: bool = False
    recall_undefined: bool = False
    threshold: float | None = None
    k: int | None = None
    axis: str | None = None
    axis_value: Any = None
    manifest: dict | None = None

    def to_dict(self, with_manifest: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not with_manifest:
            d.pop("manifest")
        return d

    def __eq__(self, other):
        if not isinstance(other, AttackReport):
            return NotImplemented
        return self.to_dict(True) == other.to_dict(True)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackReport":
        return cls(**strict_kwargs(cls, d, "report"))


# --- orchestration ---------------------------------------------------------


def _stage(name):
    def wrap(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, StageError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    return wrap


def _target_recipe(spec: ExperimentSpec, seed: int):
    target = spec.target.replace(seed=seed)
    if spec.defense.kind == "dropout":
        return apply_dropout(target, spec.defense.dropout_input, spec.defense.dropout_hidden)
    if spec.defense.kind == "stacking":
        stacking = spec.defense.stacking or StackingConfig(base1=spec.target)
        return stacking.replace(seed=seed)
    return target


def _shadow_recipe(spec: ExperimentSpec, seed: int):
    """The attacker copies the target's training recipe, including any defense."""
    if spec.adversary.shadow is None:
        return _target_recipe(spec, seed)
    shadow = spec.adversary.shadow.replace(seed=seed)
    if spec.defense.kind == "dropout" and shadow.learner_kind == "mlp":
        shadow = apply_dropout(shadow, spec.defense.dropout_input, spec.defense.dropout_hidden)
    return shadow


def _default_sub_shadows(spec: ExperimentSpec):
    base = spec.target
    return (
        base.replace(learner_kind="mlp"),
        TrainConfig("logistic", epochs=base.epochs, batch_size=base.batch_size, learning_rate=0.1),
        TrainConfig("forest", trees=32, max_depth=32),
    )


def run_experiment(spec: ExperimentSpec, model_out: str | None = None) -> AttackReport:
    """Split, train (maybe defended) target, wrap it, attack, score. Deterministic in the seeds."""
    adv = spec.adversary
    split_seed = spec.seed if spec.split_seed is None else spec.split_seed
    seeds = {name: derive_seed(spec.seed, i) for i, name in enumerate(("target", "shadow", "attack", "probes"), 1)}

    dataset = _stage("dataset")(spec.dataset.load)
    if spec.effective_split == "stacking":
        raw_plan = _stage("split")(datasets.plan_stacking_split, dataset, split_seed)
        plan = datasets.stacking_as_standard(raw_plan)
    else:
        raw_plan = plan = _stage("split")(datasets.plan_standard_split, dataset, split_seed)

    target_recipe = _target_recipe(spec, seeds["target"])
    if spec.defense.kind == "stacking":
        t_parts = [raw_plan[p] for p in ("t1", "t2", "t3")]
        target_model = _stage("target")(target_recipe.fit, dataset, t_parts)
    else:
        target_model = _stage("target")(fit_model, target_recipe, dataset, plan["target_train"])
    if model_out:
        learners.save_model(target_model, model_out)
    train_acc = learners.accuracy(target_model, dataset, plan["target_train"])
    test_acc = learners.accuracy(target_model, dataset, plan["target_out"])

    if spec.target_address:
        box = _stage("connect")(RemoteBlackBox, spec.target_address)
    else:
        box = BlackBoxModel(target_model)
    start = box.query_count

    attack_cfg = (adv.attack or attacks.default_attack_config()).replace(seed=seeds["attack"])
    manifest: dict[str, Any] = {
        "spec": spec.to_dict(),
        "seeds": seeds,
        "split_seed": split_seed,
        "split_plan": raw_plan.to_dict(),
        "target_recipe": target_recipe.to_dict(),
    }
    threshold = None
    attack_stage = _stage("attack")
    if adv.kind in ("1", "2", "combining"):
        shadow_recipe = _shadow_recipe(spec, seeds["shadow"])
        manifest["attack_config"] = attack_cfg.to_dict()
        if adv.kind == "1":
            manifest["shadow_recipe"] = shadow_recipe.to_dict()
            if adv.num_shadow_models > 1:
                outcome = attack_stage(
                    attacks.multi_shadow_attack, shadow_recipe, attack_cfg, dataset, plan, box,
                    adv.num_shadow_models, adv.k,
                )
            else:
                outcome = attack_stage(attacks.adversary1, shadow_recipe, attack_cfg, dataset, plan, box, adv.k)
        elif adv.kind == "2":
            manifest["shadow_recipe"] = shadow_recipe.to_dict()
            if adv.shadow_dataset is None:
                shadow_ds, shadow_plan = dataset, plan
            else:
                shadow_ds = _stage("shadow dataset")(adv.shadow_dataset.load)
                sseed = split_seed if adv.shadow_split_seed is None else adv.shadow_split_seed
                shadow_plan = _stage("shadow split")(datasets.plan_standard_split, shadow_ds, sseed)
                manifest["shadow_split_plan"] = shadow_plan.to_dict()
            outcome = attack_stage(
                attacks.adversary2, shadow_ds, shadow_plan, shadow_recipe, attack_cfg, dataset, plan, box, adv.k
            )
        else:
            subs = adv.sub_shadows or _default_sub_shadows(spec)
            subs = [c.replace(seed=derive_seed(seeds["shadow"], i)) for i, c in enumerate(subs)]
            if spec.defense.kind == "dropout":
                subs = [
                    apply_dropout(c, spec.defense.dropout_input, spec.defense.dropout_hidden)
                    if c.learner_kind == "mlp" else c
                    for c in subs
                ]
            manifest["sub_shadows"] = [c.to_dict() for c in subs]
            outcome = attack_stage(attacks.combining_attack, subs, attack_cfg, dataset, plan, box, adv.k)
    else:
        if adv.threshold is not None:
            rule = attacks.ThresholdRule(adv.statistic, adv.threshold)
        else:
            space = dataset.feature_space
            if adv.probe_kind:
                space = dataclasses.replace(space, kind=adv.probe_kind)
            probes = attack_stage(attacks.generate_probes, space, adv.n_probes, seeds["probes"])
            rule = attack_stage(attacks.choose_threshold, box, probes, adv.t_percent)
        threshold = rule.threshold
        manifest["rule"] = dataclasses.asdict(rule)
        outcome = attack_stage(attacks.adversary3_on_plan, box, rule, dataset, plan)

    pr = precision_recall(outcome.decisions, outcome.truth)
    manifest["outcome"] = outcome.to_dict()
    report = AttackReport(
        precision=pr.precision,
        recall=pr.recall,
        auc=auc(outcome.scores, outcome.truth),
        target_train_accuracy=train_acc,
        target_test_accuracy=test_acc,
        overfitting_level=overfitting_level(target_model, dataset, plan["target_train"], plan["target_out"]),
        query_cost=box.query_count - start,
        precision_undefined=pr.precision_undefined,
        recall_undefined=pr.recall_undefined,
        threshold=threshold,
        k=outcome.k,
        manifest=manifest,
    )
    log.info("precision=%.3f recall=%.3f queries=%d", report.precision, report.recall, report.query_cost)
    return report


def spec_at(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    """The experiment with one sweep axis set to ``value``."""
    adv = spec.adversary
    if axis == "epochs":
        v = int(value)
        changes: dict[str, Any] = {}
        if adv.shadow is not None:
            changes["shadow"] = adv.shadow.replace(epochs=v)
        if adv.sub_shadows:
            changes["sub_shadows"] = tuple(c.replace(epochs=v) for c in adv.sub_shadows)
        return spec.replace(target=spec.target.replace(epochs=v), adversary=dataclasses.replace(adv, **changes))
    if axis == "num_shadow_models":
        if adv.kind != "1":
            raise ValidationError("num_shadow_models sweeps need adversary 1")
        return spec.replace(adversary=dataclasses.replace(adv, num_shadow_models=int(value)))
    if axis == "k_posteriors":
        if adv.kind == "3":
            raise ValidationError("k_posteriors does not apply to adversary 3")
        return spec.replace(adversary=dataclasses.replace(adv, k=int(value)))
    if axis == "dropout_grid":
        ratio_in, ratio_hidden = (value, value) if np.isscalar(value) else value
        if spec.target.learner_kind != "mlp":
            raise ValidationError("dropout_grid needs an mlp target")
        return spec.replace(defense=DefenseSpec("dropout", float(ratio_in), float(ratio_hidden)))
    if axis == "t_percentile":
        if adv.kind != "3":
            raise ValidationError("t_percentile applies to adversary 3 only")
        return spec.replace(adversary=dataclasses.replace(adv, t_percent=float(value)))
    raise ValidationError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def _run_point(args):
    spec, axis, value = args
    r = run_experiment(spec)
    return dataclasses.replace(r, axis=axis, axis_value=value)


def sweep(spec: ExperimentSpec, axis: str, values: Sequence, jobs: int = 1) -> list[AttackReport]:
    """One report per value; all points share the base seeds so only the axis varies."""
    points = [(spec_at(spec, axis, v), axis, v) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(_run_point, points))
    return [_run_point(p) for p in points]


# --- report rendering ------------------------------------------------------

TABLE_COLUMNS = (
    "axis_value",
    "precision",
    "recall",
    "auc",
    "target_train_accuracy",
    "target_test_accuracy",
    "query_cost",
)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (list, tuple)):
        return "/".join(_cell(x) for x in v)
    return str(v)


def reports_to_csv(reports: Sequence[AttackReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in reports:
        w.writerow([_cell(getattr(r, c)) for c in TABLE_COLUMNS])
    return buf.getvalue()


def reports_to_table(reports: Sequence[AttackReport]) -> str:
    rows = [list(TABLE_COLUMNS)]
    for r in reports:
        rows.append([
            _cell(r.axis_value),
            *(f"{getattr(r, c):.4f}" if getattr(r, c) is not None else "-" for c in TABLE_COLUMNS[1:6]),
            str(r.query_cost),
        ])
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows) + "\n"


def save_reports(reports: Sequence[AttackReport], path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=1))


def load_reports(path) -> list[AttackReport]:
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        data = [data]
    return [AttackReport.from_dict(d) for d in data]
