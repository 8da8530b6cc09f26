"""End-to-end experiments: ingest, train one base model, fit shifts on proxy groups
(train split only), evaluate on the true groups of both splits, write reports.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import reference
from .dataset import (
    Dataset,
    EncodingSpec,
    GroupSet,
    categorical_groups,
    encode,
    ingestion_report,
    load_adult,
    quantile_groups,
    top_m_groups,
)
from .errors import ConfigError, ProxyFairError
from .metrics import evaluate
from .model import TrainConfig, accuracy, predict, score, train_base
from .postshift import GOALS, apply_shift, fit_shift

logger = logging.getLogger(__name__)

OUT_ENV = "PROXYFAIR_OUT"

DISPLAY = {"none": "None", "sex": "Gender", "race": "Race", "fairness": "Fairness", "accuracy": "Accuracy"}


@dataclass(frozen=True)
class RowSpec:
    shift_feature: str = "none"
    shift_objective: str = "none"

    def __post_init__(self):
        if self.shift_objective not in ("none", "fairness", "accuracy"):
            raise ConfigError(f"unknown shift objective {self.shift_objective!r}")
        if (self.shift_feature == "none") != (self.shift_objective == "none"):
            raise ConfigError("shift_feature and shift_objective must both be 'none' or both be set")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on; embedded verbatim in every report.

    ``groupsets`` maps names to definitions. A bare string names a
    categorical column; dicts select other constructions::

        {"column": "age", "kind": "quantile", "k": 3}
        {"column": "native-country", "kind": "top_m", "m": 10, "min_count": 300}

    Names not listed default to the categorical column of the same name.
    """

    train_path: str | None = None
    test_path: str | None = None
    excluded_columns: tuple = ("sex", "race")
    base: TrainConfig = TrainConfig()
    goal: str = "accurate_coverage"
    rows: tuple = (RowSpec(),)
    eval_groupsets: tuple = ("sex", "race")
    groupsets: dict = field(default_factory=dict)
    output_dir: str | None = None
    seed: int = 0
    name: str = "experiment"

    def __post_init__(self):
        if self.goal not in GOALS:
            raise ConfigError(f"unknown goal {self.goal!r}")
        rows = tuple(r if isinstance(r, RowSpec) else RowSpec(**r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "excluded_columns", tuple(self.excluded_columns))
        object.__setattr__(self, "eval_groupsets", tuple(self.eval_groupsets))
        if isinstance(self.base, dict):
            object.__setattr__(self, "base", TrainConfig(**self.base))
        if self.base.seed != self.seed:
            # one seed owns every random choice of the run
            object.__setattr__(self, "base", TrainConfig(**{**asdict(self.base), "seed": self.seed}))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "train_path": self.train_path,
            "test_path": self.test_path,
            "excluded_columns": list(self.excluded_columns),
            "base": asdict(self.base),
            "goal": self.goal,
            "rows": [asdict(r) for r in self.rows],
            "eval_groupsets": list(self.eval_groupsets),
            "groupsets": dict(self.groupsets),
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(obj)
        if "base" in kw:
            try:
                kw["base"] = TrainConfig(**kw["base"])
            except TypeError as exc:
                raise ConfigError(f"bad base config: {exc}") from exc
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(obj)


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def resolve_output_dir(explicit=None, config: ExperimentConfig | None = None) -> Path:
    if explicit:
        return Path(explicit)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if config is not None and config.output_dir:
        return Path(config.output_dir)
    return Path("out")


# --- groupsets over both splits -------------------------------------------------


def build_groupsets(name: str, definition, train: Dataset, test: Dataset | None):
    """``(train_groups, test_groups)`` built from training-split statistics."""
    try:
        return _build_groupsets(name, definition, train, test)
    except KeyError as exc:
        raise ConfigError(f"groupset {name!r} is not constructible: {exc.args[0]}") from None


def _build_groupsets(name: str, definition, train: Dataset, test: Dataset | None):
    definition = name if definition is None else definition
    if isinstance(definition, str):
        gtr = categorical_groups(train, definition, name=name)
        gte = None
        if test is not None:
            lab = np.asarray(test.column(definition)).astype(str)
            extra = set(lab.tolist()) - set(gtr.group_names)
            if extra:
                raise ConfigError(f"groupset {name!r}: test-only categories {sorted(extra)}")
            gte = GroupSet.from_labels(name, lab, order=gtr.group_names)
        return gtr, gte
    kind = definition.get("kind", "categorical")
    column = definition.get("column", name)
    if kind == "categorical":
        return _build_groupsets(name, column, train, test)
    if kind == "quantile":
        k = int(definition.get("k", 3))
        ref = np.asarray(train.column(column), dtype=float)
        gtr = quantile_groups(ref, k, name=name)
        gte = None if test is None else quantile_groups(np.asarray(test.column(column), dtype=float), k, reference=ref, name=name)
        return gtr, gte
    if kind == "top_m":
        full_tr, _ = _build_groupsets(name, column, train, None)
        gtr = top_m_groups(full_tr, int(definition.get("m", 10)), int(definition.get("min_count", 300)))
        gtr = GroupSet(name, gtr.masks, gtr.group_names, True, gtr.catch_all)
        gte = None
        if test is not None:
            kept = [g for g in gtr.group_names if g != gtr.catch_all]
            lab = np.asarray(test.column(column)).astype(str)
            lab = np.where(np.isin(lab, kept), lab, gtr.catch_all or "rest")
            gte = GroupSet.from_labels(name, lab, order=gtr.group_names, catch_all=None)
            if gtr.catch_all and gtr.catch_all in gte.group_names:
                gte = GroupSet(name, gte.masks, gte.group_names, True, gtr.catch_all)
        return gtr, gte
    raise ConfigError(f"groupset {name!r}: unknown kind {kind!r}")


# --- running ------------------------------------------------------------------------


@dataclass
class Prepared:
    config: ExperimentConfig
    train: Dataset
    test: Dataset | None
    train_scores: np.ndarray
    test_scores: np.ndarray | None
    model: object
    encoder: object
    ingestion: dict
    groups: dict  # name -> (train GroupSet, test GroupSet | None)

    def groupset(self, name):
        if name not in self.groups:
            self.groups[name] = build_groupsets(name, self.config.groupsets.get(name), self.train, self.test)
        return self.groups[name]


def prepare(config: ExperimentConfig) -> Prepared:
    if not config.train_path:
        raise ConfigError("train_path is required")
    ingest: dict = {}
    train, test = load_adult(config.train_path, config.test_path or None, ingest)
    enc = encode(train, test if test is not None else train, EncodingSpec.adult(config.excluded_columns))
    model = train_base(enc.train, train.labels, config.base, feature_names=enc.feature_names)
    return Prepared(
        config=config,
        train=train,
        test=test,
        train_scores=score(model, enc.train),
        test_scores=None if test is None else score(model, enc.test),
        model=model,
        encoder=enc.encoder,
        ingestion=ingestion_report(train, test, ingest),
        groups={},
    )


def _pct(x):
    return None if x is None else 100.0 * x


def run_row(prep: Prepared, row: RowSpec) -> dict:
    cfg = prep.config
    out = {"shift_feature": row.shift_feature, "shift_objective": row.shift_objective, "status": "ok"}
    s_tr, s_te = prep.train_scores, prep.test_scores
    betas = None
    if row.shift_objective != "none":
        g_tr, g_te = prep.groupset(row.shift_feature)
        shift = fit_shift(s_tr, prep.train.labels, g_tr, row.shift_objective, cfg.goal)
        betas = shift.betas
        out["shift_notes"] = list(shift.notes)
        s_tr = apply_shift(s_tr, g_tr, shift)
        if s_te is not None:
            s_te = apply_shift(s_te, g_te, shift)
    out["betas"] = betas
    p_tr = predict(s_tr, prep.model.threshold)
    p_te = None if s_te is None else predict(s_te, prep.model.threshold)
    out["train_acc"] = _pct(accuracy(p_tr, prep.train.labels))
    out["test_acc"] = None if p_te is None else _pct(accuracy(p_te, prep.test.labels))
    per = {}
    for name in cfg.eval_groupsets:
        g_tr, g_te = prep.groupset(name)
        r_tr = evaluate(p_tr, prep.train.labels, g_tr)
        r_te = None if p_te is None else evaluate(p_te, prep.test.labels, g_te)
        per[name] = {
            "mean_cov_err_train": _pct(r_tr.mean_coverage_error),
            "mean_cov_err_test": None if r_te is None else _pct(r_te.mean_coverage_error),
            "mean_eqopp_err_train": _pct(r_tr.mean_equal_opp_error),
            "mean_eqopp_err_test": None if r_te is None else _pct(r_te.mean_equal_opp_error),
            "warnings": list(r_tr.warnings) + ([] if r_te is None else list(r_te.warnings)),
        }
    out["groupsets"] = per
    return out


def metadata(prep: Prepared) -> dict:
    cfg = prep.config
    return {
        "units": "percent",
        "seed": cfg.seed,
        "preprocessing": {
            "ingestion": prep.ingestion,
            "excluded_columns": list(cfg.excluded_columns),
            "numeric_standardisation": "z-score with training-split mean/std",
            "categorical_encoding": "one-hot over training-split categories; unseen test categories encode to zeros",
            "encoder_warnings": list(prep.encoder.warnings),
        },
        "base_model": {
            "family": "L2-regularised logistic regression",
            "train_config": asdict(cfg.base),
            "threshold": prep.model.threshold,
        },
        "shift_targeting": {
            "fit_split": "train",
            "accurate_coverage": "per group, positive-prediction count closest to positive-label count",
            "equal_opportunity": "per group, TPR closest to the overall TPR of unshifted train predictions",
            "accuracy": "per group, thresholded accuracy maximised",
            "ties": "fairness: fewer positives then smaller |beta|; accuracy: smaller |beta| then fewer positives",
        },
    }


def run_prepared(prep: Prepared, config: ExperimentConfig | None = None) -> dict:
    config = config or prep.config
    prep.config = config
    rows = []
    for i, row in enumerate(config.rows):
        try:
            rows.append(run_row(prep, row))
        except ProxyFairError as exc:
            logger.error("row %d (%s/%s) failed: %s", i, row.shift_feature, row.shift_objective, exc)
            rows.append({**asdict(row), "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
    return {"config": config.to_json(), "seed": config.seed, "metadata": metadata(prep), "rows": rows}


def run_experiment(config: ExperimentConfig, output_dir=None, write=True) -> dict:
    report = run_prepared(prepare(config))
    if write:
        write_report(report, resolve_output_dir(output_dir, config), config.name)
    return report


# --- report rendering -----------------------------------------------------------------


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _fmt(x):
    return "-" if x is None else f"{x:.2f}"


def _metric_key(goal):
    return ("mean_cov_err", "Cov. Err.") if goal == "accurate_coverage" else ("mean_eqopp_err", "Eq Opp Error")


def report_markdown(report: dict) -> str:
    cfg = report["config"]
    key, label = _metric_key(cfg["goal"])
    groupsets = cfg["eval_groupsets"]
    head = ["Post-Shift Feature", "Post-Shift Obj.", "Train Acc.", "Test Acc."]
    for g in groupsets:
        head += [f"Mean Train {label} {DISPLAY.get(g, g)}", f"Mean Test {label} {DISPLAY.get(g, g)}"]
    lines = [
        f"## {cfg['name']}: fairness goal {cfg['goal'].replace('_', ' ')}",
        "",
        "| " + " | ".join(head) + " |",
        "|" + "---|" * len(head),
    ]
    for row in report["rows"]:
        cells = [DISPLAY.get(row["shift_feature"], row["shift_feature"]), DISPLAY.get(row["shift_objective"], row["shift_objective"])]
        if row["status"] != "ok":
            cells += ["FAILED"] + [""] * (len(head) - 3)
        else:
            cells += [_fmt(row["train_acc"]), _fmt(row["test_acc"])]
            for g in groupsets:
                m = row["groupsets"][g]
                cells += [_fmt(m[f"{key}_train"]), _fmt(m[f"{key}_test"])]
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", f"Seed: {report['seed']}. All values in percent."]
    return "\n".join(lines) + "\n"


def comparison_markdown(report: dict) -> str:
    """Our numbers next to the published reference values, with differences."""
    cfg = report["config"]
    ref = reference.REFERENCE[cfg["goal"]]
    key, label = _metric_key(cfg["goal"])
    lines = [
        f"## {cfg['name']}: ours vs. published ({label})",
        "",
        f"Reference: {reference.PROVENANCE}.",
        "",
        "| Feature | Obj. | Quantity | Ours | Published | Diff |",
        "|---|---|---|---|---|---|",
    ]
    for row in report["rows"]:
        r = ref.get((row["shift_feature"], row["shift_objective"]))
        if r is None or row["status"] != "ok":
            continue
        items = [("Train Acc.", row["train_acc"], r["train_acc"]), ("Test Acc.", row["test_acc"], r["test_acc"])]
        for g in cfg["eval_groupsets"]:
            if g in r:
                m = row["groupsets"][g]
                items.append((f"Train {label} {DISPLAY.get(g, g)}", m[f"{key}_train"], r[g][0]))
                items.append((f"Test {label} {DISPLAY.get(g, g)}", m[f"{key}_test"], r[g][1]))
        for q, ours, pub in items:
            diff = None if ours is None else ours - pub
            lines.append(
                f"| {DISPLAY.get(row['shift_feature'])} | {DISPLAY.get(row['shift_objective'])} | {q} "
                f"| {_fmt(ours)} | {_fmt(pub)} | {'-' if diff is None else f'{diff:+.2f}'} |"
            )
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir, stem: str):
    out_dir = Path(out_dir)
    write_atomic(out_dir / f"{stem}.json", dumps_report(report))
    write_atomic(out_dir / f"{stem}.md", report_markdown(report))


# --- the Adult reproduction ------------------------------------------------------------

ADULT_ROWS = (
    RowSpec("none", "none"),
    RowSpec("sex", "fairness"),
    RowSpec("race", "fairness"),
    RowSpec("sex", "accuracy"),
    RowSpec("race", "accuracy"),
)


def adult_configs(train_path, test_path, seed=0, base: TrainConfig | None = None):
    base = base or TrainConfig(seed=seed)
    common = dict(
        train_path=str(train_path),
        test_path=str(test_path),
        base=base,
        rows=ADULT_ROWS,
        eval_groupsets=("sex", "race"),
        seed=seed,
    )
    return (
        ExperimentConfig(goal="accurate_coverage", name="adult_accurate_coverage", **common),
        ExperimentConfig(goal="equal_opportunity", name="adult_equal_opportunity", **common),
    )


def reproduce_adult(train_path, test_path, output_dir=None, seed=0, base: TrainConfig | None = None, write=True):
    """Both Adult experiments on one shared base model.

    Returns ``(accurate_coverage_report, equal_opportunity_report)`` and, with
    ``write``, stores JSON and Markdown for each plus ``comparison.md``.
    """
    # the output location is not part of the experiment, so it stays out of
    # the embedded config and reports do not depend on where they are written
    cov_cfg, eo_cfg = adult_configs(train_path, test_path, seed, base)
    prep = prepare(cov_cfg)
    cov = run_prepared(prep, cov_cfg)
    eo = run_prepared(prep, eo_cfg)
    if write:
        out = resolve_output_dir(output_dir, cov_cfg)
        write_report(cov, out, cov_cfg.name)
        write_report(eo, out, eo_cfg.name)
        write_atomic(out / "comparison.md", comparison_markdown(cov) + "\n" + comparison_markdown(eo))
        write_atomic(out / "base_model.json", json.dumps(prep.model.to_json(), indent=2) + "\n")
    return cov, eo
