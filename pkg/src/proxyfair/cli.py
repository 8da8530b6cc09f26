"""Command-line entry point: ``proxyfair <command> [options]``.

Exit codes: 0 on success, 1 for data, config or usage errors, 2 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, lemma_geometry as geo
from .constrained import ConstrainedTrainConfig, FairnessConstraint, synthetic_coverage_instance, train_constrained
from .dataset import EncodingSpec, Encoder, encode, ingestion_report, load_adult, load_adult_split
from .errors import ConfigError, DataError, NumericalError, ProxyFairError
from .harness import ExperimentConfig, build_groupsets, resolve_output_dir, write_atomic
from .metrics import evaluate
from .model import LinearModel, TrainConfig, accuracy, predict, score, train_base
from .postshift import ShiftModel, apply_shift, fit_shift

logger = logging.getLogger("proxyfair")

ADULT_ENV = "ADULT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; ours reserves 2 for numerics
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(p, suppress):
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=default, help="random seed (default: config seed, else 0)")
    p.add_argument("--config", default=default, help="experiment config JSON")
    p.add_argument("--out", default=default, help="output directory (overrides $PROXYFAIR_OUT)")
    p.add_argument("--format", choices=("json", "md", "csv"), default=argparse.SUPPRESS if suppress else "json")


def _adult_paths(p, required=False):
    p.add_argument("--train", required=required, help="adult.data path (default $ADULT_DIR/adult.data)")
    p.add_argument("--test", help="adult.test path (default $ADULT_DIR/adult.test)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proxyfair", description="Proxy-group fairness experiments.")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = add("ingest", "parse the Adult files and print an ingestion report")
    _adult_paths(p)

    p = add("train-base", "train the base logistic model; writes model.json")
    _adult_paths(p)

    p = add("post-shift", "fit per-group shifts on the training split; writes shift.json")
    p.add_argument("--model", required=True)
    _adult_paths(p)
    p.add_argument("--groupset", required=True, help="raw column to group by, e.g. sex or race")
    p.add_argument("--objective", choices=("fairness", "accuracy"), required=True)
    p.add_argument("--goal", choices=("accurate_coverage", "equal_opportunity"), default="accurate_coverage")

    p = add("evaluate", "fairness report for a model, optionally shifted")
    p.add_argument("--model", required=True)
    p.add_argument("--shift", help="shift.json from post-shift")
    _adult_paths(p)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--groupsets", default="sex,race", help="comma-separated evaluation columns")

    p = add("constrained-train", "train with a coverage-floor constraint (synthetic instance by default)")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--outer-iterations", type=int, default=20)

    p = add("lemma-demo", "check the proxy projection lemma on random instances")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--case", choices=("random", "A", "B", "C", "D"), default="random")

    p = add("reproduce-adult", "run both Adult tables and compare with published values")
    _adult_paths(p)
    return parser


# --- helpers --------------------------------------------------------------------------


def _config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None and args.seed != cfg.seed:
        cfg = ExperimentConfig.from_json({**cfg.to_json(), "seed": args.seed})
    return cfg


def _resolve_adult(args, cfg: ExperimentConfig, need_test=True):
    adult_dir = Path(os.environ.get(ADULT_ENV, "data/adult"))
    train = getattr(args, "train", None) or cfg.train_path or adult_dir / "adult.data"
    test = getattr(args, "test", None) or cfg.test_path
    if test is None and need_test:
        test = adult_dir / "adult.test"
    return str(train), None if test is None else str(test)


def _emit(text: str, out_dir: Path | None, filename: str | None):
    if out_dir is not None and filename:
        write_atomic(out_dir / filename, text)
        logger.info("wrote %s", out_dir / filename)
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _out_dir(args, cfg=None):
    return resolve_output_dir(getattr(args, "out", None), cfg)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _load_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc


def _load_model(path):
    obj = _load_json(path, "model")
    try:
        return LinearModel.from_json(obj["model"]), Encoder.from_json(obj["encoder"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path} is not a proxyfair model file: {exc}") from exc


# --- commands ----------------------------------------------------------------------------


def cmd_ingest(args):
    cfg = _config(args)
    train_path, test_path = _resolve_adult(args, cfg)
    report: dict = {}
    train, test = load_adult(train_path, test_path, report)
    out = ingestion_report(train, test, report)
    if args.format == "md":
        lines = ["| split | rows read | dropped (missing) | retained | positives |", "|---|---|---|---|---|"]
        for split in ("train", "test"):
            if split in out:
                r = out[split]
                lines.append(
                    f"| {split} | {r['rows_read']} | {r['rows_dropped_missing']} | {r['rows_retained']} | {r['label_positive_count']} |"
                )
        _emit("\n".join(lines), _out_dir(args, cfg), "ingestion.md")
    else:
        _emit(_dump(out), _out_dir(args, cfg), "ingestion.json")


def cmd_train_base(args):
    cfg = _config(args)
    train_path, _ = _resolve_adult(args, cfg, need_test=False)
    train = load_adult_split(train_path, "train")
    spec = EncodingSpec.adult(cfg.excluded_columns)
    enc = encode(train, train, spec)
    model = train_base(enc.train, train.labels, cfg.base, feature_names=enc.feature_names)
    obj = {
        "model": model.to_json(),
        "encoder": enc.encoder.to_json(),
        "train_config": cfg.base.to_json(),
        "train_accuracy": accuracy(predict(score(model, enc.train), model.threshold), train.labels),
    }
    _emit(_dump(obj), _out_dir(args, cfg), "model.json")


def _scores_for(model, encoder, data):
    return score(model, encoder.transform(data))


def cmd_post_shift(args):
    cfg = _config(args)
    model, encoder = _load_model(args.model)
    train_path, _ = _resolve_adult(args, cfg, need_test=False)
    train = load_adult_split(train_path, "train")
    groups, _ = build_groupsets(args.groupset, cfg.groupsets.get(args.groupset), train, None)
    s = _scores_for(model, encoder, train)
    goal = args.goal
    shift = fit_shift(s, train.labels, groups, args.objective, goal, threshold=model.threshold)
    _emit(shift.dumps(), _out_dir(args, cfg), "shift.json")


def cmd_evaluate(args):
    cfg = _config(args)
    model, encoder = _load_model(args.model)
    train_path, test_path = _resolve_adult(args, cfg, need_test=args.split == "test")
    train = load_adult_split(train_path, "train")
    data = train if args.split == "train" else load_adult_split(test_path, "test")
    s = _scores_for(model, encoder, data)
    if args.shift:
        shift = ShiftModel.from_json(_load_json(args.shift, "shift"))
        _, gte = build_groupsets(shift.groupset_name, cfg.groupsets.get(shift.groupset_name), train, data)
        s = apply_shift(s, gte, shift)
    preds = predict(s, model.threshold)
    reports = {}
    for name in [g.strip() for g in args.groupsets.split(",") if g.strip()]:
        _, groups = build_groupsets(name, cfg.groupsets.get(name), train, data)
        reports[name] = evaluate(preds, data.labels, groups)
    out_dir = _out_dir(args, cfg)
    if args.format == "md":
        text = "\n".join(r.to_markdown() for r in reports.values())
        _emit(text, out_dir, f"evaluation_{args.split}.md")
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["groupset", "group", "count", "coverage", "label_rate", "accuracy", "tpr", "fpr"])
        for name, r in reports.items():
            for g, st in r.per_group.items():
                w.writerow([name, g, st.count, st.coverage, st.label_rate, st.accuracy, st.tpr, st.fpr])
        _emit(buf.getvalue(), out_dir, f"evaluation_{args.split}.csv")
    else:
        obj = {"split": args.split, "accuracy": accuracy(preds, data.labels)}
        obj["reports"] = {k: r.to_json() for k, r in reports.items()}
        _emit(_dump(obj), out_dir, f"evaluation_{args.split}.json")


def cmd_constrained_train(args):
    cfg = _config(args)
    X, y, group = synthetic_coverage_instance(n=args.n, seed=cfg.seed)
    constraint = FairnessConstraint("coverage_floor", group, alpha=args.alpha, name="group_a")
    ccfg = ConstrainedTrainConfig(outer_iterations=args.outer_iterations, inner=TrainConfig(seed=cfg.seed))
    result = train_constrained(X, y, [constraint], ccfg, feature_names=("x0", "x1"))
    out_dir = _out_dir(args, cfg)
    summary = {
        "instance": {"kind": "synthetic_coverage", "n": args.n, "seed": cfg.seed, "alpha": args.alpha},
        "model": result.model.to_json(),
        "final_constraint_values": dict(zip(result.constraint_names, result.trace[-1].indicator_values)),
        "multipliers": dict(zip(result.constraint_names, result.multipliers)),
        "infeasible": result.infeasible,
        "accuracy": accuracy(predict(score(result.model, X), result.model.threshold), y),
    }
    write_atomic(out_dir / "trace.csv", result.trace_csv())
    if args.format == "csv":
        _emit(result.trace_csv(), None, None)
        write_atomic(out_dir / "constrained_model.json", _dump(summary))
    else:
        _emit(_dump(summary), out_dir, "constrained_model.json")


def _fmt_vec(v):
    return " ".join(f"{x:.10g}" for x in v)


def cmd_lemma_demo(args):
    cfg = _config(args)
    rng = np.random.default_rng(cfg.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "d1", "d2", "pass", "theta_star", "theta_c"])
    figures = []
    for i in range(args.count):
        if args.case == "random":
            inst = geo.random_instance(rng)
        else:
            inst = geo.generate_case(args.case, seed=cfg.seed + i)
        if args.case == "D":
            theta_c = geo.project_polyhedron(inst.theta_star, inst.proxy_set)
            d1 = geo.distance_to(inst.theta_star, inst.true_set)
            d2 = geo.distance_to(theta_c, inst.true_set)
            w.writerow(["D", repr(d1), repr(d2), "na", _fmt_vec(inst.theta_star), _fmt_vec(theta_c)])
        else:
            rep = geo.check_lemma(inst)
            w.writerow([rep.case, repr(rep.d_star), repr(rep.d_proxy), str(rep.passed).lower(), _fmt_vec(rep.theta_star), _fmt_vec(rep.theta_c)])
            theta_c = rep.theta_c
        if inst.theta_star.size == 2 and len(figures) < 20:
            figures.append(
                {
                    "theta_star": inst.theta_star.tolist(),
                    "theta_c": theta_c.tolist(),
                    "true_set": inst.true_set.to_json(),
                    "proxy_set": inst.proxy_set.to_json(),
                }
            )
    out_dir = _out_dir(args, cfg)
    write_atomic(out_dir / "lemma_cases.json", _dump(figures))
    _emit(buf.getvalue(), out_dir, "lemma_demo.csv")


def cmd_reproduce_adult(args):
    cfg = _config(args)
    train_path, test_path = _resolve_adult(args, cfg)
    out_dir = _out_dir(args, cfg)
    cov, eo = harness.reproduce_adult(train_path, test_path, out_dir, seed=cfg.seed, base=cfg.base)
    if args.format == "md":
        sys.stdout.write(harness.report_markdown(cov) + "\n" + harness.report_markdown(eo))
    else:
        sys.stdout.write(f"wrote reports to {out_dir}\n")
    failed = [r for rep in (cov, eo) for r in rep["rows"] if r["status"] != "ok"]
    if failed:
        raise NumericalError(f"{len(failed)} experiment rows failed; see reports")


COMMANDS = {
    "ingest": cmd_ingest,
    "train-base": cmd_train_base,
    "post-shift": cmd_post_shift,
    "evaluate": cmd_evaluate,
    "constrained-train": cmd_constrained_train,
    "lemma-demo": cmd_lemma_demo,
    "reproduce-adult": cmd_reproduce_adult,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ConfigError, ProxyFairError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
