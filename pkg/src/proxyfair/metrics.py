"""Group fairness goals, the mean unfairness errors, and ROC operating points.

All per-group quantities are plain counts over the examples; rates that are
undefined for a group (e.g. TPR of a group without positive labels) are
reported as ``None`` and the group is listed in ``warnings``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import GroupSet
from .errors import ContractError


def _check(preds, labels=None, groups: GroupSet | None = None):
    p = np.asarray(preds).astype(np.int64)
    if p.ndim != 1:
        raise ContractError("predictions must be a vector")
    if not np.isin(p, (0, 1)).all():
        raise ContractError("predictions must be binary")
    y = None
    if labels is not None:
        y = np.asarray(labels).astype(np.int64)
        if y.shape != p.shape:
            raise ContractError(f"predictions ({p.size}) and labels ({y.size}) differ in length")
    if groups is not None and groups.n_examples != p.size:
        raise ContractError(f"groupset {groups.name!r} covers {groups.n_examples} examples, got {p.size}")
    return p, y


def _rate(num, den):
    return None if den == 0 else num / den


@dataclass(frozen=True)
class GroupStats:
    count: int
    coverage: float
    label_rate: float
    accuracy: float
    tpr: float | None
    fpr: float | None

    def to_json(self):
        return dict(self.__dict__)


def _stats(p, y) -> GroupStats:
    n = p.size
    pos = int(y.sum())
    neg = n - pos
    tp = int((p & y).sum())
    fp = int((p & (1 - y)).sum())
    return GroupStats(
        count=n,
        coverage=int(p.sum()) / n,
        label_rate=pos / n,
        accuracy=int((p == y).sum()) / n,
        tpr=_rate(tp, pos),
        fpr=_rate(fp, neg),
    )


@dataclass(frozen=True)
class FairnessReport:
    groupset: str
    per_group: dict
    aggregate: GroupStats
    mean_coverage_error: float
    mean_equal_opp_error: float | None
    coverage_gaps: dict
    equal_opp_gaps: dict
    warnings: tuple = field(default=())

    def to_json(self) -> dict:
        return {
            "groupset": self.groupset,
            "per_group": {k: v.to_json() for k, v in self.per_group.items()},
            "aggregate": self.aggregate.to_json(),
            "mean_coverage_error": self.mean_coverage_error,
            "mean_equal_opp_error": self.mean_equal_opp_error,
            "coverage_gaps": dict(self.coverage_gaps),
            "equal_opp_gaps": dict(self.equal_opp_gaps),
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    def to_markdown(self) -> str:
        lines = [
            f"### {self.groupset}",
            "",
            "| Group | Count | Coverage | Label rate | Accuracy | TPR | FPR | Cov. gap | Eq. opp. gap |",
            "|---|---|---|---|---|---|---|---|---|",
        ]
        for name, st in self.per_group.items():
            lines.append(
                f"| {name} | {st.count} | {_pct(st.coverage)} | {_pct(st.label_rate)} | {_pct(st.accuracy)} "
                f"| {_pct(st.tpr)} | {_pct(st.fpr)} | {_pct(self.coverage_gaps[name])} "
                f"| {_pct(self.equal_opp_gaps.get(name))} |"
            )
        a = self.aggregate
        lines.append(
            f"| (all) | {a.count} | {_pct(a.coverage)} | {_pct(a.label_rate)} | {_pct(a.accuracy)} "
            f"| {_pct(a.tpr)} | {_pct(a.fpr)} | | |"
        )
        lines += [
            "",
            f"Mean coverage error: {_pct(self.mean_coverage_error)}  ",
            f"Mean equal opp. error: {_pct(self.mean_equal_opp_error)}",
        ]
        for w in self.warnings:
            lines.append(f"\n> warning: {w}")
        return "\n".join(lines) + "\n"


def _pct(x):
    return "n/a" if x is None else f"{100.0 * x:.2f}"


def evaluate(preds, labels, groups: GroupSet) -> FairnessReport:
    p, y = _check(preds, labels, groups)
    aggregate = _stats(p, y)
    per_group, cov_gaps, eo_gaps, warnings = {}, {}, {}, []
    for name, m in zip(groups.group_names, groups.masks):
        st = _stats(p[m], y[m])
        per_group[name] = st
        cov_gaps[name] = st.coverage - st.label_rate
        if st.tpr is None:
            warnings.append(f"group {name!r} has no positive labels; excluded from equal-opportunity error")
        elif aggregate.tpr is not None:
            eo_gaps[name] = st.tpr - aggregate.tpr
    if aggregate.tpr is None:
        warnings.append("no positive labels overall; equal-opportunity error undefined")
    mce = float(np.mean([abs(g) for g in cov_gaps.values()]))
    meo = float(np.mean([abs(g) for g in eo_gaps.values()])) if eo_gaps else None
    return FairnessReport(groups.name, per_group, aggregate, mce, meo, cov_gaps, eo_gaps, tuple(warnings))


def mean_coverage_error(preds, labels, groups: GroupSet) -> float:
    return evaluate(preds, labels, groups).mean_coverage_error


def mean_equal_opp_error(preds, labels, groups: GroupSet) -> float | None:
    return evaluate(preds, labels, groups).mean_equal_opp_error


# --- individual fairness goals ------------------------------------------------


def statistical_parity_gaps(preds, groups: GroupSet) -> dict:
    """``coverage_k - overall coverage`` per group."""
    p, _ = _check(preds, None, groups)
    overall = p.mean()
    return {n: float(p[m].mean() - overall) for n, m in zip(groups.group_names, groups.masks)}


def equal_opportunity_gaps(preds, labels, groups: GroupSet) -> dict:
    """``TPR_k - overall TPR``; ``None`` for groups without positive labels."""
    return {k: (None if v is None else v[0]) for k, v in equal_odds_gaps(preds, labels, groups, require_both=False).items()}


def equal_odds_gaps(preds, labels, groups: GroupSet, require_both=True) -> dict:
    """``(TPR_k - TPR, FPR_k - FPR)`` per group.

    Groups lacking either class are excluded and map to ``None``.
    """
    p, y = _check(preds, labels, groups)
    agg = _stats(p, y)
    out = {}
    for n, m in zip(groups.group_names, groups.masks):
        st = _stats(p[m], y[m])
        if st.tpr is None or agg.tpr is None or (require_both and (st.fpr is None or agg.fpr is None)):
            out[n] = None
            continue
        fgap = None if st.fpr is None or agg.fpr is None else st.fpr - agg.fpr
        out[n] = (st.tpr - agg.tpr, fgap)
    return out


def equal_accuracy_gaps(preds, labels, groups: GroupSet) -> dict:
    p, y = _check(preds, labels, groups)
    overall = (p == y).mean()
    return {n: float((p[m] == y[m]).mean() - overall) for n, m in zip(groups.group_names, groups.masks)}


def accurate_coverage_gaps(preds, labels, groups: GroupSet) -> dict:
    p, y = _check(preds, labels, groups)
    return {n: float(p[m].mean() - y[m].mean()) for n, m in zip(groups.group_names, groups.masks)}


def not_worse_off(new_preds, current_preds, labels, groups: GroupSet) -> dict:
    new, y = _check(new_preds, labels, groups)
    cur, _ = _check(current_preds, labels, groups)
    return {
        n: bool(int((new[m] == y[m]).sum()) >= int((cur[m] == y[m]).sum()))
        for n, m in zip(groups.group_names, groups.masks)
    }


def no_lost_benefits(new_preds, current_preds, groups: GroupSet) -> dict:
    new, _ = _check(new_preds, None, groups)
    cur, _ = _check(current_preds, None, groups)
    if new.shape != cur.shape:
        raise ContractError("prediction vectors differ in length")
    return {n: bool(int(new[m].sum()) >= int(cur[m].sum())) for n, m in zip(groups.group_names, groups.masks)}


# --- ROC geometry ---------------------------------------------------------------


@dataclass(frozen=True)
class RocCurve:
    """Empirical ROC vertices ``(fpr, tpr)`` from ``(0, 0)`` to ``(1, 1)``.

    ``thresholds[j]`` is a threshold whose strict-inequality predictions
    produce vertex ``j`` (``-inf`` for the all-positive vertex).
    """

    points: tuple
    label_positive_rate: float
    label_negative_rate: float
    thresholds: tuple = ()

    @property
    def fpr(self):
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self):
        return np.array([p[1] for p in self.points])

    def auc(self) -> float:
        f, t = self.fpr, self.tpr
        return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def roc_curve(scores, labels) -> RocCurve:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    if s.shape != y.shape:
        raise ContractError("scores and labels differ in length")
    pos = int(y.sum())
    neg = y.size - pos
    if pos == 0 or neg == 0:
        raise ContractError("roc_curve needs both label classes")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    # last index of each run of equal scores, descending
    ends = np.flatnonzero(np.append(s_sorted[1:] != s_sorted[:-1], True))
    tp = np.cumsum(y_sorted)[ends]
    fp = (ends + 1) - tp
    points = [(0.0, 0.0)] + [(fp[j] / neg, tp[j] / pos) for j in range(ends.size)]
    uniq = s_sorted[ends]
    thresholds = [float(uniq[0])] + [float(x) for x in uniq[1:]] + [float("-inf")]
    lpr = pos / y.size
    return RocCurve(tuple(points), lpr, neg / y.size, tuple(thresholds))


def accurate_coverage_operating_point(roc: RocCurve) -> tuple[float, float]:
    """Where the ROC polyline meets ``TPR*LPR + FPR*LNR = LPR``."""
    lpr, lnr = roc.label_positive_rate, roc.label_negative_rate
    if not 0.0 < lpr < 1.0:
        raise ContractError("label positive rate must lie in (0, 1)")

    def resid(pt):
        return pt[1] * lpr + pt[0] * lnr - lpr

    prev = roc.points[0]
    if resid(prev) >= 0:
        return prev
    for cur in roc.points[1:]:
        r1 = resid(cur)
        if r1 >= 0:
            r0 = resid(prev)
            lam = -r0 / (r1 - r0)
            return (prev[0] + lam * (cur[0] - prev[0]), prev[1] + lam * (cur[1] - prev[1]))
        prev = cur
    raise ContractError("ROC curve does not end at (1, 1)")
