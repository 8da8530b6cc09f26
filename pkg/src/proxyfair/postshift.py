"""Per-group additive score shifts fitted on a (proxy) partition.

Over a partition the shifted classifier ``score + beta[group]`` is a per-group
threshold ``threshold - beta``, so every group is fitted independently by an
exact sweep over the distinct in-group prediction sets.

Candidate effective thresholds for a group are the midpoints between adjacent
distinct sorted scores, one sentinel below the minimum and one above the
maximum (``SENTINEL_MARGIN`` away), and the unshifted threshold itself
(``beta = 0``), so doing nothing is always a candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import GroupSet
from .errors import ContractError

SENTINEL_MARGIN = 1.0

OBJECTIVES = ("fairness", "accuracy")
GOALS = ("accurate_coverage", "equal_opportunity")


@dataclass(frozen=True)
class ShiftModel:
    groupset_name: str
    betas: dict
    objective: str
    goal: str | None = None
    threshold: float = 0.0
    notes: tuple = field(default=())

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ContractError(f"unknown objective {self.objective!r}")
        if self.goal is not None and self.goal not in GOALS:
            raise ContractError(f"unknown goal {self.goal!r}")
        if self.objective == "fairness" and self.goal is None:
            raise ContractError("fairness objective requires a goal")
        betas = {str(k): float(v) for k, v in self.betas.items()}
        if not all(np.isfinite(v) for v in betas.values()):
            raise ContractError("shifts must be finite")
        object.__setattr__(self, "betas", betas)

    def to_json(self) -> dict:
        return {
            "groupset": self.groupset_name,
            "objective": self.objective,
            "goal": self.goal,
            "threshold": self.threshold,
            "betas": dict(self.betas),
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, obj) -> "ShiftModel":
        return cls(
            obj["groupset"],
            obj["betas"],
            obj["objective"],
            obj.get("goal"),
            obj.get("threshold", 0.0),
            tuple(obj.get("notes", ())),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def zeros(cls, groups: GroupSet, objective="accuracy", goal=None) -> "ShiftModel":
        return cls(groups.name, {g: 0.0 for g in groups.group_names}, objective, goal)


def _require_partition(groups: GroupSet, n: int):
    if not groups.is_partition:
        raise ContractError(
            f"post-shift requires a partition; {groups.name!r} overlaps. "
            "Use proxyfair.constrained for overlapping groups."
        )
    if groups.n_examples != n:
        raise ContractError(f"groupset covers {groups.n_examples} examples, scores have {n}")


def apply_shift(scores, groups: GroupSet, shift: ShiftModel) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    _require_partition(groups, s.size)
    missing = [g for g in groups.group_names if g not in shift.betas]
    if missing:
        raise ContractError(f"shift model has no beta for groups {missing}")
    beta = np.array([shift.betas[g] for g in groups.group_names])
    return s + beta[groups.index()]


def candidate_thresholds(basis_scores, threshold: float) -> np.ndarray:
    """Effective in-group thresholds covering every distinct prediction set."""
    u = np.unique(np.asarray(basis_scores, dtype=float))
    if u.size == 0:
        return np.array([threshold])
    mids = (u[1:] + u[:-1]) / 2.0
    return np.concatenate(([u[0] - SENTINEL_MARGIN], mids, [u[-1] + SENTINEL_MARGIN], [threshold]))


def _sweep_counts(s, y, taus):
    """Positive predictions and true positives at each effective threshold."""
    s_sorted = np.sort(s)
    pos_sorted = np.sort(s[y == 1])
    n_pred = s.size - np.searchsorted(s_sorted, taus, side="right")
    n_tp = pos_sorted.size - np.searchsorted(pos_sorted, taus, side="right")
    return n_pred, n_tp


def _pick(*keys):
    """Index of the lexicographically smallest key tuple."""
    order = np.lexsort(tuple(reversed(keys)))
    return int(order[0])


def _fit_group_coverage(s, y, threshold):
    taus = candidate_thresholds(s, threshold)
    betas = threshold - taus
    n_pred, _ = _sweep_counts(s, y, taus)
    target = int(y.sum())
    i = _pick(np.abs(n_pred - target), n_pred, np.abs(betas))
    return float(betas[i])


def _fit_group_equal_opp(s, y, threshold, target_tp, target_pos):
    """Group TPR closest to ``target_tp / target_pos`` (compared exactly in integers)."""
    taus = candidate_thresholds(s[y == 1], threshold)
    betas = threshold - taus
    _, n_tp = _sweep_counts(s, y, taus)
    P = int(y.sum())
    dist = np.abs(n_tp.astype(np.int64) * target_pos - target_tp * P)
    i = _pick(dist, n_tp, np.abs(betas))
    return float(betas[i])


def _fit_group_accuracy(s, y, threshold):
    taus = candidate_thresholds(s, threshold)
    betas = threshold - taus
    n_pred, n_tp = _sweep_counts(s, y, taus)
    neg = s.size - int(y.sum())
    correct = n_tp + (neg - (n_pred - n_tp))
    i = _pick(-correct, np.abs(betas), n_pred)
    return float(betas[i])


def _pinned(groups: GroupSet, pin_catch_all: bool):
    return {groups.catch_all} if (pin_catch_all and groups.catch_all) else set()


def fit_fairness_coverage(scores, labels, groups: GroupSet, threshold=0.0, pin_catch_all=True) -> ShiftModel:
    """Per group, bring the positive-prediction count as close as possible to the positive-label count.

    Ties prefer fewer positive predictions, then the smaller ``|beta|``.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    _require_partition(groups, s.size)
    pinned = _pinned(groups, pin_catch_all)
    betas = {}
    for name, m in zip(groups.group_names, groups.masks):
        betas[name] = 0.0 if name in pinned else _fit_group_coverage(s[m], y[m], threshold)
    notes = tuple(f"group {g!r} pinned to beta=0 (catch-all)" for g in sorted(pinned))
    return ShiftModel(groups.name, betas, "fairness", "accurate_coverage", threshold, notes)


def fit_fairness_equal_opportunity(
    scores, labels, groups: GroupSet, threshold=0.0, pin_catch_all=True, iterate_target=False, max_rounds=50
) -> ShiftModel:
    """Per group, bring the TPR as close as possible to the overall TPR of the unshifted predictions.

    With ``iterate_target`` the target is recomputed from the shifted
    predictions until the shifts stop changing (at most ``max_rounds``).
    Groups without positive labels keep ``beta = 0``.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    _require_partition(groups, s.size)
    total_pos = int(y.sum())
    if total_pos == 0:
        raise ContractError("equal opportunity needs at least one positive label")
    pinned = _pinned(groups, pin_catch_all)
    notes = [f"target TPR = overall TPR of {'iterated' if iterate_target else 'unshifted'} predictions"]
    notes += [f"group {g!r} pinned to beta=0 (catch-all)" for g in sorted(pinned)]
    shifted = s
    betas: dict = {}
    for _ in range(max_rounds if iterate_target else 1):
        target_tp = int(((shifted > threshold) & (y == 1)).sum())
        new = {}
        for name, m in zip(groups.group_names, groups.masks):
            if name in pinned:
                new[name] = 0.0
            elif not y[m].any():
                new[name] = 0.0
            else:
                new[name] = _fit_group_equal_opp(s[m], y[m], threshold, target_tp, total_pos)
        if new == betas:
            break
        betas = new
        shifted = apply_shift(s, groups, ShiftModel(groups.name, betas, "fairness", "equal_opportunity"))
    for name, m in zip(groups.group_names, groups.masks):
        if not y[m].any():
            notes.append(f"group {name!r} has no positive labels; beta fixed at 0")
    return ShiftModel(groups.name, betas, "fairness", "equal_opportunity", threshold, tuple(notes))


def fit_accuracy(scores, labels, groups: GroupSet, threshold=0.0, pin_catch_all=True, goal=None) -> ShiftModel:
    """Per group, maximise thresholded in-group accuracy; ties prefer the smaller ``|beta|``."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    _require_partition(groups, s.size)
    pinned = _pinned(groups, pin_catch_all)
    betas = {}
    for name, m in zip(groups.group_names, groups.masks):
        betas[name] = 0.0 if name in pinned else _fit_group_accuracy(s[m], y[m], threshold)
    notes = tuple(f"group {g!r} pinned to beta=0 (catch-all)" for g in sorted(pinned))
    return ShiftModel(groups.name, betas, "accuracy", goal, threshold, notes)


def fit_shift(scores, labels, groups: GroupSet, objective: str, goal: str | None = None, **kw) -> ShiftModel:
    if objective == "accuracy":
        return fit_accuracy(scores, labels, groups, goal=goal, **kw)
    if objective != "fairness":
        raise ContractError(f"unknown objective {objective!r}")
    if goal == "accurate_coverage":
        return fit_fairness_coverage(scores, labels, groups, **kw)
    if goal == "equal_opportunity":
        return fit_fairness_equal_opportunity(scores, labels, groups, **kw)
    raise ContractError(f"unknown fairness goal {goal!r}")
