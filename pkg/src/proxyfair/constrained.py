"""Training with group fairness constraints ``J_k(theta) <= 0``.

Hard prediction indicators are replaced by ``sigmoid((score - threshold) / tau)``
during optimisation; reported feasibility always uses hard indicators.
The solver is an augmented Lagrangian for inequality constraints: the inner
problem minimises

    loss + R + 1/(2 rho) * sum_k (max(0, lambda_k + rho * J_k)^2 - lambda_k^2)

with the base trainer's mini-batch machinery, and the outer step sets
``lambda_k <- max(0, lambda_k + rho * J_k)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DivergenceError
from .model import LinearModel, TrainConfig, gradient_descent, logistic_objective, sigmoid, train_base

KINDS = ("coverage_floor", "coverage_match", "tpr_match")


@dataclass(frozen=True)
class FairnessConstraint:
    """One group constraint; satisfied when its value is ``<= 0``.

    * ``coverage_floor``: ``alpha * coverage - coverage_k - slack``
    * ``coverage_match``: ``|coverage_k - alpha * label_rate_k| - slack``
    * ``tpr_match``: ``|tpr_k - alpha * tpr| - slack``
    """

    kind: str
    group_mask: np.ndarray
    alpha: float = 0.8
    slack: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown constraint kind {self.kind!r}")
        m = np.asarray(self.group_mask, dtype=bool)
        if m.ndim != 1 or not m.any():
            raise ContractError("constraint group is empty")
        if not 0.0 < self.alpha < 2.0:
            raise ContractError("alpha must lie in (0, 2)")
        if self.slack < 0:
            raise ContractError("slack must be nonnegative")
        object.__setattr__(self, "group_mask", m)

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass(frozen=True)
class ConstrainedTrainConfig:
    surrogate_temperature: float = 0.05
    multiplier_step: float = 20.0
    outer_iterations: int = 20
    inner: TrainConfig = TrainConfig()
    inner_epochs: int = 5

    def __post_init__(self):
        if self.surrogate_temperature <= 0:
            raise ValueError("surrogate_temperature must be positive")
        if self.multiplier_step <= 0:
            raise ValueError("multiplier_step must be positive")
        if self.outer_iterations < 1 or self.inner_epochs < 1:
            raise ValueError("iteration counts must be positive")


def _soft_preds(scores, threshold, tau):
    return sigmoid((scores - threshold) / tau)


def _value_from_preds(p, y, c: FairnessConstraint):
    m = c.group_mask
    if c.kind == "coverage_floor":
        return c.alpha * p.mean() - p[m].mean() - c.slack
    if c.kind == "coverage_match":
        return abs(p[m].mean() - c.alpha * y[m].mean()) - c.slack
    pos = y == 1
    gpos = pos & m
    if not gpos.any():
        raise ContractError("tpr_match constraint group has no positive labels")
    return abs(p[gpos].mean() - c.alpha * p[pos].mean()) - c.slack


def _check_inputs(X, y, c):
    if c.group_mask.size != X.shape[0] or y.size != X.shape[0]:
        raise ContractError("constraint mask, labels and features disagree in length")


def constraint_value(model: LinearModel, features, labels, constraint: FairnessConstraint, mode="indicator", temperature=0.05) -> float:
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(float)
    _check_inputs(X, y, constraint)
    if X.shape[1] != model.weights.size:
        raise ContractError("feature dimension does not match model")
    s = X @ model.weights + model.bias
    if mode == "indicator":
        p = (s > model.threshold).astype(float)
    elif mode == "surrogate":
        p = _soft_preds(s, model.threshold, temperature)
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return float(_value_from_preds(p, y, constraint))


def surrogate_value_and_grad(w, b, X, y, c: FairnessConstraint, tau, threshold=0.0):
    """Surrogate constraint value and its gradient in ``(w, b)``."""
    s = X @ w + b
    p = _soft_preds(s, threshold, tau)
    dp = p * (1.0 - p) / tau  # d p_i / d score_i
    m = c.group_mask

    def mean_grad(mask):
        d = dp[mask]
        return X[mask].T @ d / d.size, d.sum() / d.size

    if c.kind == "coverage_floor":
        gw_all, gb_all = mean_grad(np.ones_like(m))
        gw_k, gb_k = mean_grad(m)
        value = c.alpha * p.mean() - p[m].mean() - c.slack
        return value, c.alpha * gw_all - gw_k, c.alpha * gb_all - gb_k
    if c.kind == "coverage_match":
        diff = p[m].mean() - c.alpha * y[m].mean()
        gw_k, gb_k = mean_grad(m)
        sgn = np.sign(diff)
        return abs(diff) - c.slack, sgn * gw_k, sgn * gb_k
    pos = y == 1
    gpos = pos & m
    if not gpos.any():
        raise ContractError("tpr_match constraint group has no positive labels")
    diff = p[gpos].mean() - c.alpha * p[pos].mean()
    gw_k, gb_k = mean_grad(gpos)
    gw_all, gb_all = mean_grad(pos)
    sgn = np.sign(diff)
    return abs(diff) - c.slack, sgn * (gw_k - c.alpha * gw_all), sgn * (gb_k - c.alpha * gb_all)


@dataclass(frozen=True)
class TraceRow:
    outer_iter: int
    objective: float
    indicator_values: tuple
    multipliers: tuple


@dataclass
class ConstrainedResult:
    model: LinearModel
    trace: list = field(default_factory=list)
    multipliers: tuple = ()
    infeasible: bool = False
    constraint_names: tuple = ()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.constraint_names)
        writer.writerow(["outer_iter", "objective"] + [f"J[{n}]" for n in names] + [f"lambda[{n}]" for n in names])
        for row in self.trace:
            writer.writerow(
                [row.outer_iter, repr(row.objective)]
                + [repr(v) for v in row.indicator_values]
                + [repr(v) for v in row.multipliers]
            )
        return buf.getvalue()


def _violation(values):
    return float(sum(max(0.0, v) for v in values))


def train_constrained(features, labels, constraints, config: ConstrainedTrainConfig = ConstrainedTrainConfig(), feature_names=()) -> ConstrainedResult:
    """Minimise the regularised logistic loss subject to ``constraints``.

    With no constraints this is exactly :func:`proxyfair.model.train_base`.
    If hard-indicator violation fails to decrease over the second half of the
    outer iterations the result is flagged ``infeasible`` and carries the
    least-violating iterate.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels).astype(float)
    constraints = list(constraints)
    for c in constraints:
        _check_inputs(X, y, c)
    inner = config.inner
    base = train_base(X, y, inner, feature_names=feature_names)
    names = tuple(c.label for c in constraints)
    if not constraints:
        return ConstrainedResult(base, [], (), False, names)

    tau, rho = config.surrogate_temperature, config.multiplier_step
    lam = np.zeros(len(constraints))
    w, b = base.weights.copy(), base.bias
    rng = np.random.default_rng([inner.seed, 1])

    def penalty_grad(w_, b_):
        gw, gb = np.zeros_like(w_), 0.0
        for k, c in enumerate(constraints):
            v, cw, cb = surrogate_value_and_grad(w_, b_, X, y, c, tau)
            coef = max(0.0, lam[k] + rho * v)
            if coef:
                gw = gw + coef * cw
                gb = gb + coef * cb
        return gw, gb

    trace: list[TraceRow] = []
    snapshots = []
    for it in range(config.outer_iterations):
        surrogate = [surrogate_value_and_grad(w, b, X, y, c, tau)[0] for c in constraints]
        active = any(lam[k] + rho * v > 0 for k, v in enumerate(surrogate))
        if active:
            try:
                w, b = gradient_descent(X, y, inner, init=(w, b), extra=penalty_grad, epochs=config.inner_epochs, rng=rng)
            except DivergenceError as exc:
                raise DivergenceError(f"outer iteration {it}: {exc}", epoch=exc.epoch, trace=trace) from exc
            surrogate = [surrogate_value_and_grad(w, b, X, y, c, tau)[0] for c in constraints]
        lam = np.maximum(0.0, lam + rho * np.array(surrogate))
        model = LinearModel(w, b, base.threshold, tuple(feature_names))
        indicator = tuple(constraint_value(model, X, y, c, "indicator") for c in constraints)
        objective = logistic_objective(w, b, X, y, inner.l2_strength)
        if not np.isfinite(objective):
            raise DivergenceError(f"non-finite objective at outer iteration {it}", epoch=it, trace=trace)
        trace.append(TraceRow(it, objective, indicator, tuple(float(v) for v in lam)))
        snapshots.append(model)

    viol = [_violation(r.indicator_values) for r in trace]
    half = viol[len(viol) // 2 :]
    infeasible = viol[-1] > 0 and len(half) > 1 and all(a <= b_ for a, b_ in zip(half, half[1:]))
    final = snapshots[-1]
    if infeasible:
        best = min(range(len(trace)), key=lambda i: (viol[i], trace[i].objective))
        final = snapshots[best]
    return ConstrainedResult(final, trace, tuple(float(v) for v in lam), infeasible, names)


def synthetic_coverage_instance(n=2000, seed=0, group_fraction=0.3, shift=1.5):
    """Two noisy views of one latent signal, the cleaner one biased against group A.

    Labels come from a latent ``z``. Feature 0 is ``z`` plus small noise, shifted
    down by ``shift`` for group A; feature 1 is ``z`` plus larger noise and
    unbiased. An unconstrained linear model leans on feature 0 and so selects
    group A about 0.3 times as often as everyone else.
    Returns ``(features, labels, group_mask)``.
    """
    rng = np.random.default_rng(seed)
    group = rng.random(n) < group_fraction
    z = rng.standard_normal(n)
    labels = (z + 0.3 * rng.standard_normal(n) > 1.0).astype(np.int8)
    X = np.column_stack(
        [z + 0.3 * rng.standard_normal(n) - shift * group, z + 0.5 * rng.standard_normal(n)]
    )
    return X, labels, group
