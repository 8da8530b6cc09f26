import numpy as np
import pytest

from proxyfair.constrained import (
    ConstrainedTrainConfig,
    FairnessConstraint,
    constraint_value,
    surrogate_value_and_grad,
    synthetic_coverage_instance,
    train_constrained,
)
from proxyfair.errors import ContractError
from proxyfair.model import LinearModel, TrainConfig, accuracy, predict, score, sigmoid, train_base


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def random_constraint(rng, kind, n):
    mask = rng.random(n) < 0.4
    mask[0] = True
    return FairnessConstraint(kind, mask, alpha=float(rng.uniform(0.5, 1.2)))


@pytest.mark.parametrize("kind", ["coverage_floor", "coverage_match", "tpr_match"])
@pytest.mark.parametrize("seed", range(5))
def test_surrogate_gradient_matches_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    n, d = 30, 3
    X = rng.standard_normal((n, d))
    y = rng.integers(0, 2, n).astype(float)
    y[0] = 1
    c = random_constraint(rng, kind, n)
    tau = 0.5
    w, b = 0.3 * rng.standard_normal(d), 0.1
    _, gw, gb = surrogate_value_and_grad(w, b, X, y, c, tau)
    f = lambda t: surrogate_value_and_grad(t[:-1], t[-1], X, y, c, tau)[0]
    num = central_diff(f, np.append(w, b))
    ana = np.append(gw, gb)
    assert np.linalg.norm(ana - num) / max(np.linalg.norm(num), 1e-12) < 1e-5


def test_indicator_values_for_degenerate_models():
    X = np.ones((4, 1))
    y = np.array([1, 0, 1, 0])
    c = FairnessConstraint("coverage_floor", np.array([1, 1, 0, 0], bool), alpha=0.8)
    all_pos = LinearModel(np.zeros(1), 1.0)
    all_neg = LinearModel(np.zeros(1), -1.0)
    assert constraint_value(all_pos, X, y, c) == pytest.approx(-0.2)
    assert constraint_value(all_neg, X, y, c) == 0.0


def test_surrogate_converges_to_indicator():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((200, 2))
    y = rng.integers(0, 2, 200)
    m = LinearModel(np.array([1.0, -0.5]), 0.2)
    assert np.min(np.abs(score(m, X))) > 1e-3
    c = FairnessConstraint("coverage_floor", rng.random(200) < 0.3)
    exact = constraint_value(m, X, y, c)
    s = np.abs(score(m, X))
    bounds = []
    for tau in (1.0, 0.1, 0.01, 0.001):
        # each soft prediction is off by sigmoid(-|score| / tau)
        e = sigmoid(-s / tau)
        bound = c.alpha * e.mean() + e[c.group_mask].mean()
        assert abs(constraint_value(m, X, y, c, "surrogate", tau) - exact) <= bound + 1e-12
        bounds.append(bound)
    assert all(a > b for a, b in zip(bounds, bounds[1:])) and bounds[-1] < 0.01


def test_synthetic_instance_is_biased_unconstrained():
    X, y, g = synthetic_coverage_instance()
    m = train_base(X, y)
    p = predict(score(m, X))
    assert p[g].mean() / p.mean() < 0.4


def test_coverage_floor_is_met_at_small_accuracy_cost():
    X, y, g = synthetic_coverage_instance()
    c = FairnessConstraint("coverage_floor", g, alpha=0.8, name="A")
    res = train_constrained(X, y, [c])
    free = train_base(X, y)
    j = constraint_value(res.model, X, y, c)
    acc_c = accuracy(predict(score(res.model, X)), y)
    acc_u = accuracy(predict(score(free, X)), y)
    assert j <= 0.01
    assert acc_c <= acc_u
    assert acc_u - acc_c <= 0.02
    assert not res.infeasible
    assert res.trace[-1].indicator_values[0] == j


def test_zero_constraints_is_bit_identical_to_base():
    X, y, _ = synthetic_coverage_instance(n=500, seed=3)
    cfg = ConstrainedTrainConfig(inner=TrainConfig(seed=9))
    res = train_constrained(X, y, [], cfg)
    base = train_base(X, y, TrainConfig(seed=9))
    assert res.model.weights.tobytes() == base.weights.tobytes()
    assert res.model.bias == base.bias
    assert res.trace == []


def test_inactive_constraint_leaves_model_alone():
    X, y, g = synthetic_coverage_instance(n=1000, seed=1)
    loose = FairnessConstraint("coverage_floor", g, alpha=0.1)
    res = train_constrained(X, y, [loose])
    base = train_base(X, y)
    assert np.linalg.norm(res.model.params - base.params) < 1e-3
    assert max(res.multipliers) < 1e-9


def test_infeasible_constraints_are_flagged():
    X, y, g = synthetic_coverage_instance(n=600, seed=2)
    # the group must select at least as often as everyone and, at once, at most
    # 0.5 of its positive rate; no classifier can do both with zero slack
    cs = [
        FairnessConstraint("coverage_floor", g, alpha=1.9, name="floor"),
        FairnessConstraint("coverage_match", g, alpha=0.1, name="match"),
    ]
    res = train_constrained(X, y, cs, ConstrainedTrainConfig(outer_iterations=12))
    viol = [sum(max(0.0, v) for v in r.indicator_values) for r in res.trace]
    final = sum(max(0.0, v) for v in (constraint_value(res.model, X, y, c) for c in cs))
    assert final == min(viol) or not res.infeasible
    assert final > 0


def test_trace_csv_layout():
    X, y, g = synthetic_coverage_instance(n=400)
    res = train_constrained(X, y, [FairnessConstraint("coverage_floor", g, name="A")], ConstrainedTrainConfig(outer_iterations=3))
    lines = res.trace_csv().splitlines()
    assert lines[0] == "outer_iter,objective,J[A],lambda[A]"
    assert len(lines) == 4


def test_constraint_contracts():
    with pytest.raises(ContractError):
        FairnessConstraint("nope", np.array([True]))
    with pytest.raises(ContractError):
        FairnessConstraint("coverage_floor", np.array([False, False]))
    c = FairnessConstraint("tpr_match", np.array([True, False]))
    with pytest.raises(ContractError):
        constraint_value(LinearModel(np.zeros(1), 0.0), np.ones((2, 1)), np.array([0, 1]), c)
    with pytest.raises(ContractError):
        train_constrained(np.ones((3, 1)), np.array([0, 1, 0]), [c])
