import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import active_set_projection
from proxyfair.errors import ContractError, ConvergenceError
from proxyfair.lemma_geometry import (
    LemmaAssumptionError,
    LemmaInstance,
    Polyhedron,
    check_lemma,
    distance_to,
    feasibility_probe,
    generate_case,
    project_halfspace,
    project_polyhedron,
    random_instance,
)


def test_halfspace_examples():
    assert project_halfspace([2.0, 0.0], [1.0, 0.0], 1.0).tolist() == [1.0, 0.0]
    assert project_halfspace([0.5, 3.0], [1.0, 0.0], 1.0).tolist() == [0.5, 3.0]
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, p = rng.standard_normal(3), rng.standard_normal(3) * 3
        b = float(rng.standard_normal())
        x = project_halfspace(p, a, b)
        if a @ p > b:
            assert abs(a @ x - b) < 1e-12


def test_polyhedron_reductions():
    single = Polyhedron([[1.0, 2.0]], [0.5])
    p = np.array([3.0, -1.0])
    assert np.array_equal(project_polyhedron(p, single), project_halfspace(p, [1.0, 2.0], 0.5))
    box = Polyhedron.from_rows([([1, 0], 1), ([-1, 0], 1), ([0, 1], 1), ([0, -1], 1)])
    inside = np.array([0.2, -0.3])
    assert np.array_equal(project_polyhedron(inside, box), inside)
    assert np.allclose(project_polyhedron([3.0, 3.0], box), [1.0, 1.0])


def test_dykstra_matches_active_set_oracle():
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        m = int(rng.integers(1, 11))
        w = rng.standard_normal(d)
        A = rng.standard_normal((m, d))
        b = A @ w + rng.uniform(0, 1, m)
        p = w + 3 * rng.standard_normal(d)
        got = project_polyhedron(p, Polyhedron(A, b))
        worst = max(worst, float(np.linalg.norm(got - active_set_projection(p, A, b))))
    assert worst <= 1e-6


def test_dykstra_reports_nonconvergence():
    poly = Polyhedron([[1.0, 0.0], [-1.0, 0.0], [1.0, 1.0]], [0.0, 0.0, 0.5])
    with pytest.raises(ConvergenceError) as err:
        project_polyhedron([5.0, 5.0], poly, tol=1e-14, max_iter=1)
    assert err.value.last_iterate is not None


def test_probe_examples():
    le1 = Polyhedron([[1.0]], [1.0])
    ge0 = Polyhedron([[-1.0]], [0.0])
    res = feasibility_probe(le1, ge0)
    assert res.intersecting and -1e-8 <= res.witness[0] <= 1 + 1e-8
    far = feasibility_probe(Polyhedron([[1.0]], [-1.0]), Polyhedron([[-1.0]], [-1.0]))
    assert far.status == "disjoint" and far.gap == pytest.approx(2.0)


def test_probe_on_touching_sets():
    rng = np.random.default_rng(5)
    for _ in range(20):
        v = rng.standard_normal(2)
        a = rng.standard_normal(2)
        # two halfspaces sharing only the line through v, with opposite normals
        res = feasibility_probe(Polyhedron([a], [a @ v]), Polyhedron([-a], [-(a @ v)]))
        assert res.intersecting


def test_lemma_analytic_example():
    inst = LemmaInstance(
        np.zeros(2),
        true_set=Polyhedron([[-1.0, -1.0]], [-1.0]),
        proxy_set=Polyhedron([[-1.0, 0.0]], [-1.0]),
    )
    rep = check_lemma(inst)
    assert rep.theta_c == pytest.approx([1.0, 0.0])
    # 1/sqrt(2) is the distance to the true set alone; the intersection
    # needs x >= 1, so theta* is 1 away from it
    assert distance_to(inst.theta_star, inst.true_set) == pytest.approx(1 / np.sqrt(2))
    assert rep.d_star == pytest.approx(1.0)
    assert rep.d_proxy == pytest.approx(0.0, abs=1e-9)
    assert rep.passed


def test_lemma_inside_both_sets():
    box = Polyhedron.from_rows([([1, 0], 1), ([-1, 0], 1)])
    rep = check_lemma(LemmaInstance(np.array([0.5, 9.0]), box, box))
    assert rep.d_star == rep.d_proxy == 0.0 and rep.case == "C"


def test_lemma_holds_on_1000_random_instances():
    rng = np.random.default_rng(2023)
    failures = []
    for i in range(1000):
        rep = check_lemma(random_instance(rng))
        if not rep.d_proxy <= rep.d_star + 1e-9:
            failures.append((i, rep.d_proxy - rep.d_star))
    assert failures == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lemma_property(seed):
    rep = check_lemma(random_instance(np.random.default_rng(seed)))
    assert rep.passed


def test_case_d_witness_moves_away_from_true_set():
    true_set = Polyhedron([[1.0]], [1.0])  # x <= 1
    proxy_set = Polyhedron([[-1.0]], [-2.0])  # x >= 2
    theta = np.zeros(1)
    theta_c = project_polyhedron(theta, proxy_set)
    assert distance_to(theta_c, true_set) > distance_to(theta, true_set)
    with pytest.raises(LemmaAssumptionError, match="case D"):
        check_lemma(LemmaInstance(theta, true_set, proxy_set))


@pytest.mark.parametrize("seed", range(3))
def test_generated_cases(seed):
    c = generate_case("C", seed)
    assert c.true_set.contains(c.theta_star)
    d = generate_case("D", seed)
    assert feasibility_probe(d.true_set, d.proxy_set).status == "disjoint"
    a = generate_case("A", seed)
    rep = check_lemma(a)
    assert rep.passed and a.true_set.contains(rep.theta_c, 1e-7)
    b = generate_case("B", seed)
    rep = check_lemma(b)
    assert rep.passed and not b.true_set.contains(rep.theta_c, 1e-7)


def test_contracts():
    with pytest.raises(ContractError):
        Polyhedron([[0.0, 0.0]], [1.0])
    with pytest.raises(ContractError):
        Polyhedron([[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ContractError):
        project_polyhedron([1.0], Polyhedron([[1.0, 0.0]], [0.0]))
    with pytest.raises(ContractError):
        generate_case("E")
