"""Euclidean projection onto polyhedra and the proxy-constraint distance lemma.

When the training objective has a scaled-identity Hessian, constrained
training reduces to projecting the unconstrained optimum onto the constraint
set. Projecting onto a convex proxy set that intersects the true set can never
move the parameters further from the intersection. :func:`check_lemma`
verifies that numerically, and :func:`generate_case` builds small 2-D
instances of the four situations (A-D) the claim distinguishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True)
class Polyhedron:
    """``{theta : A @ theta <= b}``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.size:
            raise ContractError("one offset per row required")
        if A.shape[0] == 0:
            raise ContractError("polyhedron needs at least one row")
        if np.any(np.linalg.norm(A, axis=1) == 0):
            raise ContractError("zero normal vector")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_rows(cls, rows) -> "Polyhedron":
        rows = list(rows)
        return cls(np.array([r[0] for r in rows], dtype=float), np.array([r[1] for r in rows], dtype=float))

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def rows(self):
        return [(a, float(bi)) for a, bi in zip(self.A, self.b)]

    def residuals(self, point) -> np.ndarray:
        return self.A @ np.asarray(point, dtype=float) - self.b

    def max_violation(self, point) -> float:
        return float(max(0.0, self.residuals(point).max()))

    def contains(self, point, tol=DEFAULT_TOL) -> bool:
        return self.max_violation(point) <= tol

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if other.dim != self.dim:
            raise ContractError("dimension mismatch")
        return Polyhedron(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]))

    def to_json(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


def project_halfspace(point, a, b) -> np.ndarray:
    x = np.asarray(point, dtype=float)
    a = np.asarray(a, dtype=float)
    nrm2 = float(a @ a)
    if nrm2 == 0.0:
        raise ContractError("zero normal vector")
    r = float(a @ x) - b
    if r <= 0.0:
        return x.copy()
    return x - (r / nrm2) * a


def project_polyhedron(point, poly: Polyhedron, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> np.ndarray:
    """Nearest point of ``poly`` to ``point`` by Dykstra's cyclic projections.

    Stops once a full sweep changes neither the iterate nor the correction
    terms by more than ``tol`` and every row holds within ``tol``.
    """
    x = np.asarray(point, dtype=float).copy()
    if x.size != poly.dim:
        raise ContractError(f"point has dimension {x.size}, polyhedron {poly.dim}")
    if poly.contains(x, 0.0):
        return x
    A, b = poly.A, poly.b
    nrm2 = np.einsum("ij,ij->i", A, A)
    m = A.shape[0]
    if m == 1:
        return project_halfspace(x, A[0], b[0])
    incr = np.zeros_like(A)
    change = np.inf
    for _ in range(max_iter):
        x_start = x
        change = 0.0
        for i in range(m):
            y = x + incr[i]
            r = A[i] @ y - b[i]
            new = y - (r / nrm2[i]) * A[i] if r > 0.0 else y
            new_incr = y - new
            change += float(np.sum((new_incr - incr[i]) ** 2))
            incr[i] = new_incr
            x = new
        change += float(np.sum((x - x_start) ** 2))
        if change <= tol * tol and poly.max_violation(x) <= tol:
            return x
    raise ConvergenceError(
        f"Dykstra projection did not converge in {max_iter} sweeps",
        last_iterate=x,
        residuals=poly.residuals(x),
    )


def distance_to(point, poly: Polyhedron, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> float:
    x = np.asarray(point, dtype=float)
    return float(np.linalg.norm(x - project_polyhedron(x, poly, tol, max_iter)))


@dataclass(frozen=True)
class ProbeResult:
    status: str  # "intersecting" | "disjoint" | "unknown"
    witness: np.ndarray | None
    gap: float
    iterations: int

    @property
    def intersecting(self) -> bool:
        return self.status == "intersecting"


def feasibility_probe(poly_a: Polyhedron, poly_b: Polyhedron, tol=1e-8, max_iter=10_000) -> ProbeResult:
    """Alternate projections between two polyhedra starting at the origin.

    ``gap`` is the distance between the last pair of iterates; it decreases
    monotonically to the distance between the sets. The sets are declared
    disjoint once the iterates stop moving and the gap stops shrinking while
    still above ``tol``.
    """
    if poly_a.dim != poly_b.dim:
        raise ContractError("dimension mismatch")
    inner_tol = tol * 1e-2
    x = project_polyhedron(np.zeros(poly_a.dim), poly_a, inner_tol)
    gap = prev_gap = np.inf
    for k in range(1, max_iter + 1):
        y = project_polyhedron(x, poly_b, inner_tol)
        gap = float(np.linalg.norm(x - y))
        if gap <= tol:
            return ProbeResult("intersecting", x, gap, k)
        x_next = project_polyhedron(y, poly_a, inner_tol)
        if float(np.linalg.norm(x_next - x)) <= tol and prev_gap - gap <= 1e-3 * tol:
            return ProbeResult("disjoint", None, gap, k)
        x = x_next
        prev_gap = gap
    return ProbeResult("unknown", None, gap, max_iter)


@dataclass(frozen=True)
class LemmaInstance:
    theta_star: np.ndarray
    true_set: Polyhedron
    proxy_set: Polyhedron

    def __post_init__(self):
        t = np.asarray(self.theta_star, dtype=float)
        if not (t.size == self.true_set.dim == self.proxy_set.dim):
            raise ContractError("instance dimensions disagree")
        object.__setattr__(self, "theta_star", t)


@dataclass(frozen=True)
class LemmaReport:
    d_star: float  # distance of theta* to the intersection
    d_proxy: float  # distance of theta_c to the intersection
    passed: bool
    theta_star: np.ndarray
    theta_c: np.ndarray
    theta_u: np.ndarray
    theta_star_in_true: bool
    theta_c_in_true: bool
    tol: float
    max_iter: int

    @property
    def case(self) -> str:
        if self.theta_star_in_true:
            return "C"
        return "A" if self.theta_c_in_true else "B"


class LemmaAssumptionError(ContractError):
    pass


def check_lemma(instance: LemmaInstance, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, probe: ProbeResult | None = None) -> LemmaReport:
    probe = probe or feasibility_probe(instance.true_set, instance.proxy_set)
    if not probe.intersecting:
        raise LemmaAssumptionError(
            f"Lemma assumption violated (case D, true and proxy sets disjoint): probe says {probe.status}, gap {probe.gap:.3g}"
        )
    both = instance.true_set.intersect(instance.proxy_set)
    ts = instance.theta_star
    theta_c = project_polyhedron(ts, instance.proxy_set, tol, max_iter)
    theta_u = project_polyhedron(ts, instance.true_set, tol, max_iter)
    d1 = distance_to(ts, both, tol, max_iter)
    d2 = distance_to(theta_c, both, tol, max_iter)
    # feasibility uses a looser tolerance than the projection accuracy
    feas_tol = max(tol, 1e-7)
    return LemmaReport(
        d_star=d1,
        d_proxy=d2,
        passed=d2 <= d1 + tol,
        theta_star=ts,
        theta_c=theta_c,
        theta_u=theta_u,
        theta_star_in_true=instance.true_set.contains(ts, feas_tol),
        theta_c_in_true=instance.true_set.contains(theta_c, feas_tol),
        tol=tol,
        max_iter=max_iter,
    )


# --- instance generation --------------------------------------------------------


def _random_rows(rng, witness, count):
    dim = witness.size
    A = rng.standard_normal((count, dim))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    b = A @ witness + rng.uniform(0.0, 1.0, count)
    return Polyhedron(A, b)


def random_instance(rng: np.random.Generator, dim=None, rows=(1, 6)) -> LemmaInstance:
    """Random instance whose two sets share a planted witness point."""
    dim = int(rng.integers(2, 9)) if dim is None else dim
    witness = rng.standard_normal(dim)
    true_set = _random_rows(rng, witness, int(rng.integers(rows[0], rows[1] + 1)))
    proxy_set = _random_rows(rng, witness, int(rng.integers(rows[0], rows[1] + 1)))
    theta_star = witness + 2.0 * rng.standard_normal(dim)
    return LemmaInstance(theta_star, true_set, proxy_set)


def classify_case(instance: LemmaInstance, tol=DEFAULT_TOL) -> str:
    probe = feasibility_probe(instance.true_set, instance.proxy_set)
    if probe.status == "disjoint":
        return "D"
    if probe.status != "intersecting":
        return "unknown"
    return check_lemma(instance, tol, probe=probe).case


def _disjoint_instance(rng) -> LemmaInstance:
    a = rng.standard_normal(2)
    a /= np.linalg.norm(a)
    c = rng.uniform(-1.0, 1.0)
    gap = rng.uniform(0.5, 2.0)
    true_set = Polyhedron(a[None, :], [c])
    proxy_set = Polyhedron(-a[None, :], [-(c + gap)])
    theta_star = (c - rng.uniform(0.0, 1.0)) * a + rng.standard_normal() * np.array([-a[1], a[0]])
    return LemmaInstance(theta_star, true_set, proxy_set)


def generate_case(case: str, seed: int = 0, max_attempts: int = 10_000) -> LemmaInstance:
    """Seeded 2-D instance of case ``A``, ``B``, ``C`` or ``D``.

    A: the proxy-projected point satisfies the true constraints;
    B: the sets overlap but the proxy-projected point violates the true set;
    C: the unconstrained point already satisfies the true constraints;
    D: the true and proxy sets are disjoint.
    """
    case = case.upper()
    if case not in "ABCD" or len(case) != 1:
        raise ContractError(f"unknown case {case!r}")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        if case == "D":
            inst = _disjoint_instance(rng)
        else:
            inst = random_instance(rng, dim=2, rows=(1, 3))
        if classify_case(inst) == case:
            return inst
    raise RuntimeError(f"could not generate case {case} in {max_attempts} attempts")
