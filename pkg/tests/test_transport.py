import itertools
import math

import numpy as np
import pytest

from cominfo import (
    FiniteDist,
    JointDist,
    TransportPlan,
    compose_conditional_couplings,
    max_cross_entropy,
    min_expected_cross_entropy,
    solve_transport,
)
from cominfo.transport import UnbalancedError


def oracle_transport_value(cost, p, q, sense):
    """Independent optimum: enumerate basic solutions of the transportation polytope.

    Every vertex is supported on at most m+n-1 cells whose incidence system has
    full rank; solve each candidate support with dense linear algebra and keep
    the nonnegative ones. Forbidden (inf-cost) cells are excluded from supports;
    if no vertex avoids them the value is +inf.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    cells = [(i, j) for i in range(m) for j in range(n)]
    finite_cells = [c for c in cells if np.isfinite(cost[c])]
    size = m + n - 1
    best = None
    # marginal equations: m row sums + n column sums (one redundant)
    for support in itertools.combinations(finite_cells, min(size, len(finite_cells))):
        rows = []
        rhs = []
        for i in range(m):
            rows.append([1.0 if c[0] == i else 0.0 for c in support])
            rhs.append(p[i])
        for j in range(n):
            rows.append([1.0 if c[1] == j else 0.0 for c in support])
            rhs.append(q[j])
        amat = np.asarray(rows)
        rvec = np.asarray(rhs)
        sol, residual, rank, _ = np.linalg.lstsq(amat, rvec, rcond=None)
        if np.max(np.abs(amat @ sol - rvec)) > 1e-9:
            continue
        if np.min(sol) < -1e-9:
            continue
        val = float(sum(s * cost[c] for s, c in zip(sol, support)))
        if best is None:
            best = val
        elif sense == "min":
            best = min(best, val)
        else:
            best = max(best, val)
    return math.inf if best is None else best


def test_point_mass_single_cell():
    plan = solve_transport([[3.5]], FiniteDist([1.0]), FiniteDist([1.0]), "min")
    assert plan.value == pytest.approx(3.5)
    assert plan.plan[0, 0] == pytest.approx(1.0)


def test_matching_two_by_two():
    cost = [[0.0, 1.0], [1.0, 0.0]]
    plan = solve_transport(cost, FiniteDist([0.5, 0.5]), FiniteDist([0.5, 0.5]), "min")
    assert plan.value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(plan.plan, np.diag([0.5, 0.5]), atol=1e-12)


def test_solver_matches_oracle_on_random_instances():
    rng = np.random.default_rng(42)
    for trial in range(200):
        m = rng.integers(2, 4)
        n = rng.integers(2, 4)
        p = rng.dirichlet(np.ones(m))
        q = rng.dirichlet(np.ones(n))
        cost = rng.normal(size=(m, n)) * 3.0
        sense = "min" if trial % 2 == 0 else "max"
        plan = solve_transport(cost, FiniteDist(p), FiniteDist(q), sense)
        expect = oracle_transport_value(cost, p, q, sense)
        assert plan.value == pytest.approx(expect, abs=1e-9)


def test_plan_invariants():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = rng.dirichlet(np.ones(3))
        q = rng.dirichlet(np.ones(3))
        cost = rng.normal(size=(3, 3))
        plan = solve_transport(cost, FiniteDist(p), FiniteDist(q), "min")
        assert np.allclose(plan.plan.sum(axis=1), p, atol=1e-9)
        assert np.allclose(plan.plan.sum(axis=0), q, atol=1e-9)
        assert plan.plan.min() >= -1e-15
        assert plan.value == pytest.approx(float((plan.plan * cost).sum()), abs=1e-9)


def test_unbalanced_marginals_rejected():
    # both marginals are individually valid but their totals disagree by ~1.6e-9
    p = FiniteDist([0.5 + 0.4e-9, 0.5 + 0.4e-9])
    q = FiniteDist([0.5 - 0.4e-9, 0.5 - 0.4e-9])
    with pytest.raises(UnbalancedError):
        solve_transport(np.zeros((2, 2)), p, q, "min")


def test_forced_infinite_cell():
    # row 0 must ship somewhere but both its cells are forbidden
    cost = np.array([[math.inf, math.inf], [0.0, 0.0]])
    plan = solve_transport(cost, FiniteDist([0.5, 0.5]), FiniteDist([0.5, 0.5]), "max")
    assert plan.value == math.inf
    assert plan.plan[0].sum() > 0.0  # witness loads a forced cell


def test_avoidable_infinite_cell():
    cost = np.array([[math.inf, 0.0], [5.0, 1.0]])
    plan = solve_transport(cost, FiniteDist([0.5, 0.5]), FiniteDist([0.5, 0.5]), "max")
    assert math.isfinite(plan.value)
    assert plan.plan[0, 0] == 0.0
    # optimum over plans avoiding the forbidden cell: mass 0.5 on (0,1), rest on row 1
    assert plan.value == pytest.approx(0.5 * 5.0, abs=1e-9)


def test_degenerate_marginals_dropped_and_reinserted():
    p = FiniteDist([0.5, 0.0, 0.5])
    q = FiniteDist([1.0, 0.0])
    cost = np.arange(6, dtype=float).reshape(3, 2)
    plan = solve_transport(cost, p, q, "min")
    assert plan.plan.shape == (3, 2)
    assert plan.plan[1].sum() == 0.0
    assert plan.plan[:, 1].sum() == 0.0


def test_max_cross_entropy_product_is_sum_of_entropies():
    px = FiniteDist([0.3, 0.7])
    py = FiniteDist([0.6, 0.4])
    pi = JointDist(np.outer(px.probs, py.probs))
    from cominfo import entropy

    val = max_cross_entropy(px, py, pi)
    # for a product target all couplings agree with the cross-entropy value
    cost = -np.log(pi.matrix)
    expect = oracle_transport_value(cost, px.probs, py.probs, "max")
    assert val == pytest.approx(expect, abs=1e-9)
    assert val == pytest.approx(entropy(px) + entropy(py), abs=1e-9)


def test_max_cross_entropy_symmetric_binary_value():
    # alpha0 = 0.3125, beta0 = 0.1875 at flip probability a = 0.25:
    # value log(1/alpha0) + 2 a log(alpha0/beta0) = 1.4185636...
    pi = JointDist([[0.3125, 0.1875], [0.1875, 0.3125]])
    row = FiniteDist([0.75, 0.25])
    val = max_cross_entropy(row, row, pi)
    expect = math.log(1 / 0.3125) + 0.5 * math.log(0.3125 / 0.1875)
    assert val == pytest.approx(expect, abs=1e-12)
    assert val == pytest.approx(1.4185636, abs=1e-7)


def test_max_cross_entropy_point_masses():
    pi = JointDist([[0.3125, 0.1875], [0.1875, 0.3125]])
    val = max_cross_entropy(FiniteDist([1, 0]), FiniteDist([0, 1]), pi)
    assert val == pytest.approx(-math.log(0.1875), abs=1e-12)


def test_max_cross_entropy_symmetry():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pi = JointDist(rng.dirichlet(np.ones(6)).reshape(2, 3))
        px = FiniteDist(rng.dirichlet(np.ones(2)))
        py = FiniteDist(rng.dirichlet(np.ones(3)))
        lhs = max_cross_entropy(px, py, pi)
        rhs = max_cross_entropy(py, px, JointDist(pi.matrix.T))
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_max_cross_entropy_independent_coupling_lower_bound():
    rng = np.random.default_rng(21)
    for _ in range(20):
        pi = JointDist(rng.dirichlet(np.ones(4)).reshape(2, 2))
        px = FiniteDist(rng.dirichlet(np.ones(2)))
        py = FiniteDist(rng.dirichlet(np.ones(2)))
        indep = float((np.outer(px.probs, py.probs) * -np.log(pi.matrix)).sum())
        assert max_cross_entropy(px, py, pi) >= indep - 1e-9


def test_min_expected_cross_entropy_single_w():
    plan = min_expected_cross_entropy(FiniteDist([1.0]), np.array([[2.5]]))
    assert plan.value == pytest.approx(2.5)


def test_min_expected_cross_entropy_dominant_diagonal():
    cross = np.array([[1.0, 5.0, 5.0], [5.0, 2.0, 5.0], [5.0, 5.0, 3.0]])
    pw = FiniteDist([1 / 3] * 3)
    plan = min_expected_cross_entropy(pw, cross)
    assert plan.value == pytest.approx((1 + 2 + 3) / 3.0, abs=1e-12)
    assert np.allclose(plan.plan, np.diag([1 / 3] * 3), atol=1e-12)


def test_min_expected_cross_entropy_below_equality_coupling():
    rng = np.random.default_rng(14)
    for _ in range(30):
        k = int(rng.integers(2, 5))
        pw = rng.dirichlet(np.ones(k))
        cross = rng.normal(size=(k, k)) * 2.0
        plan = min_expected_cross_entropy(FiniteDist(pw), cross)
        equality = float((pw * np.diag(cross)).sum())
        assert plan.value <= equality + 1e-9


def test_min_expected_cross_entropy_matches_oracle():
    rng = np.random.default_rng(33)
    for _ in range(50):
        pw = rng.dirichlet(np.ones(3))
        cross = rng.normal(size=(3, 3)) * 2.0
        plan = min_expected_cross_entropy(FiniteDist(pw), cross)
        expect = oracle_transport_value(cross, pw, pw, "min")
        assert plan.value == pytest.approx(expect, abs=1e-9)


def test_compose_single_step_passthrough():
    step = np.array([[[0.4, 0.1], [0.2, 0.3]]])  # one w, 2x2 coupling
    ch = compose_conditional_couplings([step])
    assert np.allclose(ch.rows[0], step[0].ravel(), atol=1e-15)


def test_compose_two_independent_steps_product():
    rng = np.random.default_rng(2)
    px1 = rng.dirichlet(np.ones(2))
    py1 = rng.dirichlet(np.ones(2))
    px2 = rng.dirichlet(np.ones(2))
    py2 = rng.dirichlet(np.ones(2))
    step1 = np.outer(px1, py1)[None, :, :]
    # second step ignores histories: same coupling for every (x1, y1)
    step2 = np.broadcast_to(np.outer(px2, py2), (1, 2, 2, 2, 2)).copy()
    step2 = step2.transpose(0, 3, 1, 2, 4)  # not needed for constant; keep shape
    step2 = np.broadcast_to(np.outer(px2, py2)[None, None, None], (1, 2, 2, 2, 2)).copy()
    ch = compose_conditional_couplings([step1, step2])
    comp = ch.rows[0].reshape(4, 4)
    expect = np.kron(np.outer(px1, py1), np.outer(px2, py2))
    assert np.allclose(comp, expect, atol=1e-12)
    assert np.allclose(comp.sum(axis=1), np.kron(px1, px2), atol=1e-12)
    assert np.allclose(comp.sum(axis=0), np.kron(py1, py2), atol=1e-12)


def _random_coupling(rng, p, q):
    """A random point of the coupling polytope via convex mixing of vertices."""
    base = np.outer(p, q)
    # mix with a monotone rearrangement vertex
    order = np.argsort(rng.normal(size=p.size))
    vert = np.zeros((p.size, q.size))
    ps = p.copy()
    qs = q.copy()
    i = j = 0
    rows = list(np.argsort(rng.normal(size=p.size)))
    cols = list(np.argsort(rng.normal(size=q.size)))
    while i < len(rows) and j < len(cols):
        move = min(ps[rows[i]], qs[cols[j]])
        vert[rows[i], cols[j]] += move
        ps[rows[i]] -= move
        qs[cols[j]] -= move
        if ps[rows[i]] <= 1e-15:
            i += 1
        else:
            j += 1
    lam = rng.uniform(0.2, 0.8)
    return lam * base + (1 - lam) * vert


def test_compose_random_valid_steps_marginal_equality():
    rng = np.random.default_rng(8)
    for _ in range(10):
        k = 2
        # step 1: per-w coupling of random marginals
        px1 = rng.dirichlet(np.ones(2), size=k)
        py1 = rng.dirichlet(np.ones(2), size=k)
        step1 = np.stack([_random_coupling(rng, px1[w], py1[w]) for w in range(k)])
        # step 2: conditional marginals depend only on the matching history
        px2 = rng.dirichlet(np.ones(2), size=(k, 2))   # (w, x1) -> dist of x2
        py2 = rng.dirichlet(np.ones(2), size=(k, 2))
        step2 = np.zeros((k, 2, 2, 2, 2))
        for w in range(k):
            for hx in range(2):
                for hy in range(2):
                    step2[w, hx, hy] = _random_coupling(rng, px2[w, hx], py2[w, hy])
        ch = compose_conditional_couplings([step1, step2])
        comp = ch.rows.reshape(k, 4, 4)
        for w in range(k):
            margx = comp[w].sum(axis=1).reshape(2, 2)
            expect_x = px1[w][:, None] * px2[w]
            assert np.max(np.abs(margx - expect_x)) <= 1e-12
            margy = comp[w].sum(axis=0).reshape(2, 2)
            expect_y = py1[w][:, None] * py2[w]
            assert np.max(np.abs(margy - expect_y)) <= 1e-12


def test_compose_rejects_history_dependent_marginals():
    # X-marginal of step 2 depends on the Y-history: precondition violated
    step1 = np.full((1, 2, 2), 0.25)
    step2 = np.zeros((1, 2, 2, 2, 2))
    step2[0, :, 0] = np.outer([0.9, 0.1], [0.5, 0.5])
    step2[0, :, 1] = np.outer([0.1, 0.9], [0.5, 0.5])
    with pytest.raises(ValueError):
        compose_conditional_couplings([step1, step2])


def test_transport_plan_validation_roundtrip():
    plan = TransportPlan(np.array([[0.5, 0.0], [0.0, 0.5]]), 1.0)
    with pytest.raises(ValueError):
        plan.plan[0, 0] = 0.2
