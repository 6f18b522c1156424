import math

import numpy as np
import pytest

from cominfo import (
    DsbsParams,
    FiniteDist,
    JointDist,
    dsbs_decomposition,
    dsbs_exact_ci,
    dsbs_joint,
    dsbs_lb_analytic,
    dsbs_wyner_ci,
    entropy,
    gaussian_exact_ub,
    gaussian_li_elgamal_ub,
    gaussian_wyner,
    max_cross_entropy,
    mutual_information,
    synthesize,
)
from cominfo.closed_forms import binary_entropy

P_GRID = np.linspace(0.01, 0.49, 100)


def test_params_self_consistency():
    for p in P_GRID:
        par = DsbsParams.from_p(p)
        assert par.alpha0 == pytest.approx(
            0.5 * (par.a ** 2 + (1 - par.a) ** 2), abs=1e-12)
        assert par.beta0 == pytest.approx(par.a * (1 - par.a), abs=1e-12)
        assert par.p == pytest.approx(2 * par.a * (1 - par.a), abs=1e-12)


def test_joint_at_reference_point():
    j = dsbs_joint(0.375)
    assert np.allclose(j.matrix, [[0.3125, 0.1875], [0.1875, 0.3125]], atol=1e-15)
    assert np.allclose(j.matrix.sum(axis=1), [0.5, 0.5], atol=1e-15)


def test_joint_near_zero_crossover_is_diagonal():
    j = dsbs_joint(1e-9)
    assert np.allclose(j.matrix, np.diag([0.5, 0.5]), atol=1e-9)


def test_joint_domain():
    for bad in (0.0, 0.5, -0.1, 0.7):
        with pytest.raises(ValueError):
            dsbs_joint(bad)


def test_decomposition_channels():
    d = dsbs_decomposition(0.375)
    assert np.allclose(d.px_given_w.rows, [[0.75, 0.25], [0.25, 0.75]], atol=1e-12)
    assert np.allclose(d.py_given_w.rows, [[0.75, 0.25], [0.25, 0.75]], atol=1e-12)


def test_decomposition_synthesizes_joint_exactly():
    for p in P_GRID:
        gap = np.abs(synthesize(dsbs_decomposition(p)).matrix
                     - dsbs_joint(p).matrix).max()
        assert gap <= 1e-15


def test_witness_information_equals_wyner_formula():
    for p in (0.1, 0.25, 0.375, 0.45):
        d = dsbs_decomposition(p)
        i_val = mutual_information(synthesize(d)) + 0.0
        # I(XY;W) = H(pi) - 2 H2(a); compare against the closed form
        a = DsbsParams.from_p(p).a
        iw = entropy(synthesize(d)) - 2 * binary_entropy(a)
        assert iw == pytest.approx(dsbs_wyner_ci(p), abs=1e-12)
        assert iw >= i_val - 1e-12  # I(XY;W) >= I(X;Y)


def test_exact_ci_reference_value():
    # hand evaluation at a = 0.25: -2 H2(a) - 0.5 log 0.3125 - 0.5 log 0.1875
    assert dsbs_exact_ci(0.375) == pytest.approx(0.2938933, abs=1e-7)


def test_wyner_ci_reference_value():
    assert dsbs_wyner_ci(0.375) == pytest.approx(0.2300401, abs=1e-7)


def test_exact_strictly_above_wyner_on_grid():
    for p in P_GRID:
        assert dsbs_exact_ci(p) > dsbs_wyner_ci(p)


def test_gap_identity_on_grid():
    for p in P_GRID:
        par = DsbsParams.from_p(p)
        gap = 2 * par.a ** 2 * math.log(par.alpha0 / par.beta0)
        assert dsbs_exact_ci(p) - dsbs_wyner_ci(p) == pytest.approx(gap, abs=1e-12)


def test_wyner_vanishes_at_half():
    assert dsbs_wyner_ci(0.4999999) == pytest.approx(0.0, abs=1e-5)


def test_lb_analytic_reference_and_identity():
    assert dsbs_lb_analytic(0.25) == pytest.approx(0.2938933, abs=1e-7)
    for a in np.linspace(0.01, 0.49, 50):
        p = 2 * a * (1 - a)
        assert abs(dsbs_lb_analytic(a) - dsbs_exact_ci(p)) <= 1e-9


def test_lb_analytic_limit_small_a():
    # as a -> 0 the value tends to -log(alpha0) -> log 2
    val = dsbs_lb_analytic(1e-6)
    assert val == pytest.approx(math.log(2), abs=1e-4)
    assert abs(val - dsbs_exact_ci(2e-6 * (1 - 1e-6))) <= 1e-9


def test_lb_analytic_mirror_symmetry():
    # the two sign branches a and 1-a give the same value through the formula
    for a in (0.1, 0.3, 0.45):
        par_lo = dsbs_lb_analytic(a)
        alpha0 = 0.5 * (a ** 2 + (1 - a) ** 2)
        beta0 = a * (1 - a)
        root = math.sqrt(alpha0 - 0.25)
        mirrored = (-2 * binary_entropy(0.5 - root) + math.log(1 / alpha0)
                    + (1 - 2 * root) * math.log(alpha0 / beta0))
        assert par_lo == pytest.approx(mirrored, abs=1e-12)


def test_ub_objective_on_analytic_witness_matches_exact_ci():
    for p in (0.1, 0.25, 0.375):
        pi = dsbs_joint(p)
        d = dsbs_decomposition(p)
        a = DsbsParams.from_p(p).a
        total = 0.0
        for w in range(2):
            total += 0.5 * (-2 * binary_entropy(a)
                            + max_cross_entropy(d.px_given_w.row(w),
                                                d.py_given_w.row(w), pi))
        assert total == pytest.approx(dsbs_exact_ci(p), abs=1e-9)


def test_gaussian_wyner():
    assert gaussian_wyner(0.0) == 0.0
    assert gaussian_wyner(0.5) == pytest.approx(0.5 * math.log(3), abs=1e-12)
    assert gaussian_wyner(0.5) == pytest.approx(0.5493061, abs=1e-7)
    grid = np.linspace(0.0, 0.99, 60)
    vals = [gaussian_wyner(r) for r in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_gaussian_exact_ub():
    assert gaussian_exact_ub(0.0) == 0.0
    assert gaussian_exact_ub(0.5) == pytest.approx(0.5493061 + 1 / 3, abs=1e-6)
    assert gaussian_exact_ub(0.5) == pytest.approx(0.8826395, abs=1e-6)
    for r in np.linspace(0.01, 0.99, 60):
        gap = gaussian_exact_ub(r) - gaussian_wyner(r)
        assert gap == pytest.approx(r / (1 + r), abs=1e-12)
        assert gap <= 0.5


def test_gaussian_li_elgamal():
    assert gaussian_li_elgamal_ub(0.0) == pytest.approx(24 * math.log(2), abs=1e-12)
    assert gaussian_li_elgamal_ub(0.0) == pytest.approx(16.6355, abs=1e-4)
    assert gaussian_li_elgamal_ub(0.5) == pytest.approx(
        0.5 * math.log(4 / 3) + 24 * math.log(2), abs=1e-12)
    assert gaussian_li_elgamal_ub(0.5) == pytest.approx(16.7794, abs=1e-4)
    for r in np.linspace(0.0, 0.99, 60):
        assert gaussian_li_elgamal_ub(r) - gaussian_exact_ub(r) >= 15.44


def test_gaussian_ordering_strict_inside_interval():
    for r in np.linspace(0.01, 0.99, 50):
        assert gaussian_wyner(r) < gaussian_exact_ub(r) < gaussian_li_elgamal_ub(r)


def test_gaussian_domain():
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            gaussian_wyner(bad)
