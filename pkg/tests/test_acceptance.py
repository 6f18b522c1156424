"""Acceptance suite: one test per criterion, each printing a pass line.

Run with `pytest -v -s tests/test_acceptance.py` to see the per-criterion
lines; every tolerance is pinned here, nothing is calibrated at runtime.
"""

import itertools
import math
import time

import numpy as np
import pytest

from cominfo import (
    DsbsParams,
    FiniteDist,
    JointDist,
    SearchOptions,
    dsbs_decomposition,
    dsbs_exact_ci,
    dsbs_joint,
    dsbs_wyner_ci,
    entropy,
    g_infinity,
    gamma_ub,
    gamma_ub_objective,
    gaussian_exact_ub,
    gaussian_li_elgamal_ub,
    gaussian_wyner,
    mixture_lambda,
    mixture_split,
    multiletter_gamma,
    product_lift,
    renyi_divergence,
    solve_transport,
    synthesize,
    wyner_ci,
    wyner_objective,
)
from cominfo.synthesis import run_covering_trial

from _helpers import random_decomposition, random_pseudo_product
from test_transport import oracle_transport_value

GAMMA_REF = 0.2938933
WYNER_REF = 0.2300401


def _report(num, detail, t0, budget):
    elapsed = time.time() - t0
    print(f"[PASS] criterion {num}: {detail} ({elapsed:.2f}s)")
    assert elapsed < budget


def test_criterion_01_dsbs_closed_forms():
    t0 = time.time()
    assert abs(dsbs_exact_ci(0.375) - GAMMA_REF) <= 1e-6
    assert abs(dsbs_wyner_ci(0.375) - WYNER_REF) <= 1e-6
    for p in np.linspace(0.005, 0.495, 100):
        par = DsbsParams.from_p(p)
        gap = 2.0 * par.a ** 2 * math.log(par.alpha0 / par.beta0)
        assert abs((dsbs_exact_ci(p) - dsbs_wyner_ci(p)) - gap) <= 1e-9
    _report(1, "DSBS closed forms and gap identity on a 100-point grid", t0, 1.0)


def test_criterion_02_optimizer_reproduces_dsbs_exact_ci():
    t0 = time.time()
    rep = gamma_ub(dsbs_joint(0.375), SearchOptions(starts=64, seed=0))
    assert rep.converged
    assert rep.value <= GAMMA_REF + 1e-3
    assert rep.value >= GAMMA_REF - 1e-3
    # the reported value is the objective evaluated on the returned witness
    assert gamma_ub_objective(rep.witness, dsbs_joint(0.375)) == pytest.approx(
        rep.value, abs=1e-9)
    _report(2, f"gamma_ub(DSBS 0.375) = {rep.value:.7f} within 1e-3 of {GAMMA_REF}",
            t0, 30.0)


def test_criterion_03_per_decomposition_inequality():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    for trial in range(200):
        nx = 2 if trial % 2 == 0 else 3
        ny = 2 if trial % 3 == 0 else 3
        k = int(rng.integers(1, 6))
        d = random_decomposition(rng, k, nx, ny)
        pi = synthesize(d)
        assert gamma_ub_objective(d, pi) >= wyner_objective(d) - 1e-9
    _report(3, "200 random decompositions satisfy UB objective >= I(XY;W)", t0, 10.0)


def test_criterion_04_transport_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(404)
    for trial in range(500):
        m = int(rng.integers(2, 4))
        n = int(rng.integers(2, 4))
        p = rng.dirichlet(np.ones(m))
        q = rng.dirichlet(np.ones(n))
        cost = rng.normal(size=(m, n)) * 2.5
        sense = "min" if trial % 2 == 0 else "max"
        plan = solve_transport(cost, FiniteDist(p), FiniteDist(q), sense)
        assert plan.value == pytest.approx(
            oracle_transport_value(cost, p, q, sense), abs=1e-9)
    _report(4, "network simplex matches vertex enumeration on 500 instances",
            t0, 10.0)


def test_criterion_05_g_infinity_additivity():
    t0 = time.time()
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        pi = JointDist(rng.dirichlet(np.ones(4)).reshape(2, 2))
        single = g_infinity(pi).value
        double = g_infinity(product_lift(pi, 2)).value
        worst = max(worst, abs(double - 2.0 * single))
        assert abs(double - 2.0 * single) <= 2e-4
    _report(5, f"order-inf additivity on 50 random 2x2 (worst gap {worst:.2e})",
            t0, 60.0)


def test_criterion_06_pseudo_product_equality():
    t0 = time.time()
    rng = np.random.default_rng(606)
    opts = SearchOptions(starts=32, seed=0)
    fold = SearchOptions(starts=8, seed=0)
    worst = 0.0
    for _ in range(20):
        pi = random_pseudo_product(rng)
        ub0 = gamma_ub(pi, opts)
        wy = wyner_ci(pi, opts, extra_starts=[ub0.witness])
        ub = gamma_ub(pi, fold, extra_starts=[wy.witness])
        assert ub.converged and wy.converged
        diff = abs(min(ub.value, ub0.value) - wy.value)
        worst = max(worst, diff)
        assert diff <= 2e-3
    # on a DSBS the same difference reproduces the known strict gap
    pi = dsbs_joint(0.375)
    ub = gamma_ub(pi, SearchOptions(starts=64, seed=0))
    wy = wyner_ci(pi, SearchOptions(starts=64, seed=0))
    gap = dsbs_exact_ci(0.375) - dsbs_wyner_ci(0.375)
    assert abs((ub.value - wy.value) - gap) <= 2e-3
    _report(6, f"20 pseudo-products give UB = Wyner (worst diff {worst:.2e}); "
               f"DSBS reproduces the strict gap", t0, 120.0)


def test_criterion_07_gaussian_comparison():
    t0 = time.time()
    for rho in np.linspace(0.0, 0.98, 50):
        w = gaussian_wyner(rho)
        e = gaussian_exact_ub(rho)
        le = gaussian_li_elgamal_ub(rho)
        assert abs((e - w) - rho / (1.0 + rho)) <= 1e-12
        assert le - e >= 15.44
    _report(7, "Gaussian gap identity to 1e-12 and dyadic-bound margin >= 15.44",
            t0, 1.0)


def test_criterion_08_splitting_exactness():
    t0 = time.time()
    rng = np.random.default_rng(88)
    for _ in range(1000):
        size = int(rng.integers(2, 6))
        q = FiniteDist(rng.dirichlet(np.ones(size)))
        p = FiniteDist(rng.dirichlet(np.ones(size)))
        eps = renyi_divergence(p, q, math.inf) + 0.01
        resid = mixture_split(q, p, eps)
        recon = math.exp(-eps) * p.probs + (1.0 - math.exp(-eps)) * resid.probs
        assert np.max(np.abs(recon - q.probs)) <= 1e-12
    interior = 0
    while interior < 200:
        q = FiniteDist(rng.dirichlet(np.ones(4)))
        p = FiniteDist(rng.dirichlet(np.ones(4)))
        lam = mixture_lambda(q, p)
        if not 1e-3 < lam < 1.0 - 1e-3:
            continue
        interior += 1
        hi = (q.probs - (lam + 1e-6) * p.probs) / (1.0 - (lam + 1e-6))
        lo = (q.probs - (lam - 1e-6) * p.probs) / (1.0 - (lam - 1e-6))
        assert hi.min() < -1e-12 or hi.min() < 0.0
        assert lo.min() >= -1e-12
    _report(8, "1000 splits reconstruct to 1e-12; mixture coefficient is maximal",
            t0, 5.0)


def test_criterion_09_covering_trend():
    t0 = time.time()
    rates = [GAMMA_REF - 0.25, GAMMA_REF, GAMMA_REF + 0.25, GAMMA_REF + 0.5]
    runs = {}
    for rate in rates:
        runs[rate] = [run_covering_trial(0.375, 6, 0.2, rate, seed)["d_inf"]
                      for seed in range(32)]
    medians = [float(np.median(runs[rate])) for rate in rates]
    for lo, hi in zip(medians[1:], medians[:-1]):
        assert lo <= hi
    # the seed-pinned run is bit-reproducible
    again = [run_covering_trial(0.375, 6, 0.2, rates[1], seed)["d_inf"]
             for seed in range(32)]
    assert again == runs[rates[1]]
    meds = ", ".join(f"{m:.3f}" for m in medians)
    _report(9, f"covering medians nonincreasing in R ({meds}); reproducible",
            t0, 300.0)


def test_criterion_10_exact_synthesis_and_lift():
    t0 = time.time()
    for p in np.linspace(0.01, 0.49, 49):
        gap = np.abs(synthesize(dsbs_decomposition(p)).matrix
                     - dsbs_joint(p).matrix).max()
        assert gap <= 1e-15
    pi = dsbs_joint(0.375)
    assert abs(entropy(product_lift(pi, 2)) - 2.0 * entropy(pi)) <= 1e-9
    _report(10, "analytic decomposition reproduces the joint to 1e-15 per cell",
            t0, 1.0)


def test_criterion_11_multiletter_subadditivity():
    t0 = time.time()
    pi = dsbs_joint(0.375)
    opts = SearchOptions(starts=16, seed=0)
    two = multiletter_gamma(pi, 2, opts)
    one = gamma_ub(pi, opts)
    assert two.converged and one.converged
    assert two.value / 2.0 <= one.value + 1e-3
    _report(11, f"Gamma(pi^2)/2 = {two.value / 2:.6f} <= Gamma(pi) = "
                f"{one.value:.6f} + 1e-3", t0, 600.0)
