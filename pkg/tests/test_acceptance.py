"""Acceptance gate: one PASS/FAIL line per criterion.

Run on its own with ``pytest tests/test_acceptance.py -v``; the summary
lines print even when output capture is on.
"""
import dataclasses
import math
import os

import numpy as np
import pytest

from rankcal.are import (DistributionSpec, are_adjusted_vs_unadjusted, are_report,
                         are_wmw_vs_t)
from rankcal.calibration import adjusted_u, fit_calibration
from rankcal.domain import DesignSpec, TrialData
from rankcal.inference import (confidence_interval, phi_pooled, phi_under_null,
                               variance_components)
from rankcal.randomization import (RandomizationScheme, assign, assign_minimization,
                                   assign_simple, balance_report)
from rankcal.ranks import compute_u, pair_count
from rankcal.simlab import Scenario, run_study, theta_truth

from conftest import make_trial

R = 2000
SEED = 20240101
WORKERS = max(1, min(4, os.cpu_count() or 1))


@pytest.fixture
def verdict(capsys):
    def emit(number, title, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{name}{'' if passed else ' [FAIL]'}" for name, passed in checks)
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} :: {detail}")
        assert ok, detail
    return emit


def within(value, centre, tol):
    return abs(value - centre) <= tol


def study(**kw):
    return run_study(Scenario(replications=R, seed=SEED, **kw), threads=WORKERS)


def test_criterion_1_are_constants(verdict):
    normal = are_wmw_vs_t(DistributionSpec.normal())
    uniform = are_wmw_vs_t(DistributionSpec.uniform())
    dexp = are_wmw_vs_t(DistributionSpec.double_exponential())
    verdict(1, "exact ARE constants", [
        (f"normal {normal:.9f} vs 3/pi", abs(normal - 3 / math.pi) < 1e-9),
        (f"rounded {normal:.3f} == 0.955", round(normal, 3) == 0.955),
        (f"uniform {uniform!r}", abs(uniform - 1.0) < 1e-9),
        (f"double-exponential {dexp!r}", abs(dexp - 1.5) < 1e-9),
    ])


def test_criterion_2_kernel_oracle(verdict):
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(1000):
        nj, nk = rng.integers(1, 201, size=2)
        pool = rng.permutation(20_000)[: nj + nk] / 7.0  # distinct values
        y_j, y_k = pool[:nj], pool[nj:]
        if pair_count(y_j, y_k, "fast") != pair_count(y_j, y_k, "brute"):
            mismatches += 1
    verdict(2, "fast kernel equals brute-force kernel", [
        (f"{mismatches} mismatches over 1000 tie-free instances", mismatches == 0)])


def test_criterion_3_normal_null(verdict):
    res = study()
    t, u, uc = (res.row(e) for e in ("mean_diff", "u", "u_adjusted"))
    verdict(3, "normal, a=0, n=400, simple", [
        (f"P t {t.P:.3f}", within(t.P, 0.05, 0.015)),
        (f"P U {u.P:.3f}", within(u.P, 0.05, 0.015)),
        (f"P U^C {uc.P:.3f}", within(uc.P, 0.05, 0.015)),
        (f"SD U {u.SD:.4f}", within(u.SD, 0.042, 0.004)),
        (f"SD U^C {uc.SD:.4f}", within(uc.SD, 0.031, 0.004)),
        *((f"CP {r.estimator} {r.CP:.3f}", 0.93 <= r.CP <= 0.96) for r in (t, u, uc)),
    ])


def test_criterion_4_stratified_conservative(verdict):
    res = study(randomizer="stratified_block")
    u, uc = res.row("u"), res.row("u_adjusted")
    verdict(4, "stratified block, a=0: unadjusted conservative, adjusted near level", [
        (f"P U {u.P:.3f} <= 0.035", u.P <= 0.035),
        (f"P U^C {uc.P:.3f}", within(uc.P, 0.05, 0.015)),
    ])


def test_criterion_5_power_gain(verdict):
    norm = study(effect_a=0.2)
    dexp = study(effect_a=0.2, outcome_family="double_exponential")
    gn = norm.row("u_adjusted").P - norm.row("u").P
    gd = dexp.row("u_adjusted").P - dexp.row("u").P
    verdict(5, "power gain from calibration at a=0.2", [
        (f"normal {norm.row('u_adjusted').P:.3f} - {norm.row('u').P:.3f} = {gn:.3f} >= 0.15",
         gn >= 0.15),
        (f"double-exponential {dexp.row('u_adjusted').P:.3f} - {dexp.row('u').P:.3f} "
         f"= {gd:.3f} >= 0.10", gd >= 0.10),
    ])


def test_criterion_6_rank_advantage(verdict):
    res = study(effect_a=0.3, outcome_family="double_exponential")
    u, t = res.row("u").P, res.row("mean_diff").P
    verdict(6, "double-exponential a=0.3: WMW beats t-test", [
        (f"power U {u:.3f} > power t {t:.3f}", u > t)])


def _property_suite():
    rng = np.random.default_rng(7)
    out = {}
    ok = True
    for s in range(200):
        d = make_trial(n=90, J=3, seed=s)
        y_j, y_k = d.group_outcomes(1), d.group_outcomes(2)
        ok &= compute_u(y_j, y_k) + compute_u(y_k, y_j) == 1.0
    out["U_jk + U_kj = 1"] = bool(ok)

    design = DesignSpec.uniform(3)
    mono = aff = beta0 = phi_pos = width = True
    for s in range(100):
        d = make_trial(n=120, J=3, seed=1000 + s)
        base = adjusted_u(d, design)
        t = TrialData(d.treatments, np.arctan(d.outcomes) * 3 + 1, d.covariates, 3)
        mono &= (compute_u(d.group_outcomes(1), d.group_outcomes(2))
                 == compute_u(t.group_outcomes(1), t.group_outcomes(2)))
        mono &= adjusted_u(t, design).u_adjusted == base.u_adjusted
        A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        moved = TrialData(d.treatments, d.outcomes, d.covariates @ A.T + rng.normal(size=2), 3)
        aff &= abs(adjusted_u(moved, design).u_adjusted - base.u_adjusted) <= 1e-10
        fit = fit_calibration(d, design)
        zero = dataclasses.replace(fit, beta_j_hat=np.zeros(2), beta_k_hat=np.zeros(2))
        beta0 &= adjusted_u(d, design, fit=zero).u_adjusted == base.u_unadjusted
        phi_pos &= variance_components(d, design, fit).phi_jk >= 0
        plain = confidence_interval(d, design, "unadjusted")
        adj = confidence_interval(d, design, "adjusted", fit=fit)
        width &= adj.ci_high - adj.ci_low <= plain.ci_high - plain.ci_low
    out["monotone invariance of U and U^C"] = bool(mono)
    out["affine equivariance of U^C (1e-10)"] = bool(aff)
    out["beta=0 gives U^C = U"] = bool(beta0)
    out["phi >= 0"] = bool(phi_pos)
    out["adjusted CI no wider"] = bool(width)

    ident = True
    for _ in range(500):
        p = int(rng.integers(1, 6))
        a = rng.normal(size=(p, p))
        sigma = a @ a.T
        pi = rng.dirichlet(np.ones(4))
        beta = rng.normal(size=p)
        ref = phi_under_null(beta, sigma, DesignSpec(tuple(pi / pi.sum()), (1, 2)))
        got = phi_pooled(beta, beta, sigma, pi[0] / pi.sum(), pi[1] / pi.sum())
        ident &= abs(got - ref) <= 1e-12 * max(1.0, ref)
    out["pooled phi equals null form (1e-12)"] = bool(ident)

    same = True
    for s in range(100):
        d = make_trial(n=80, J=2, seed=5000 + s)
        two = DesignSpec((0.5, 0.5))
        same &= abs(adjusted_u(d, two, "pooled_mean").u_adjusted
                    - adjusted_u(d, two, "restricted_mean").u_adjusted) <= 1e-12
    out["pooled == restricted at J=2 (1e-12)"] = bool(same)

    prod = True
    for _ in range(200):
        b = rng.uniform(0, 0.28)
        for dist in (DistributionSpec.normal(), DistributionSpec.double_exponential(),
                     DistributionSpec.uniform()):
            rep = are_report(dist, b, 1.0)
            prod &= rep.adjusted_vs_t == are_wmw_vs_t(dist) * are_adjusted_vs_unadjusted(b, 1.0)
    out["ARE product identity (exact)"] = bool(prod)
    return out


def test_criterion_7_property_suite(verdict):
    verdict(7, "property suite", list(_property_suite().items()))


def test_criterion_8_randomization(verdict):
    unif = (0.25,) * 4
    rng = np.random.default_rng(8)
    n = 10_000
    strata = rng.integers(0, 4, n)
    levels = np.column_stack([strata, rng.integers(0, 3, n)])
    checks = []

    block = RandomizationScheme("stratified_block", unif, block_size=8, seed=1)
    sb = assign(block, strata=strata)
    exact = True
    for z in range(4):
        seq = sb[strata == z]
        m = seq.size // 8
        exact &= bool(np.all(np.bincount(seq[:8 * m], minlength=5)[1:] == 2 * m))
    checks.append(("stratified block exact counts after complete blocks", exact))

    sr = assign_simple(n, RandomizationScheme("simple", unif, seed=1))
    mz = assign_minimization(levels, RandomizationScheme("minimization", unif, seed=1))
    band = 3 * math.sqrt(0.25 * 0.75 / n)
    for name, a in (("simple", sr), ("stratified_block", sb), ("minimization", mz)):
        dev = float(np.max(np.abs(np.bincount(a, minlength=5)[1:] / n - 0.25)))
        checks.append((f"{name} marginal deviation {dev:.4f} < {band:.4f}", dev < band))

    dmz = balance_report(mz, strata, unif).max_deviation
    dsr = balance_report(sr, strata, unif).max_deviation
    checks.append((f"minimization max_deviation {dmz:.4f} < simple {dsr:.4f}", dmz < dsr))

    sc = Scenario(replications=40, seed=SEED, randomizer="minimization")
    one = run_study(sc, threads=1, chunk_size=5)
    two = run_study(sc, threads=2, chunk_size=5)
    again = assign(block, strata=strata)
    checks.append(("study bit-identical with 1 and 2 workers",
                   bool(np.array_equal(one.raw, two.raw)) and one.rows == two.rows))
    checks.append(("fixed seed reproduces assignments", bool(np.array_equal(sb, again))))
    verdict(8, "randomization invariants", checks)


def test_criterion_9_theta_oracle(verdict):
    checks = []
    for family in ("normal", "double_exponential"):
        v = theta_truth(Scenario(outcome_family=family, effect_a=0.0), draws=10**7)
        checks.append((f"{family} {v:.6f}", abs(v - 0.5) <= 0.0005))
    verdict(9, "theta oracle at a=0", checks)
