"""Acceptance suite: one recorded pass/fail line per criterion.

Run under pytest (lines appear in the terminal summary) or directly as a
script with ``python3 tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from rtglue import cylinder as cy
from rtglue import deform as df
from rtglue import dtn, torsion, zeta
from rtglue.cylinder import BCS, CylinderProblem, logdet_closed_form, logdet_mode_oracle
from rtglue.spectra import from_modes, twisted_torus_spectrum

FOUR_PI2 = 4 * math.pi ** 2
RESULTS = {}


def record(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def torus():
    return twisted_torus_spectrum(1.0, 1.0, 0.5, 0.5, 40 * FOUR_PI2)


@pytest.fixture(scope="module")
def torus_big():
    return twisted_torus_spectrum(1.0, 1.0, 0.5, 0.5, 100 * FOUR_PI2)


def one_mode(lam):
    return from_modes(3, [(0, lam, 1), (1, lam, 1, "minus"), (1, lam, 1), (2, lam, 1, "minus")])


def test_criterion_01_zero_mode_zeta():
    t0 = time.perf_counter()
    worst = 0.0
    for r in (0.5, 1.0, 2.0, 5.0):
        for method in (zeta.EXACT, zeta.THETA):
            z1 = zeta.zeta_prime_zero(zeta.SeriesSpectrum(r, 0.0), method).value
            z2 = zeta.zeta_prime_zero(zeta.SeriesSpectrum(r, 0.5), method).value
            worst = max(worst, abs(z1 + math.log(2 * r)), abs(z2 + math.log(2)))
    dt = time.perf_counter() - t0
    record(1, worst < 1e-9 and dt < 1.0, f"max err {worst:.2e} (tol 1e-9), {dt:.2f}s (< 1s)")


def test_criterion_02_closed_form_vs_oracle(torus_big):
    t0 = time.perf_counter()
    n_modes = torus_big.n_modes
    worst, ok = 0.0, True
    for bc in BCS:
        for q in range(4):
            for r in (0.5, 1.0, 2.0):
                p = CylinderProblem(q, r, bc, torus_big)
                a, b = logdet_closed_form(p), logdet_mode_oracle(p)
                d = abs(a.value - b.value)
                worst = max(worst, d)
                ok &= d <= a.error_bound + b.error_bound and d <= 1e-6
    dt = time.perf_counter() - t0
    record(2, ok and n_modes >= 1000 and dt < 120,
           f"{n_modes} modes, max |closed - oracle| {worst:.2e} (tol 1e-6 and bounds), {dt:.1f}s (< 120s)")


def test_criterion_03_neumann_dirichlet_split(torus):
    worst = 0.0
    for r in (0.5, 1.0, 2.0):
        for q in range(torus.m):
            lhs = cy.neumann_minus_dirichlet(q, r, torus)
            rhs = 0.5 * torus.logdet_plus(q).value + cy.cq_plus(q, r, torus)
            worst = max(worst, abs(lhs - rhs))
    record(3, worst < 1e-8, f"max residual {worst:.2e} (tol 1e-8)")


def test_criterion_04_difference_identities(torus):
    worst = 0.0
    for r in (0.5, 1.0, 2.0):
        for q in range(4):
            for item in (1, 2):
                lhs, rhs = cy.difference_identity(item, r, torus, q)
                worst = max(worst, abs(lhs - rhs))
        for item in (3, 4, 5):
            lhs, rhs = cy.difference_identity(item, r, torus)
            worst = max(worst, abs(lhs - rhs))
    rhs5 = cy.difference_identity(5, 1.0, torus)[1]
    vals = [cy.alternating_sum(r, torus, "P_minus_L0") - cy.alternating_sum(r, torus, "rel")
            for r in np.arange(0.5, 8.01, 0.25)]
    spread = max(vals) - min(vals)
    ok = worst < 1e-8 and rhs5 == 0 and spread < 1e-8
    record(4, ok, f"max item residual {worst:.2e}, item 5 rhs {rhs5}, r-spread {spread:.2e} (tol 1e-8)")


def test_criterion_05_dtn_branches():
    rng = np.random.default_rng(5)
    mus = rng.uniform(0.05, 20.0, 1000)
    rs = rng.uniform(0.05, 8.0, 1000)
    far = dtn.CylinderFar(1.0)
    worst = 0.0
    for mu, r in zip(mus, rs):
        sp = one_mode(mu * mu)
        q2 = mu / math.tanh(mu)
        for q in range(4):
            for bc in ("rel", "abs", "P_minus_L0", "P_plus_L1"):
                op = dtn.dtn_assemble(q, r, bc, sp, far)
                for f in op.families:
                    ref = mu / math.tanh(mu * r) if f.branch == dtn.COTH else mu * math.tanh(mu * r)
                    worst = max(worst, float(np.max(np.abs(f.value - (ref + q2)) / (ref + q2))))
    record(5, worst < 1e-12, f"1000 random (mu, r), max rel err {worst:.2e} (tol 1e-12)")


def test_criterion_06_bfk(torus):
    worst = 0.0
    for bc in BCS:
        for q in range(4):
            for r in (0.5, 1.0, 2.0):
                for L in (0.5, 1.0, 2.0):
                    worst = max(worst, abs(dtn.bfk_check(q, r, L, bc, torus).residual))
    single = 0.0
    for lam in (0.3, 1.0, 17.0):
        for r, L in [(0.5, 1.0), (1.0, 2.0), (2.0, 0.5)]:
            lhs, rhs = dtn.single_mode_bfk(lam, r, L)
            single = max(single, abs(lhs - rhs))
    circ = 0.0
    for theta0 in (0.5, 0.3):
        for q in range(4):
            circ = max(circ, abs(dtn.closed_circle_check(q, 2.0, theta0, torus).residual),
                       abs(dtn.closed_circle_check(q, 2.0, theta0, torus, r=0.8).residual))
    ok = worst < 1e-6 and single < 1e-10 and circ < 1e-5
    record(6, ok, f"cylinder {worst:.2e} (1e-6), single mode {single:.2e} (1e-10), circle {circ:.2e} (1e-5)")


def test_criterion_07_adiabatic(torus):
    grid = np.arange(0.5, 8.01, 0.5)
    mu_min = math.sqrt(torus.lam_min)
    parts, ok = [], True
    for pair, w in dtn.ADIABATIC_PAIRS.items():
        t = dtn.adiabatic_sweep(torus, pair, grid)
        target = w * sum(torus.logdet_full(q).value for q in range(torus.m))
        # least-squares fit v = c + C exp(-2 mu_min r) on the tail
        tail = grid >= 4.0
        X = np.column_stack([np.ones(tail.sum()), np.exp(-2 * mu_min * grid[tail])])
        c = np.linalg.lstsq(X, t.value[tail], rcond=None)[0][0]
        err = max(abs(c - target), abs(t.value[-1] - target))
        rate_ok = t.decay_rate >= 1.8 * mu_min
        ok &= err < 1e-6 and rate_ok
        parts.append(f"{pair[0]}/{pair[1]} err {err:.1e} rate {t.decay_rate / mu_min:.2f}mu")
    record(7, ok, "; ".join(parts) + " (tol 1e-6, rate >= 1.8mu)")


def test_criterion_08_slab_equalities(torus):
    worst = max(torsion.theorem_2_11_check(torus, r).max_residual for r in (0.5, 1.0, 2.0))
    record(8, worst < 1e-6, f"max residual {worst:.2e} at r = 0.5, 1, 2 (tol 1e-6)")


def test_criterion_09_finite_dimensional_suite():
    t0 = time.perf_counter()
    algebra, trace, expo = 0.0, 0.0, 0.0
    for mu in np.geomspace(0.05, 30, 20):
        b = df.build_block(mu)
        for th in np.linspace(0, math.pi / 2, 10):
            for k, v in df.lemma_checks(b, th).items():
                if k.startswith("trace"):
                    trace = max(trace, v)
                elif k == "exp_iT":
                    expo = max(expo, v)
                else:
                    algebra = max(algebra, v)
    heat = 0.0
    for theta in (0.0, 0.7, math.pi / 2):
        for t in (0.1, 0.5, 2.0):
            for y in (0.2, 1.0):
                res = df.heat_kernel_residuals(theta, 1.1, t, y)
                heat = max(heat, res["boundary_P"], res["boundary_Q"], res["pde"])
    mf_ok = True
    for th in (0.0, math.pi / 4, math.pi / 2):
        a, b = df.mellin_f(th, 1.0, 1e-10), df.mellin_f(th, 1.0, 5e-11)
        mf_ok &= math.isfinite(a.value) and abs(a.value - b.value) <= 10 * (a.error_bound + b.error_bound) + 1e-12
    dt = time.perf_counter() - t0
    ok = algebra < 1e-12 and trace < 1e-13 and expo < 1e-12 and heat < 1e-4 and mf_ok and dt < 60
    record(9, ok, f"200-point grid: identities {algebra:.1e}, trace {trace:.1e}, exp(iT) {expo:.1e}, "
                  f"heat {heat:.1e}, MF(1) stable {mf_ok}, {dt:.1f}s")


def test_criterion_10_spectral_flow():
    rng = np.random.default_rng(10)
    good, tried = 0, 0
    while tried < 100:
        d = 6
        X, Y = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for _ in range(2))
        H0, H1 = 0.5 * (X + X.conj().T), 0.5 * (Y + Y.conj().T)
        if min(np.abs(np.linalg.eigvalsh(H0)).min(), np.abs(np.linalg.eigvalsh(H1)).min()) < 1e-8:
            continue
        tried += 1
        rep = df.sf_eta_check(df.HermitianPath.linear(H0, H1))
        good += bool(rep.match) and rep.sf == round(rep.eta_difference)
    record(10, good == 100, f"{good}/100 random paths with SF equal to the eta difference")


def test_criterion_11_gluing(torus):
    worst, ok = 0.0, True
    for r, L in [(0.8, 1.2), (1.0, 1.0), (0.5, 2.0)]:
        rep = torsion.gluing_check(torus, r, L, theta0=0.5)
        res = max(abs(rep.residual_bfk), abs(rep.residual_pieces), *map(abs, rep.degree_residuals.values()))
        worst = max(worst, res)
        etas = (rep.eta_closed, *rep.eta_pieces)
        ok &= res < 1e-5 and rep.torsion_congruent and rep.eta_congruent and rep.zeta0_cancel
        ok &= all(e == 0 for e in etas)
    lm = torsion.build_ledger(torus, 1.0)
    a, b = torsion.cancellation_terms(lm, lm)
    ok &= a + b == 0
    record(11, ok, f"real-part residual {worst:.2e} (tol 1e-5), etas 0, mod 2pi i congruent, "
                   f"zeta0/l cancellation {a + b}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
