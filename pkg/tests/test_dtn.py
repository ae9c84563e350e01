import math

import numpy as np
import pytest

from rtglue import dtn
from rtglue.cylinder import BCS
from rtglue.spectra import from_modes, twisted_torus_spectrum

FOUR_PI2 = 4 * math.pi ** 2


def one_mode(lam):
    return from_modes(3, [(0, lam, 1), (1, lam, 1, "minus"), (1, lam, 1), (2, lam, 1, "minus")])


def test_q2_values():
    assert dtn.q2_cylinder(1.0, 60.0) == pytest.approx(1.0, rel=1e-15)
    assert dtn.q2_cylinder(2.0, 1.0) == pytest.approx(2 / math.tanh(2), rel=1e-15)
    assert dtn.q2_cylinder(2.0, 1.0) == pytest.approx(2.0746294414551, abs=1e-12)
    assert dtn.q2_bvp(2.0, 1.0) == pytest.approx(dtn.q2_cylinder(2.0, 1.0), abs=1e-9)
    assert dtn.q2_cylinder(1e-9, 2.0) == pytest.approx(0.5, rel=1e-6)
    assert dtn.q2_cylinder(0.0, 2.0) == 0.5
    # asymptotic branch continuous with the direct formula
    assert dtn.q2_cylinder(20.0001, 1.0) == pytest.approx(20.0001 / math.tanh(20.0001), rel=1e-15)
    assert math.isfinite(dtn.q2_cylinder(1e4, 10.0))


def test_far_providers():
    far = dtn.CylinderFar(2.0)
    assert far.decay == 4.0 and "2.0" in far.describe()
    assert dtn.HalfLineFar()(3.0) == 3.0


def test_branch_algebra():
    rng = np.random.default_rng(0)
    mu = rng.uniform(1e-3, 30, 1000)
    r = rng.uniform(1e-2, 10, 1000)
    c = dtn.q1_branch(mu, r, dtn.COTH)
    t = dtn.q1_branch(mu, r, dtn.TANH)
    assert np.max(np.abs(c - mu / np.tanh(mu * r)) / np.abs(c)) < 1e-12
    assert np.max(np.abs(t - mu * np.tanh(mu * r)) / np.abs(t)) < 1e-12


@pytest.mark.parametrize("bc", BCS)
def test_assembly_branches(torus_small, bc):
    op = dtn.dtn_assemble(1, 0.8, bc, torus_small, dtn.CylinderFar(1.3))
    for f in op.families:
        ref = f.mu / np.tanh(f.mu * 0.8) if f.branch == dtn.COTH else f.mu * np.tanh(f.mu * 0.8)
        assert np.allclose(f.value, ref + f.mu / np.tanh(f.mu * 1.3), rtol=1e-13)
    assert op.min_value > 0
    assert op.overlap.empty and op.overlap.logdet() == 0


def test_pminus_branch_assignment(torus_small):
    # S_2 is empty for m = 3, so no single degree carries all four components
    op = dtn.dtn_assemble(1, 1.0, "P_minus_L0", torus_small)
    assert {f.component: f.branch for f in op.families} == {"T+": dtn.TANH, "T-": dtn.COTH, "N+": dtn.TANH}
    op = dtn.dtn_assemble(2, 1.0, "P_minus_L0", torus_small)
    assert {f.component: f.branch for f in op.families}["N-"] == dtn.COTH


def test_zero_mode_values():
    sp = twisted_torus_spectrum(1, 1, 0, 0, 5 * FOUR_PI2, acyclic=False)
    op = dtn.dtn_assemble(1, 2.0, "rel", sp, dtn.CylinderFar(1.0))
    vals = {z.component: z.q1 for z in op.zeros}
    assert vals["TK"] == 0.5 and vals["NK"] == 0.0
    assert all(z.value > 0 for z in op.zeros)


def test_unknown_bc(torus_small):
    with pytest.raises(ValueError):
        dtn.dtn_assemble(0, 1.0, "robin", torus_small)
    with pytest.raises(dtn.DtnError):
        dtn.dtn_assemble(0, -1.0, "rel", torus_small)


def test_nonpositive_entry_rejected(torus_small):
    op = dtn.dtn_assemble(0, 1.0, "rel", torus_small)
    f = op.families[0]
    bad = dtn.DtnFamily(f.degree, f.component, f.branch, f.mu, f.mult, -f.q1 - f.q2, f.q2)
    with pytest.raises(dtn.DtnError):
        dtn.logdet_dtn(dtn.DtnOperator(0, 1.0, "rel", (bad,), ()), torus_small)


def test_logdet_leading_only(torus_small):
    op = dtn.dtn_assemble(1, 1.0, "rel", torus_small)
    fams = tuple(dtn.DtnFamily(f.degree, f.component, f.branch, f.mu, f.mult, f.mu, f.mu) for f in op.families)
    parts = dtn.logdet_dtn_parts(dtn.DtnOperator(1, 1.0, "rel", fams, ()), torus_small)
    assert parts.correction == 0
    lead, _ = dtn.two_abs_logdet(1, torus_small)
    assert parts.value == pytest.approx(lead, abs=1e-12)


def test_single_eigenvalue_correction():
    sp = one_mode(1.0)
    op = dtn.dtn_assemble(0, 1.0, "rel", sp, dtn.CylinderFar(1.0))
    parts = dtn.logdet_dtn_parts(op, sp)
    c1 = 1 / math.tanh(1.0)
    assert parts.correction == pytest.approx(math.log((c1 + c1) / 2), abs=1e-15)


def test_large_r_limit(torus_small):
    far = dtn.CylinderFar(1.0)
    for q in range(4):
        lim = dtn.logdet_dtn_limit(q, torus_small, far)
        v = dtn.logdet_dtn(dtn.dtn_assemble(q, 6.0, "P_minus_L0", torus_small, far), torus_small)
        assert abs(v - lim) < 4 * 4 * math.exp(-2 * math.sqrt(torus_small.lam_min) * 6.0)


def test_partial_sums_converge(torus):
    op = dtn.dtn_assemble(1, 1.0, "rel", torus, dtn.CylinderFar(1.0))
    mu, ps = dtn.correction_partial_sums(op)
    tail = np.abs(ps - ps[-1])
    ratio = math.exp(-2 * mu.min())
    # tail after the first level is bounded by the first-level tail times the decay ratio
    first = np.searchsorted(mu, mu.min(), side="right")
    assert tail[first - 1] <= abs(ps[first - 1]) * ratio * 10


def test_single_mode_bfk():
    for lam in (0.3, 1.0, 17.0):
        for r, L in [(0.5, 1.0), (1.0, 1.0), (2.0, 0.7)]:
            lhs, rhs = dtn.single_mode_bfk(lam, r, L)
            assert abs(lhs - rhs) < 1e-10


def test_bfk_torus_example(torus):
    rep = dtn.bfk_check(1, 1.0, 1.0, "rel", torus)
    assert abs(rep.residual) < 1e-6
    assert set(rep.parts) == {"near", "far", "logdet_R", "correction"}


@pytest.mark.parametrize("bc", BCS)
def test_bfk_grid(torus, bc):
    for r in (0.5, 1.0, 2.0):
        for L in (0.5, 1.0, 2.0):
            for q in range(4):
                rep = dtn.bfk_check(q, r, L, bc, torus)
                assert abs(rep.residual) <= max(1e-6, rep.error_bound)


def test_bfk_non_acyclic():
    sp = twisted_torus_spectrum(1, 1, 0, 0, 40 * FOUR_PI2, acyclic=False)
    for bc in BCS:
        for q in range(4):
            assert abs(dtn.bfk_check(q, 1.0, 0.7, bc, sp).residual) < 1e-9


def test_bfk_swap_symmetry(torus):
    for q in range(4):
        a = dtn.bfk_check(q, 0.6, 1.4, "dirichlet", torus)
        b = dtn.bfk_check(q, 1.4, 0.6, "dirichlet", torus)
        assert a.lhs == pytest.approx(b.lhs, abs=1e-13)
        assert a.residual == pytest.approx(b.residual, abs=1e-9)


def test_long_far_piece(torus):
    # L -> infinity: log Det R tends to log Det(mu + q1) with exponential rate
    q, r = 1, 1.0
    near = dtn.dtn_assemble(q, r, "rel", torus, dtn.HalfLineFar())
    big = dtn.dtn_assemble(q, r, "rel", torus, dtn.CylinderFar(6.0))
    d = abs(dtn.logdet_dtn(near, torus) - dtn.logdet_dtn(big, torus))
    assert d < 16 * math.exp(-2 * math.sqrt(torus.lam_min) * 6.0)


def test_interval_dtn_det():
    for mu, a in [(0.5, 1.0), (2.0, 0.3), (7.0, 2.0)]:
        assert np.linalg.det(dtn.interval_dtn(mu, a)) == pytest.approx(mu * mu, rel=1e-12)


def test_circle_pair_det_matches_scalar():
    # two cuts reduce to one cut composed with the interval problem; check by values
    mu, r, L, phi = 1.3, 0.4, 1.1, 0.9
    R2 = dtn.circle_dtn_pair(mu, r, L, phi)
    assert np.allclose(R2, R2.conj().T)
    assert np.linalg.det(R2).real > 0
    R1 = dtn.circle_dtn_scalar(mu, r + L, phi)
    assert R1 == pytest.approx(2 * mu * (math.cosh(mu * (r + L)) - math.cos(phi)) / math.sinh(mu * (r + L)))


@pytest.mark.parametrize("theta0", [0.5, 0.3])
def test_closed_circle(torus, theta0):
    for q in range(4):
        one = dtn.closed_circle_check(q, 2.0, theta0, torus)
        two = dtn.closed_circle_check(q, 2.0, theta0, torus, r=0.8)
        assert one.cuts == 1 and two.cuts == 2
        assert abs(one.residual) < 1e-5 and abs(two.residual) < 1e-5
        assert one.lhs == two.lhs


def test_closed_circle_rejects(torus):
    with pytest.raises(dtn.DtnError):
        dtn.closed_circle_check(1, 2.0, 0.5, torus, r=3.0)
    with pytest.raises(dtn.DtnError):
        dtn.closed_circle_check(1, 2.0, 0.5, twisted_torus_spectrum(1, 1, 0, 0, acyclic=False))


@pytest.mark.parametrize("pair", list(dtn.ADIABATIC_PAIRS))
def test_adiabatic_limits(torus, pair):
    t = dtn.adiabatic_sweep(torus, pair, np.arange(0.5, 8.01, 0.5))
    assert abs(t.deviation[-1]) < 1e-6
    if dtn.ADIABATIC_PAIRS[pair] != 0:
        assert t.limit == pytest.approx(dtn.ADIABATIC_PAIRS[pair] * 4 * math.log(2), abs=1e-9)
        assert t.decay_rate >= 0.9 * 2 * math.sqrt(t.lam_min)
    assert len(t.rows()) == 16


def test_adiabatic_errors(torus):
    with pytest.raises(dtn.DtnError):
        dtn.adiabatic_sweep(torus, ("abs", "rel"), [1.0])
    with pytest.raises(dtn.DtnError):
        dtn.adiabatic_limit(torus, ("abs", "rel"))
