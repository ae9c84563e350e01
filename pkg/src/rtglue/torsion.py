"""Graded determinants, refined torsion logarithms and the gluing arithmetic
on product models.

Models
------
slab     [0, a] x T^2 with the same boundary condition at both ends.  Its
         boundary has two components, so every boundary correction appears
         twice.
circle   S^1_ell x T^2, closed, with a twist theta0 along the circle.  Cut at
         two copies of T^2 it splits into two slabs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import zeta
from .cylinder import slab_alternating_sum, slab_logdet, ptilde
from .deform import build_block
from .dtn import closed_circle_check, closed_circle_logdet
from .spectra import BoundarySpectrum

GRADED = ("P_minus_L0", "P_plus_L1")
_PARTNER = {"P_minus_L0": "Ptilde0", "P_plus_L1": "Ptilde1"}
_SIGN = {"P_minus_L0": +1, "P_plus_L1": -1}
TWO_PI = 2 * math.pi


class LedgerError(ValueError):
    pass


def degree_weight(q):
    return (-1) ** (q + 1) * q


@dataclass
class TorsionLedger:
    m: int
    logdets: dict            # "Ptilde0"/"Ptilde1" -> {q: log Det}
    eta: dict = field(default_factory=dict)   # graded bc -> eta invariant
    eta_trivial: float = 0.0
    zeta0_sum: float = 0.0
    l_correction: float = 0.0
    rank_E: int = 1

    def __post_init__(self):
        if self.rank_E < 1:
            raise LedgerError("rank_E must be a positive integer")
        if isinstance(self.eta, (int, float)):
            self.eta = {bc: float(self.eta) for bc in GRADED}

    @property
    def r_half(self):
        return (self.m + 1) // 2

    def degrees(self, kind):
        try:
            d = self.logdets[kind]
        except KeyError:
            raise LedgerError(f"ledger has no {kind} determinants") from None
        missing = [q for q in range(self.m + 1) if q not in d]
        if missing:
            raise LedgerError(f"missing degree entries {missing} for {kind}")
        return d


@dataclass(frozen=True)
class TorsionValue:
    det_part: float
    eta_part: complex
    zeta0_part: complex
    trivial_part: complex = 0j

    @property
    def log_T(self):
        return complex(self.det_part) + self.eta_part + self.zeta0_part + self.trivial_part

    def congruent(self, other, tol=1e-8):
        return congruent(self.log_T, other.log_T, tol)


def congruent(a, b, tol=1e-8):
    """a == b modulo 2 pi i."""
    d = complex(a) - complex(b)
    if abs(d.real) > tol * max(1.0, abs(complex(a).real)):
        return False
    k = d.imag / TWO_PI
    return abs(k - round(k)) * TWO_PI <= tol * max(1.0, abs(complex(a).imag))


def l_correction(spectrum: BoundarySpectrum):
    r = spectrum.r_half
    return float(sum((r - 1 - q) * (spectrum.lp(q) - spectrum.lm(q)) for q in range(0, r - 1)))


def _graded_terms(ledger: TorsionLedger, bc):
    if bc not in GRADED:
        raise LedgerError(f"graded determinant needs one of {GRADED}, got {bc!r}")
    lds = ledger.degrees(_PARTNER[bc])
    det = 0.5 * sum(degree_weight(q) * lds[q] for q in range(ledger.m + 1))
    if bc not in ledger.eta:
        raise LedgerError(f"ledger has no eta value for {bc}")
    eta = -1j * math.pi * ledger.eta[bc]
    z = _SIGN[bc] * 0.5j * math.pi * (0.25 * ledger.zeta0_sum + ledger.l_correction)
    return det, eta, z


def graded_logdet(ledger: TorsionLedger, bc) -> complex:
    det, eta, z = _graded_terms(ledger, bc)
    return det + eta + z


def refined_torsion(ledger: TorsionLedger, bc) -> TorsionValue:
    det, eta, z = _graded_terms(ledger, bc)
    triv = 0.5j * math.pi * ledger.rank_E * ledger.eta_trivial
    return TorsionValue(det, eta, z, triv)


def cancellation_terms(ledger_minus: TorsionLedger, ledger_plus: TorsionLedger):
    """zeta0/l parts of the P_minus and P_plus graded determinants; they are
    exact negatives when both ledgers share the same boundary."""
    _, _, a = _graded_terms(ledger_minus, "P_minus_L0")
    _, _, b = _graded_terms(ledger_plus, "P_plus_L1")
    return a, b


# ---------------------------------------------------------------------------
# signed spectra of the odd signature operator on the product models

def _blocks_of(spectrum: BoundarySpectrum):
    sp = spectrum
    if sp.m != 3:
        raise LedgerError("signed spectra are built for 3-dimensional product models")
    if not sp.acyclic:
        raise LedgerError("signed spectra need an acyclic boundary")
    if not sp.hodge_consistent():
        raise LedgerError("boundary spectrum is not Hodge consistent")
    return sp.plus(0)


def _null_count(M, rtol=1e-9):
    s = linalg.svdvals(M)
    scale = max(1.0, s[0])
    return int(np.sum(s <= rtol * scale))


def slab_signed_spectrum(spectrum: BoundarySpectrum, a, bc, e_max=None) -> zeta.SignedSpectrum:
    """Eigenvalues E of gamma(d_u + A) on [0, a] x T^2, condition P psi = 0 at
    both ends (P = P_- or P_+), up to |E| <= e_max.

    On a candidate E = +-sqrt(mu^2 + kappa^2) the transfer matrix
    exp(-a (A + E gamma)) is bounded, so the nullity test is well conditioned.
    """
    if bc not in GRADED:
        raise LedgerError(f"unsupported boundary condition {bc!r}")
    lam, mult = _blocks_of(spectrum)
    unit = build_block(1.0)
    P = unit.P_minus if bc == "P_minus_L0" else np.eye(4) - unit.P_minus
    w, v = linalg.eigh(P)
    Qb = v[:, w < 0.5]
    J = np.diag([1, 1, -1, -1])
    if np.linalg.norm(J @ P @ J - P) > 1e-14:
        raise LedgerError("boundary projection is not reflection invariant")
    Pfar = J @ P @ J
    wf, vf = linalg.eigh(Pfar)
    Rf = vf[:, wf > 0.5]
    if e_max is None:
        e_max = math.sqrt(lam.max()) if lam.size else 1.0
    vals = []
    for l, k in zip(lam, mult):
        mu = math.sqrt(l)
        if mu > e_max:
            continue
        A = mu * unit.A
        nmax = int(math.floor(a * math.sqrt(max(e_max ** 2 - l, 0.0)) / math.pi))
        for n in range(nmax + 1):
            kap = n * math.pi / a
            E0 = math.sqrt(l + kap * kap)
            found = 0
            for E in (E0, -E0):
                X = A + E * unit.gamma
                T = np.eye(4) - a * X if n == 0 else math.cos(kap * a) * np.eye(4) - math.sin(kap * a) / kap * X
                c = _null_count(Rf.conj().T @ T @ Qb)
                found += c
                vals.extend([E] * (c * int(k)))
            expect = 2 if n == 0 else 4
            if found != expect:
                raise LedgerError(f"slab eigenvalue count {found} != {expect} at mu={mu}, n={n}")
    return zeta.SignedSpectrum.from_values(vals)


def circle_signed_spectrum(spectrum: BoundarySpectrum, ell, theta0, e_max=None) -> zeta.SignedSpectrum:
    """Eigenvalues of gamma(i kappa + A) over circle modes kappa = 2 pi (n + theta0)/ell."""
    lam, mult = _blocks_of(spectrum)
    unit = build_block(1.0)
    if e_max is None:
        e_max = math.sqrt(lam.max()) if lam.size else 1.0
    vals = []
    for l, k in zip(lam, mult):
        mu = math.sqrt(l)
        if mu > e_max:
            continue
        kmax = math.sqrt(max(e_max ** 2 - l, 0.0))
        n_lo = math.ceil(-kmax * ell / TWO_PI - theta0)
        n_hi = math.floor(kmax * ell / TWO_PI - theta0)
        for n in range(n_lo, n_hi + 1):
            kap = TWO_PI * (n + theta0) / ell
            H = unit.gamma @ (1j * kap * np.eye(4) + mu * unit.A)
            if np.linalg.norm(H - H.conj().T) > 1e-12 * max(1.0, mu, abs(kap)):
                raise LedgerError("circle mode operator is not Hermitian")
            ev = linalg.eigvalsh(H)
            E0 = math.hypot(kap, mu)
            if np.max(np.abs(np.abs(ev) - E0)) > 1e-10 * max(1.0, E0):
                raise LedgerError(f"circle mode eigenvalues {ev} off the modulus {E0}")
            # exact modulus, computed sign
            vals.extend(np.repeat(np.sign(ev) * E0, int(k)))
    return zeta.SignedSpectrum.from_values(vals)


def symmetric_eta(spec: zeta.SignedSpectrum, what="spectrum"):
    """eta of a sign-symmetric spectrum: half the kernel dimension."""
    if not spec.is_symmetric():
        raise LedgerError(f"{what} is not sign symmetric; eta continuation is not supported")
    return 0.5 * spec.kernel_dim


# ---------------------------------------------------------------------------
# ledgers and checks on the models

N_BOUNDARY_SLAB = 2


def build_ledger(spectrum: BoundarySpectrum, a, rank_E=1, eta_trivial=0.0, with_eta=True) -> TorsionLedger:
    """Ledger of the slab [0, a] x Y (two boundary copies of Y)."""
    sp = spectrum
    lds = {kind: {q: slab_logdet(q, a, ptilde(kind, q), sp).value for q in range(sp.m + 1)}
           for kind in ("Ptilde0", "Ptilde1")}
    zsum = sum(sp.zeta0_full(q) for q in range(sp.m))
    eta = {}
    if with_eta:
        for bc in GRADED:
            eta[bc] = symmetric_eta(slab_signed_spectrum(sp, a, bc), f"slab spectrum under {bc}")
    return TorsionLedger(sp.m, lds, eta, eta_trivial, N_BOUNDARY_SLAB * zsum,
                         N_BOUNDARY_SLAB * l_correction(sp), rank_E)


@dataclass(frozen=True)
class EqualityReport:
    r: float
    sums: dict
    offset: float            # quarter sum of log Det B_Y^2, per boundary copy
    n_boundary: int
    residuals: dict

    @property
    def max_residual(self):
        return max(abs(v) for v in self.residuals.values())


def theorem_2_11_check(spectrum: BoundarySpectrum, r) -> EqualityReport:
    sp = spectrum
    if not sp.acyclic:
        raise LedgerError("the determinant equalities need an acyclic boundary")
    names = ("Ptilde0", "Ptilde1", "P_minus_L0", "P_plus_L1", "rel", "abs")
    s = {n: slab_alternating_sum(r, sp, n) for n in names}
    off = 0.25 * sum(sp.logdet_full(q).value for q in range(sp.m))
    nb = N_BOUNDARY_SLAB
    res = {
        "Ptilde0-rel": s["Ptilde0"] - s["rel"] - nb * off,
        "Ptilde1-rel": s["Ptilde1"] - s["rel"] + nb * off,
        "P_minus-abs": s["P_minus_L0"] - s["abs"],
        "P_plus-abs": s["P_plus_L1"] - s["abs"],
        "rel-abs": s["rel"] - s["abs"],
    }
    return EqualityReport(float(r), s, off, nb, res)


@dataclass(frozen=True)
class GluingReport:
    r: float
    L: float
    theta0: float
    closed_sum: float        # (1/2) sum_q w_q log Det on the closed model
    bfk_sum: float           # same through the two-cut gluing pipeline
    pieces_sum: float        # (1/2)(Ptilde1 sum on M1 + Ptilde0 sum on M2)
    abs_rel_sum: float       # (1/2)(abs sum on M1 + rel sum on M2)
    eta_closed: float
    eta_pieces: tuple
    log_T_closed: complex
    log_T_pieces: complex
    zeta0_terms: tuple
    error_bound: float
    degree_residuals: dict = field(default_factory=dict)
    note: str = ("imaginary parts verified only for sign-symmetric spectra; "
                 "the Maslov-index term is not computed")

    @property
    def residual_bfk(self):
        return self.closed_sum - self.bfk_sum

    @property
    def residual_pieces(self):
        return self.closed_sum - self.pieces_sum

    @property
    def eta_congruent(self):
        d = sum(self.eta_pieces) - self.eta_closed
        return abs(d / 2 - round(d / 2)) < 1e-12

    @property
    def torsion_congruent(self):
        return congruent(self.log_T_closed, self.log_T_pieces, 1e-5)

    @property
    def zeta0_cancel(self):
        a, b = self.zeta0_terms
        return a + b == 0


def gluing_check(spectrum: BoundarySpectrum, r, L, theta0=0.5) -> GluingReport:
    """S^1_{r+L} x Y = M1 u M2 with M1 = [0, r] x Y under P_+ and
    M2 = [r, r+L] x Y under P_-."""
    sp = spectrum
    if not sp.acyclic:
        raise LedgerError("gluing check needs an acyclic boundary")
    ell = r + L
    closed, bfk, err = 0.0, 0.0, 0.0
    dres = {}
    for q in range(sp.m + 1):
        w = 0.5 * degree_weight(q)
        rep = closed_circle_check(q, ell, theta0, sp, r=r)
        dres[q] = rep.lhs - rep.rhs
        closed += w * rep.lhs
        bfk += w * rep.rhs
        err += abs(w) * rep.error_bound
    pieces = 0.5 * (slab_alternating_sum(r, sp, "Ptilde1") + slab_alternating_sum(L, sp, "Ptilde0"))
    absrel = 0.5 * (slab_alternating_sum(r, sp, "abs") + slab_alternating_sum(L, sp, "rel"))
    eta_c = symmetric_eta(circle_signed_spectrum(sp, ell, theta0), "closed model spectrum")
    led1 = build_ledger(sp, r)
    led2 = build_ledger(sp, L)
    t1 = refined_torsion(led1, "P_plus_L1")
    t2 = refined_torsion(led2, "P_minus_L0")
    log_closed = closed - 1j * math.pi * eta_c
    zt = (t2.zeta0_part, t1.zeta0_part)
    return GluingReport(float(r), float(L), float(theta0), closed, bfk, pieces, absrel, eta_c,
                        (led1.eta["P_plus_L1"], led2.eta["P_minus_L0"]), log_closed,
                        t1.log_T + t2.log_T, zt, err, dres)


def closed_logdet_sum(spectrum, ell, theta0):
    """(1/2) sum_q w_q log Det on S^1_ell x Y by Epstein continuation."""
    return 0.5 * sum(degree_weight(q) * closed_circle_logdet(q, ell, theta0, spectrum).value
                     for q in range(spectrum.m + 1))


def wrap_imag(z):
    """Representative of z mod 2 pi i with imaginary part in (-pi, pi]."""
    k = round(z.imag / TWO_PI)
    w = complex(z.real, z.imag - k * TWO_PI)
    if w.imag <= -math.pi:
        w += 2j * math.pi
    return w


__all__ = [
    "TorsionLedger", "TorsionValue", "LedgerError", "graded_logdet", "refined_torsion", "congruent",
    "cancellation_terms", "l_correction", "degree_weight", "slab_signed_spectrum",
    "circle_signed_spectrum", "symmetric_eta", "build_ledger", "theorem_2_11_check",
    "EqualityReport", "gluing_check", "GluingReport", "closed_logdet_sum", "wrap_imag", "GRADED",
]
