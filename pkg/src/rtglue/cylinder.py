"""Cylinder spectra and their zeta-regularized log-determinants.

The cylinder is [0, r] x Y.  A q-form splits into four families over the
boundary spectrum S_p (plus sector of degree p):

    component  base degree   meaning
    T+         q             tangential, coexact type
    T-         q-1           tangential, exact type
    N+         q-1           normal (du ^ .), coexact type
    N-         q-2           normal, exact type

and four kernel pieces (tangential/normal harmonic forms in K or Gamma K).
Each boundary condition at u = 0 puts every component under either a
Dirichlet (D) or a Neumann (N) condition; the far end u = r is Dirichlet.
A D-component carries the integer series (k pi / r)^2, an N-component the
half-integer series ((k - 1/2) pi / r)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import zeta
from .spectra import PLUS, BoundarySpectrum

BCS = ("P_minus_L0", "P_plus_L1", "rel", "abs")
EXTRA_BCS = ("dirichlet",)
INTEGER, HALF = "integer", "half"

# base-degree offset of each component
_OFFSET = {"T+": 0, "T-": 1, "N+": 1, "N-": 2}
# kernel pieces: (degree offset, sector)
_KER = {"TK": (0, +1), "TG": (0, -1), "NK": (1, +1), "NG": (1, -1)}

_COND = {
    "P_minus_L0": {"T-": "D", "N-": "D", "T+": "N", "N+": "N", "TK": "D", "NK": "D", "TG": "N", "NG": "N"},
    "P_plus_L1": {"T-": "N", "N-": "N", "T+": "D", "N+": "D", "TK": "N", "NK": "N", "TG": "D", "NG": "D"},
    "rel": {"T+": "D", "T-": "D", "TK": "D", "TG": "D", "N+": "N", "N-": "N", "NK": "N", "NG": "N"},
    "abs": {"T+": "N", "T-": "N", "TK": "N", "TG": "N", "N+": "D", "N-": "D", "NK": "D", "NG": "D"},
    "dirichlet": {k: "D" for k in ("T+", "T-", "N+", "N-", "TK", "TG", "NK", "NG")},
}


class OracleDisagreement(RuntimeError):
    pass


def condition(bc, component):
    """'D' or 'N' for a component under a named boundary condition."""
    try:
        return _COND[bc][component]
    except KeyError:
        raise ValueError(f"unknown boundary condition {bc!r}") from None


def ptilde(kind, q):
    """Boundary condition used by the graded determinant in degree q."""
    if kind == "Ptilde0":
        return "P_minus_L0" if q % 2 == 0 else "P_plus_L1"
    if kind == "Ptilde1":
        return "P_plus_L1" if q % 2 == 0 else "P_minus_L0"
    return kind


@dataclass(frozen=True)
class CylinderProblem:
    q: int
    r: float
    bc: str
    spectrum: BoundarySpectrum

    def __post_init__(self):
        if self.bc not in _COND:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if not 0 <= self.q <= self.spectrum.m:
            raise ValueError(f"degree {self.q} out of range 0..{self.spectrum.m}")
        if not self.r > 0:
            raise ValueError("r must be positive")


@dataclass(frozen=True)
class ModeFamily:
    """{base + series} with base running over S_degree, or base 0 when degree is None."""
    series: str
    mult: int
    degree: int | None
    component: str

    @property
    def is_zero_mode(self):
        return self.degree is None


@dataclass(frozen=True)
class LogDetResult:
    value: float
    error_bound: float
    method: str = zeta.EXACT


def cylinder_spectrum(p: CylinderProblem) -> list[ModeFamily]:
    sp, q = p.spectrum, p.q
    out = []
    for comp, off in _OFFSET.items():
        deg = q - off
        if sp.has_plus(deg):
            series = INTEGER if condition(p.bc, comp) == "D" else HALF
            out.append(ModeFamily(series, 1, deg, comp))
    for comp, (off, sec) in _KER.items():
        deg = q - off
        k = sp.lp(deg) if sec > 0 else sp.lm(deg)
        if k:
            series = INTEGER if condition(p.bc, comp) == "D" else HALF
            out.append(ModeFamily(series, k, None, comp))
    return out


def _zero_series(r, series, mult, method=zeta.EXACT):
    return zeta.SeriesSpectrum(r, 0.0 if series == INTEGER else 0.5, mult)


def cq_plus(q, r, spectrum: BoundarySpectrum) -> float:
    """log C_q^+(r) = sum mult log(1 + 2 e^{-r mu} / (e^{r mu} - e^{-r mu}))."""
    if not 0 <= q < spectrum.m:
        return 0.0
    lam, mult = spectrum.plus(q)
    if lam.size == 0:
        return 0.0
    x = r * np.sqrt(lam)
    return float(np.dot(mult, np.log1p(2.0 / np.expm1(2 * x))))


def _block_closed(sp: BoundarySpectrum, deg, series, r):
    key = ("closed", deg, series, float(r))
    if key in sp._cache:
        return sp._cache[key]
    lam, mult = sp.plus(deg)
    xi = zeta.xi_prime_zero(sp.zeta_plus(deg), _m(sp, deg))
    mu = np.sqrt(lam)
    val = -r * xi.value
    err = r * xi.error_bound
    if series == INTEGER:
        ld = sp.logdet_plus(deg)
        val += -0.5 * ld.value + float(np.dot(mult, np.log(-np.expm1(-2 * r * mu))))
        err += 0.5 * ld.error_bound
    else:
        val += float(np.dot(mult, np.log1p(np.exp(-2 * r * mu))))
    err += 2 * sp.exp_tail(2 * r, deg, PLUS) + 1e-15 * (abs(val) + lam.size)
    out = LogDetResult(val, err)
    sp._cache[key] = out
    return out


def _m(sp, deg):
    return zeta.DIRECT if sp.model is None else zeta.EXACT


def family_logdet(fam: ModeFamily, r, sp: BoundarySpectrum) -> LogDetResult:
    if fam.is_zero_mode:
        z = zeta.log_det(_zero_series(r, fam.series, fam.mult), zeta.EXACT)
        return LogDetResult(z.value, z.error_bound)
    b = _block_closed(sp, fam.degree, fam.series, r)
    return LogDetResult(fam.mult * b.value, fam.mult * b.error_bound)


def logdet_closed_form(p: CylinderProblem) -> LogDetResult:
    val, err = 0.0, 0.0
    for fam in cylinder_spectrum(p):
        f = family_logdet(fam, p.r, p.spectrum)
        val += f.value
        err += f.error_bound
    return LogDetResult(val, err)


def logdet(q, r, bc, spectrum) -> float:
    return logdet_closed_form(CylinderProblem(q, r, bc, spectrum)).value


# ---------------------------------------------------------------------------
# mode oracle


def transfer_factor(lam, r, kind):
    """1-D determinant of -d^2/du^2 + lam on [0, r] from the fundamental matrix.

    kind: 'DD', 'ND' (Neumann at 0, Dirichlet at r) or 'NN'.  The matrix
    exp(r [[0, 1], [lam, 0]]) maps (y, y') at 0 to (y, y') at r.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    mu = np.sqrt(lam)
    # balance with diag(mu, 1): the generator becomes r mu [[0, 1], [1, 0]]
    gen = np.zeros((lam.size, 2, 2))
    gen[:, 0, 1] = gen[:, 1, 0] = r * mu
    E = linalg.expm(gen)
    if kind == "DD":
        # M01 = E01 / mu, with the mu -> 0 limit r
        safe = np.where(mu > 0, mu, 1.0)
        return 2 * np.where(mu > 0, E[:, 0, 1] / safe, r)
    if kind == "ND":
        return 2 * E[:, 0, 0]
    if kind == "NN":
        return 2 * mu * E[:, 1, 0]
    raise ValueError(kind)


def _continuant_log(x, n):
    """log det of the n x n matrix tridiag(-1, 2 + x, -1), vectorized over x; also n-1 size."""
    d2 = 2.0 + x
    prev = np.ones_like(x)  # D_0
    cur = d2.copy()  # D_1
    logs = np.zeros_like(x)
    if n == 0:
        return logs, None
    for k in range(2, n + 1):
        prev, cur = cur, d2 * cur - prev
        if k % 16 == 0:
            s = np.abs(cur)
            logs += np.log(s)
            prev, cur = prev / s, cur / s
    return logs, (prev, cur)


def fd_log_ratio(lam, r, kind, levels=5, n0=256):
    """log of det(-D_h^2 + lam) / det(-D_h^2), Richardson-extrapolated in h^2.

    Second-order stencils; a Neumann end uses the symmetric ghost point.
    Returns (values, error estimates).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    # grid refinement so that lam h^2 stays small at the coarsest level
    need = np.sqrt(lam.max() if lam.size else 0.0) * r * 2.0
    base = n0
    while base < need:
        base *= 2
    rows = []
    for j in range(levels):
        N = base * 2 ** j
        h = r / N
        x = lam * h * h
        if kind == "DD":
            lg, (prev, cur) = _continuant_log(x, N - 1)
            val = lg + np.log(cur) - math.log(N)
        elif kind == "ND":
            lg, (prev, cur) = _continuant_log(x, N - 1)
            # full det = (2 + x) E_{N-1} - 2 E_{N-2}; reference value 2
            val = lg + np.log((2 + x) * cur - 2 * prev) - math.log(2.0)
        else:
            raise ValueError(f"finite-difference oracle supports DD and ND, not {kind}")
        rows.append(val)
    table = [rows]
    for k in range(1, levels):
        p = table[-1]
        f = 4.0 ** k
        table.append([(f * p[i + 1] - p[i]) / (f - 1) for i in range(len(p) - 1)])
    best = table[-1][0]
    err = np.abs(best - table[-2][-1])
    return best, err


def _block_oracle(sp: BoundarySpectrum, deg, series, r, atol=1e-8):
    key = ("oracle", deg, series, float(r))
    if key in sp._cache:
        return sp._cache[key]
    lam, mult = sp.plus(deg)
    kind = "DD" if series == INTEGER else "ND"
    mu = np.sqrt(lam)
    # (a) fundamental solution
    la = np.log(transfer_factor(lam, r, kind))
    # (b) finite differences against the lam = 0 reference
    d0 = -zeta.zeta_prime_zero(_zero_series(r, series, 1), zeta.THETA).value
    lb, eb = fd_log_ratio(lam, r, kind)
    lb = lb + d0
    gap = np.abs(la - lb)
    tol = atol + 5 * eb + 1e-12 * r * mu
    if np.any(gap > tol):
        i = int(np.argmax(gap - tol))
        raise OracleDisagreement(
            f"shooting and finite-difference determinants differ at lambda={lam[i]!r}: {gap[i]:.3e}")
    # regularized sum: the divergent r*mu (and -1/2 log lam) parts go through the engine
    sub = la - r * mu
    if kind == "DD":
        sub = sub + 0.5 * np.log(lam)
    val = float(np.dot(mult, sub)) if lam.size else 0.0
    z = zeta.zeta_at(sp.zeta_plus(deg), -0.5, _oracle_method(sp))
    val += r * z.value
    err = r * z.error_bound + float(np.dot(mult, gap)) if lam.size else r * z.error_bound
    if kind == "DD":
        ld = zeta.log_det(sp.zeta_plus(deg), _oracle_method(sp))
        val -= 0.5 * ld.value
        err += 0.5 * ld.error_bound
    err += 2 * sp.exp_tail(2 * r, deg, PLUS) + 1e-14 * (abs(val) + float(np.sum(mult)))
    out = LogDetResult(val, err, "mode-oracle")
    sp._cache[key] = out
    return out


def _oracle_method(sp):
    return zeta.DIRECT if sp.model is None else zeta.THETA


def logdet_mode_oracle(p: CylinderProblem) -> LogDetResult:
    val, err = 0.0, 0.0
    for fam in cylinder_spectrum(p):
        if fam.is_zero_mode:
            kind = "DD" if fam.series == INTEGER else "ND"
            la = math.log(float(transfer_factor(0.0, p.r, kind)[0]))
            val += fam.mult * la
            err += fam.mult * 1e-14 * max(1.0, abs(la))
            continue
        b = _block_oracle(p.spectrum, fam.degree, fam.series, p.r)
        val += fam.mult * b.value
        err += fam.mult * b.error_bound
    return LogDetResult(val, err, "mode-oracle")


# ---------------------------------------------------------------------------
# differences


def neumann_minus_dirichlet(q, r, spectrum):
    """(-zeta'_N(0)) - (-zeta'_D(0)) for the S_q families."""
    return (_block_closed(spectrum, q, HALF, r).value - _block_closed(spectrum, q, INTEGER, r).value)


def alternating_sum(r, spectrum, bc) -> float:
    """sum_q (-1)^{q+1} q log Det over q = 0..m; bc may be 'Ptilde0' / 'Ptilde1'."""
    tot = 0.0
    for q in range(spectrum.m + 1):
        tot += (-1) ** (q + 1) * q * logdet(q, r, ptilde(bc, q), spectrum)
    return tot


def _ld_plus(sp, q):
    return sp.logdet_plus(q).value if 0 <= q < sp.m else 0.0


EMPTY_SECTOR_NOTE = "terms in degrees outside 0..m-1 (e.g. q-2 < 0) are taken as zero"


def difference_identity(item, r, spectrum, q=None):
    """(lhs, rhs) of the five determinant-difference identities on [0, r] x Y.

    Terms in degrees outside 0..m-1 contribute zero (EMPTY_SECTOR_NOTE)."""
    sp, lr = spectrum, math.log(r)
    if item in (1, 2):
        if q is None:
            raise ValueError("items 1 and 2 need a degree q")
        rel = logdet(q, r, "rel", sp)
        if item == 1:
            lhs = logdet(q, r, "P_minus_L0", sp) - rel
            rhs = (0.5 * (_ld_plus(sp, q) - _ld_plus(sp, q - 2)) + cq_plus(q, r, sp)
                   - cq_plus(q - 2, r, sp) + (sp.lp(q - 1) - sp.lm(q)) * lr)
        else:
            lhs = logdet(q, r, "P_plus_L1", sp) - rel
            rhs = (sp.lm(q - 1) - sp.lp(q)) * lr
        return lhs, rhs
    qs = range(sp.m)
    even = [k for k in qs if k % 2 == 0]
    odd = [k for k in qs if k % 2 == 1]
    rel = alternating_sum(r, sp, "rel")
    if item == 3:
        lhs = alternating_sum(r, sp, "Ptilde0") - rel
        rhs = (sum(_ld_plus(sp, k) for k in even) + 2 * sum(cq_plus(k, r, sp) for k in even)
               + (sum((2 * k + 1) * sp.lm(k) for k in even) - sum((2 * k + 1) * sp.lp(k) for k in odd)) * lr)
    elif item == 4:
        lhs = alternating_sum(r, sp, "Ptilde1") - rel
        rhs = (-sum(_ld_plus(sp, k) for k in odd) - 2 * sum(cq_plus(k, r, sp) for k in odd)
               + (sum((2 * k + 1) * sp.lp(k) for k in even) - sum((2 * k + 1) * sp.lm(k) for k in odd)) * lr)
    elif item == 5:
        lhs = alternating_sum(r, sp, "P_minus_L0") - rel
        rhs = 0.5 * sp.m * sp.euler_char * lr
    else:
        raise ValueError("item must be 1..5")
    return lhs, rhs


def lemma_2_7_difference(q, r, spectrum, pair):
    """log Det(bcA) - log Det(bcB) in degree q."""
    a, b = pair
    return logdet(q, r, a, spectrum) - logdet(q, r, b, spectrum)


# ---------------------------------------------------------------------------
# slabs: [0, a] x Y with the same condition at both ends


def slab_logdet(q, a, bc, spectrum) -> LogDetResult:
    """Both ends under bc.  D-components give Dirichlet-Dirichlet families,
    N-components Neumann-Neumann ones (= Dirichlet-Dirichlet + log lam per mode).
    Requires an acyclic boundary (a Neumann-Neumann zero mode is a kernel)."""
    sp = spectrum
    if not sp.acyclic:
        raise ValueError("slab determinants need an acyclic boundary")
    if not 0 <= q <= sp.m:
        raise ValueError("degree out of range")
    val, err = 0.0, 0.0
    for comp, off in _OFFSET.items():
        deg = q - off
        if not 0 <= deg < sp.m:
            continue
        b = _block_closed(sp, deg, INTEGER, a)
        val += b.value
        err += b.error_bound
        if condition(bc, comp) == "N":
            ld = sp.logdet_plus(deg, _m(sp, deg))
            val += ld.value
            err += ld.error_bound
    return LogDetResult(val, err)


def slab_alternating_sum(a, spectrum, bc) -> float:
    return sum((-1) ** (q + 1) * q * slab_logdet(q, a, ptilde(bc, q), spectrum).value
               for q in range(spectrum.m + 1))


__all__ = [
    "BCS", "CylinderProblem", "ModeFamily", "LogDetResult", "OracleDisagreement",
    "cylinder_spectrum", "logdet_closed_form", "logdet_mode_oracle", "logdet", "cq_plus",
    "difference_identity", "EMPTY_SECTOR_NOTE", "lemma_2_7_difference", "alternating_sum", "neumann_minus_dirichlet",
    "transfer_factor", "fd_log_ratio", "condition", "ptilde", "slab_logdet",
    "slab_alternating_sum", "family_logdet",
]
