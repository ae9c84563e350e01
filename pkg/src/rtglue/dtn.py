"""Dirichlet-to-Neumann operators on a cut Y_r of a cylinder, and the
gluing identity for determinants.

The near piece is [0, r] x Y under a boundary condition at u = 0; its
Neumann jump on a mode of B_Y^2 with eigenvalue mu^2 is mu coth(mu r) on
D-components and mu tanh(mu r) on N-components.  The far piece is supplied
as a callable mu -> Q2(mu), by default another cylinder with a Dirichlet far
end.  Everything is diagonal in the boundary modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import zeta
from .cylinder import _OFFSET, _KER, condition, logdet_closed_form, CylinderProblem, slab_logdet, ptilde
from .spectra import PLUS, BoundarySpectrum

COTH, TANH = "coth", "tanh"
LOG2 = math.log(2.0)
_BIG = 40.0


class DtnError(ValueError):
    pass


def q2_cylinder(mu, L):
    """mu coth(mu L); the harmonic-limit value 1/L at mu = 0."""
    if not L > 0:
        raise DtnError("L must be positive")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise DtnError("mu must be nonnegative")
    x = 2 * mu * L
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        val = np.where(x > _BIG, mu * (1 + 2 * np.exp(-np.minimum(x, 700))),
                       mu + 2 * mu / np.expm1(x))
    val = np.where(mu == 0, 1.0 / L, val)
    return val if val.ndim else float(val)


def q2_bvp(mu, L, tol=1e-10):
    """Neumann jump -psi'(0) of psi'' = mu^2 psi, psi(0) = 1, psi(L) = 0, by
    scipy's collocation solver.  Independent check of q2_cylinder."""
    def f(x, y):
        return np.vstack([y[1], mu * mu * y[0]])

    def bc(ya, yb):
        return np.array([ya[0] - 1.0, yb[0]])

    x = np.linspace(0, L, 64)
    y0 = np.vstack([1 - x / L, -np.ones_like(x) / L])
    sol = integrate.solve_bvp(f, bc, x, y0, tol=tol, max_nodes=200000)
    if not sol.success:
        raise DtnError(f"boundary-value solve failed: {sol.message}")
    return float(-sol.sol(0.0)[1])


@dataclass(frozen=True)
class CylinderFar:
    """Far piece [r, r + L] x Y with a Dirichlet end."""
    L: float

    def __call__(self, mu):
        return q2_cylinder(mu, self.L)

    @property
    def decay(self):
        return 2 * self.L

    def describe(self):
        return f"cylinder(L={self.L!r})"


@dataclass(frozen=True)
class HalfLineFar:
    """L -> infinity: Q2 = |A|, and 0 on harmonic modes."""

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu.copy() if mu.ndim else float(mu)

    decay = math.inf

    def describe(self):
        return "half-line"


@dataclass(frozen=True)
class KernelOverlapMatrix:
    """Gram matrix of boundary traces of a kernel basis.  Empty when the
    glued problem has no kernel, which is always the case here."""
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def empty(self):
        return self.matrix.size == 0

    def logdet(self):
        if self.empty:
            return 0.0
        sign, ld = np.linalg.slogdet(self.matrix)
        if sign <= 0:
            raise DtnError("kernel overlap matrix is not positive definite")
        return float(ld)


@dataclass(frozen=True)
class DtnFamily:
    degree: int
    component: str
    branch: str
    mu: np.ndarray
    mult: np.ndarray
    q1: np.ndarray
    q2: np.ndarray

    @property
    def value(self):
        return self.q1 + self.q2


@dataclass(frozen=True)
class DtnZero:
    component: str
    mult: int
    q1: float
    q2: float

    @property
    def value(self):
        return self.q1 + self.q2


@dataclass(frozen=True)
class DtnOperator:
    q: int
    r: float
    bc: str
    families: tuple
    zeros: tuple
    decay: float = math.inf
    overlap: KernelOverlapMatrix = field(default_factory=KernelOverlapMatrix)

    def entries(self):
        """Flattened per-mode arrays (mu, mult, branch, q2, value)."""
        if not self.families:
            e = np.zeros(0)
            return e, e.astype(int), np.zeros(0, dtype=object), e, e
        mu = np.concatenate([f.mu for f in self.families])
        mult = np.concatenate([f.mult for f in self.families])
        branch = np.concatenate([np.full(f.mu.size, f.branch, dtype=object) for f in self.families])
        q2 = np.concatenate([f.q2 for f in self.families])
        val = np.concatenate([f.value for f in self.families])
        return mu, mult, branch, q2, val

    @property
    def min_value(self):
        vals = [f.value.min() for f in self.families if f.mu.size] + [z.value for z in self.zeros]
        return min(vals) if vals else math.inf


def q1_branch(mu, r, branch):
    """Near-side jump: mu + 2mu e^{-2mu r}/(1 - e^{-2mu r}) or
    mu - 2mu e^{-2mu r}/(1 + e^{-2mu r})."""
    mu = np.asarray(mu, dtype=float)
    x = 2 * mu * r
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if branch == COTH:
            val = mu + 2 * mu / np.expm1(x)
        elif branch == TANH:
            val = mu - 2 * mu / (np.exp(x) + 1)
        else:
            raise DtnError(f"unknown branch {branch!r}")
    return val


def dtn_assemble(q, r, bc, spectrum: BoundarySpectrum, far=None) -> DtnOperator:
    sp = spectrum
    if not r > 0:
        raise DtnError("r must be positive")
    if not 0 <= q <= sp.m:
        raise DtnError(f"degree {q} out of range 0..{sp.m}")
    condition(bc, "T+")
    far = CylinderFar(1.0) if far is None else far
    fams = []
    for comp, off in _OFFSET.items():
        deg = q - off
        if not sp.has_plus(deg):
            continue
        lam, mult = sp.plus(deg)
        mu = np.sqrt(lam)
        br = COTH if condition(bc, comp) == "D" else TANH
        fams.append(DtnFamily(deg, comp, br, mu, mult, q1_branch(mu, r, br), np.asarray(far(mu), float)))
    zeros = []
    for comp, (off, sec) in _KER.items():
        deg = q - off
        k = sp.lp(deg) if sec > 0 else sp.lm(deg)
        if k:
            q1 = 1.0 / r if condition(bc, comp) == "D" else 0.0
            zeros.append(DtnZero(comp, k, q1, float(far(0.0))))
    decay = min(2 * r, getattr(far, "decay", math.inf))
    return DtnOperator(q, float(r), bc, tuple(fams), tuple(zeros), decay)


def two_abs_logdet(q, spectrum: BoundarySpectrum):
    """log Det(2|A|) on Y-forms of degrees q and q-1, kernel counted with log 2.

    Returns (value, error_bound).
    """
    sp = spectrum
    val, err = 0.0, 0.0
    for d in (q, q - 1):
        if not 0 <= d < sp.m:
            continue
        ld = sp.logdet_full(d)
        val += LOG2 * (sp.zeta0_full(d) + sp.l(d)) + 0.5 * ld.value
        err += 0.5 * ld.error_bound
    return val, err


def _leading(op: DtnOperator, sp: BoundarySpectrum):
    """log Det(2|A|) restricted to the modes carried by op (no kernel)."""
    val, err = 0.0, 0.0
    for f in op.families:
        ld = sp.logdet_plus(f.degree)
        val += LOG2 * sp.zeta0_plus(f.degree) + 0.5 * ld.value
        err += 0.5 * ld.error_bound
    return val, err


@dataclass(frozen=True)
class DtnLogDet:
    value: float
    leading: float
    correction: float
    zero_part: float
    error_bound: float


def logdet_dtn_parts(op: DtnOperator, spectrum: BoundarySpectrum) -> DtnLogDet:
    sp = spectrum
    if not op.min_value > 0:
        raise DtnError("DtN operator has a nonpositive entry")
    lead, err = _leading(op, sp)
    corr = 0.0
    for f in op.families:
        corr += float(np.dot(f.mult, np.log(f.value / (2 * f.mu))))
        if sp.model is not None:
            # discarded modes: |log(value/2mu)| <= 2 e^{-decay mu}
            err += 2 * sp.exp_tail(op.decay, f.degree, PLUS) if math.isfinite(op.decay) else math.inf
    zpart = sum(z.mult * math.log(z.value) for z in op.zeros)
    err += 1e-15 * (abs(lead) + abs(corr) + abs(zpart) + len(op.families))
    return DtnLogDet(lead + corr + zpart, lead, corr, zpart, err)


def logdet_dtn(op: DtnOperator, spectrum: BoundarySpectrum) -> float:
    return logdet_dtn_parts(op, spectrum).value


def correction_partial_sums(op: DtnOperator):
    """Partial sums of the correction series in order of increasing mu."""
    mu, mult, _, _, val = op.entries()
    order = np.argsort(mu, kind="stable")
    terms = mult[order] * np.log(val[order] / (2 * mu[order]))
    return mu[order], np.cumsum(terms)


def logdet_dtn_limit(q, spectrum: BoundarySpectrum, far) -> float:
    """log Det(Q2 + |A|): the r -> infinity limit of log Det R."""
    sp = spectrum
    lead, _ = _leading(dtn_assemble(q, 1.0, "P_minus_L0", sp, far), sp)
    corr, zpart = 0.0, 0.0
    for comp, off in _OFFSET.items():
        deg = q - off
        if sp.has_plus(deg):
            lam, mult = sp.plus(deg)
            mu = np.sqrt(lam)
            corr += float(np.dot(mult, np.log((mu + np.asarray(far(mu))) / (2 * mu))))
    for comp, (off, sec) in _KER.items():
        deg = q - off
        k = sp.lp(deg) if sec > 0 else sp.lm(deg)
        if k:
            v = float(far(0.0))
            if not v > 0:
                raise DtnError("limit operator has a kernel")
            zpart += k * math.log(v)
    return lead + corr + zpart


@dataclass(frozen=True)
class BfkReport:
    q: int
    r: float
    L: float
    bc: str
    lhs: float
    rhs: float
    error_bound: float
    parts: dict

    @property
    def residual(self):
        return self.lhs - self.rhs


def bfk_correction(q, spectrum):
    sp = spectrum
    return LOG2 * sum(sp.zeta0_full(d) + sp.l(d) for d in (q, q - 1) if 0 <= d < sp.m)


def bfk_check(q, r, L, bc, spectrum: BoundarySpectrum) -> BfkReport:
    """Gluing [0, r] x Y (bc at 0) to [r, r + L] x Y (Dirichlet at r + L).

    The glued problem has no kernel because of the Dirichlet far end, so the
    overlap term is absent even when the boundary is not acyclic.
    """
    sp = spectrum
    full = logdet_closed_form(CylinderProblem(q, r + L, bc, sp))
    near = logdet_closed_form(CylinderProblem(q, r, bc, sp))
    farp = logdet_closed_form(CylinderProblem(q, L, "dirichlet", sp))
    op = dtn_assemble(q, r, bc, sp, CylinderFar(L))
    R = logdet_dtn_parts(op, sp)
    corr = bfk_correction(q, sp)
    rhs = near.value + farp.value + R.value - corr - op.overlap.logdet()
    err = full.error_bound + near.error_bound + farp.error_bound + R.error_bound
    return BfkReport(q, float(r), float(L), bc, full.value, rhs, err,
                     {"near": near.value, "far": farp.value, "logdet_R": R.value, "correction": corr})


def single_mode_bfk(lam, r, L):
    """Closed-form check of the gluing identity for one mode under
    Dirichlet conditions: log of sinh(mu(r+L)) against the pieces."""
    mu = math.sqrt(lam)
    lhs = math.log(2 * math.sinh(mu * (r + L)) / mu)
    near = math.log(2 * math.sinh(mu * r) / mu)
    far = math.log(2 * math.sinh(mu * L) / mu)
    R = float(q1_branch(mu, r, COTH) + q2_cylinder(mu, L))
    rhs = near + far + math.log(R) - LOG2
    return lhs, rhs


# ---------------------------------------------------------------------------
# closed circle S^1 x Y (non-separating cuts)

def interval_dtn(mu, a):
    """2x2 Neumann-jump matrix of [0, a] with data at both ends; det = mu^2."""
    if mu == 0:
        return np.array([[1.0, -1.0], [-1.0, 1.0]]) / a
    c = mu / math.tanh(mu * a)
    s = mu / math.sinh(mu * a)
    return np.array([[c, -s], [-s, c]])


def circle_dtn_scalar(mu, ell, phi):
    """Single cut of a circle of length ell with holonomy e^{i phi}."""
    return 2 * mu * (math.cosh(mu * ell) - math.cos(phi)) / math.sinh(mu * ell)


def circle_dtn_pair(mu, r, L, phi):
    """Two cuts at u = 0 and u = r of a circle of length r + L.
    Unknowns are the values on the two cuts; the far piece closes through
    the holonomy."""
    Nr = interval_dtn(mu, r)
    NL = interval_dtn(mu, L)
    # far piece runs from the cut at r (its left end) to the cut at 0 seen
    # through the holonomy (its right end)
    V = np.array([[0, 1], [np.exp(1j * phi), 0]])
    return Nr + V.conj().T @ NL @ V


def _circle_log_corr(sp, ell, phi, r=None):
    """sum over modes of log(det R_mode / (2 mu)^k), k = 1 or 2 cuts."""
    out = {}
    for d in range(sp.m):
        lam, mult = sp.full(d)
        if lam.size == 0:
            out[d] = 0.0
            continue
        mu = np.sqrt(lam)
        if r is None:
            e = np.exp(-mu * ell)
            vals = np.log1p(-2 * math.cos(phi) * e + e * e) - np.log1p(-e * e)
        else:
            vals = np.array([math.log(np.linalg.det(circle_dtn_pair(m, r, ell - r, phi)).real / (4 * m * m))
                             for m in mu])
        out[d] = float(np.dot(mult, vals))
    return out


def closed_circle_logdet(q, ell, theta0, spectrum: BoundarySpectrum):
    """log Det of the degree-q Laplacian on S^1_ell x T^2 by 3-d Epstein
    continuation (multiplicity binom(3, q))."""
    sp = spectrum
    if sp.model is None or sp.m != 3:
        raise DtnError("closed circle model needs the torus model")
    t = sp.model
    k = math.comb(3, q)
    lat = zeta.LatticeSpectrum([t.L1, t.L2, ell], [t.alpha, t.beta, theta0], k)
    if lat.kernel:
        raise DtnError("closed circle model has harmonic forms")
    return zeta.log_det(lat, zeta.EXACT)


@dataclass(frozen=True)
class CircleReport:
    q: int
    ell: float
    theta0: float
    cuts: int
    lhs: float
    rhs: float
    error_bound: float

    @property
    def residual(self):
        return self.lhs - self.rhs


def closed_circle_check(q, ell, theta0, spectrum: BoundarySpectrum, r=None) -> CircleReport:
    """Gluing on S^1_ell x T^2 cut along one copy of Y (r None) or along two
    copies at distance r.  The pieces are cylinders with Dirichlet ends."""
    sp = spectrum
    if not sp.acyclic:
        raise DtnError("closed circle check needs an acyclic boundary")
    if r is not None and not 0 < r < ell:
        raise DtnError("cut position must lie inside the circle")
    phi = 2 * math.pi * theta0
    lhs = closed_circle_logdet(q, ell, theta0, sp)
    cuts = 1 if r is None else 2
    lengths = [ell] if r is None else [r, ell - r]
    rhs, err = 0.0, lhs.error_bound
    for a in lengths:
        s = slab_logdet(q, a, "dirichlet", sp)
        rhs += s.value
        err += s.error_bound
    lead, lerr = two_abs_logdet(q, sp)
    corr = _circle_log_corr(sp, ell, phi, r)
    rhs += cuts * lead + sum(corr[d] for d in (q, q - 1) if d in corr)
    rhs -= cuts * bfk_correction(q, sp)
    err += cuts * lerr + 4 * sum(sp.exp_tail(min(lengths), d) for d in (q, q - 1) if 0 <= d < sp.m)
    return CircleReport(q, float(ell), float(theta0), cuts, lhs.value, rhs, err)


# ---------------------------------------------------------------------------
# adiabatic limits

ADIABATIC_PAIRS = {
    ("Ptilde0", "rel"): +0.25,
    ("Ptilde1", "rel"): -0.25,
    ("P_minus_L0", "rel"): 0.0,
    ("P_plus_L1", "abs"): 0.0,
}


def glued_logdet(q, r, bc, spectrum, L=1.0):
    """log Det on [0, r] x Y glued to a length-L cylinder, through the
    gluing pipeline (near piece + far piece + DtN - correction)."""
    rep = bfk_check(q, r, L, bc, spectrum)
    return rep.rhs


def adiabatic_limit(spectrum, pair):
    if pair not in ADIABATIC_PAIRS:
        raise DtnError(f"unsupported pair {pair!r}")
    w = ADIABATIC_PAIRS[pair]
    if w == 0:
        return 0.0
    return w * sum(spectrum.logdet_full(q).value for q in range(spectrum.m))


@dataclass(frozen=True)
class AdiabaticTable:
    pair: tuple
    r: np.ndarray
    value: np.ndarray
    limit: float
    decay_rate: float
    lam_min: float

    @property
    def deviation(self):
        return self.value - self.limit

    def rows(self):
        return [(float(a), float(b), self.limit, float(b - self.limit)) for a, b in zip(self.r, self.value)]


def adiabatic_sweep(spectrum: BoundarySpectrum, pair, r_grid, L=1.0, floor=1e-11) -> AdiabaticTable:
    sp = spectrum
    if not sp.acyclic:
        raise DtnError("adiabatic sweep needs an acyclic boundary")
    if pair not in ADIABATIC_PAIRS:
        raise DtnError(f"unsupported pair {pair!r}")
    a, b = pair
    r_grid = np.asarray(list(r_grid), dtype=float)
    vals = []
    for r in r_grid:
        v = 0.0
        for q in range(sp.m + 1):
            w = (-1) ** (q + 1) * q
            if w:
                v += w * (glued_logdet(q, r, ptilde(a, q), sp, L) - glued_logdet(q, r, ptilde(b, q), sp, L))
        vals.append(v)
    vals = np.array(vals)
    lim = adiabatic_limit(sp, pair)
    dev = np.abs(vals - lim)
    keep = dev > floor * max(1.0, abs(lim))
    if keep.sum() >= 2:
        slope = np.polyfit(r_grid[keep], np.log(dev[keep]), 1)[0]
        rate = -float(slope)
    else:
        rate = math.inf
    return AdiabaticTable(pair, r_grid, vals, lim, rate, sp.lam_min)


__all__ = [
    "q2_cylinder", "q2_bvp", "CylinderFar", "HalfLineFar", "KernelOverlapMatrix", "DtnOperator",
    "DtnFamily", "DtnZero", "dtn_assemble", "q1_branch", "logdet_dtn", "logdet_dtn_parts",
    "logdet_dtn_limit", "two_abs_logdet", "correction_partial_sums", "bfk_check", "BfkReport",
    "bfk_correction", "single_mode_bfk", "interval_dtn", "circle_dtn_scalar", "circle_dtn_pair",
    "closed_circle_logdet", "closed_circle_check", "CircleReport", "adiabatic_sweep",
    "adiabatic_limit", "AdiabaticTable", "ADIABATIC_PAIRS", "glued_logdet", "COTH", "TANH", "DtnError",
]
