"""Spectral zeta functions, log-determinants and eta invariants.

Three evaluation routes are provided and tagged on every result:

* ``direct-sum``     finite spectra, summed term by term
* ``theta-split``    Mellin integral split at ``tau``; the small-time heat
                     asymptotics are subtracted analytically and the remainder
                     is integrated by adaptive quadrature
* ``exact-identity`` closed identities (Hurwitz zeta for the 1-D series,
                     incomplete-gamma / Poisson form for flat lattices)

Spectrum objects only need to expose a handful of hooks (``eigen``,
``heat_asymptotics``, ``heat_remainder``, ``heat_trace``); see
:class:`FiniteSpectrum`, :class:`SeriesSpectrum`, :class:`LatticeSpectrum`.
"""
from __future__ import annotations

import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np
from scipy import integrate, special

DIRECT = "direct-sum"
THETA = "theta-split"
EXACT = "exact-identity"
METHODS = (DIRECT, THETA, EXACT)

# exponent cut for Gaussian / incomplete-gamma tails: e^{-52} ~ 2.6e-23
_XCUT = 52.0

# mpmath precision is process-global, so threads take turns
_MP_LOCK = threading.RLock()


@contextmanager
def _mp(dps):
    with _MP_LOCK, mpmath.workdps(dps):
        yield


class ZetaError(ValueError):
    pass


@dataclass(frozen=True)
class ZetaResult:
    value: float | complex
    error_bound: float
    s: complex
    method: str

    def __float__(self):
        return float(np.real(self.value))


@dataclass(frozen=True)
class SignedSpectrum:
    mu: tuple = ()
    mult: tuple = ()
    kernel_dim: int = 0

    def __post_init__(self):
        if len(self.mu) != len(self.mult):
            raise ValueError("mu and mult must have equal length")
        if any(m == 0 for m in self.mu):
            raise ValueError("zero entries belong in kernel_dim")
        if any(int(k) <= 0 for k in self.mult):
            raise ValueError("multiplicities must be positive")
        if self.kernel_dim < 0:
            raise ValueError("kernel_dim must be non-negative")

    @classmethod
    def from_values(cls, values, atol=0.0):
        """Collect raw (possibly repeated) eigenvalues; |v| <= atol counts as kernel."""
        vals = np.asarray(values, dtype=float).ravel()
        ker = int(np.count_nonzero(np.abs(vals) <= atol))
        rest = np.sort(vals[np.abs(vals) > atol])
        if rest.size == 0:
            return cls((), (), ker)
        u, c = np.unique(rest, return_counts=True)
        return cls(tuple(float(x) for x in u), tuple(int(k) for k in c), ker)

    def is_symmetric(self, rtol=1e-10):
        pos = sorted((m, k) for m, k in zip(self.mu, self.mult) if m > 0)
        neg = sorted((-m, k) for m, k in zip(self.mu, self.mult) if m < 0)
        if len(pos) != len(neg):
            return False
        return all(abs(a - b) <= rtol * max(1.0, a) and ka == kb
                   for (a, ka), (b, kb) in zip(pos, neg))


def eta_invariant(spec: SignedSpectrum) -> float:
    """Half of (signed count + kernel dimension) for a finite signed spectrum."""
    eta0 = sum(int(k) * (1 if m > 0 else -1) for m, k in zip(spec.mu, spec.mult))
    return 0.5 * (eta0 + spec.kernel_dim)


# ---------------------------------------------------------------------------
# spectrum objects


class _Spectrum:
    """Positive spectrum with a heat-trace expansion ``sum a t^p`` at t -> 0."""

    tau = 1.0
    default_method = THETA
    kernel = 0

    def is_empty(self):
        return False

    def heat_trace(self, t):
        lam, mult = self.eigen(_XCUT / t)
        return float(np.dot(mult, np.exp(-t * lam)))

    def poles(self):
        return [-p for p, _ in self.heat_asymptotics() if p != 0]


class FiniteSpectrum(_Spectrum):
    default_method = DIRECT

    def __init__(self, values, mult=None):
        lam = np.atleast_1d(np.asarray(values, dtype=float))
        k = np.ones_like(lam) if mult is None else np.asarray(mult, dtype=float)
        keep = k > 0
        lam, k = lam[keep], k[keep]
        if np.any(lam <= 0):
            raise ZetaError("finite spectrum must be positive")
        self.lam, self.mult = lam, k

    def is_empty(self):
        return self.lam.size == 0

    def eigen(self, cap=np.inf):
        sel = self.lam <= cap
        return self.lam[sel], self.mult[sel]

    def heat_asymptotics(self):
        return [(0.0, float(self.mult.sum()))]

    def heat_remainder(self, t):
        return float(np.dot(self.mult, np.expm1(-t * self.lam)))

    def heat_trace(self, t):
        return float(np.dot(self.mult, np.exp(-t * self.lam)))

    def scaled(self, c):
        return FiniteSpectrum(c * self.lam, self.mult)


class SeriesSpectrum(_Spectrum):
    """{((k - shift) * pi / r)^2 : k >= 1} with a common multiplicity.

    shift = 0 gives the integer series, shift = 1/2 the half-integer one.
    """

    def __init__(self, r, shift=0.0, mult=1, scale=1.0):
        if r <= 0:
            raise ZetaError("r must be positive")
        if shift not in (0.0, 0.5):
            raise ZetaError("shift must be 0 or 1/2")
        self.r, self.shift, self.m, self.scale = float(r), float(shift), mult, float(scale)
        self.w = math.pi * math.sqrt(self.scale) / self.r  # eigenvalue = (w (k - shift))^2
        self.tau = 1.0

    def is_empty(self):
        return self.m == 0

    def eigen(self, cap=np.inf):
        kmax = int(math.sqrt(cap) / self.w + self.shift) + 1 if np.isfinite(cap) else 10**5
        k = np.arange(1, kmax + 1) - self.shift
        lam = (self.w * k) ** 2
        sel = lam <= cap
        return lam[sel], np.full(int(sel.sum()), float(self.m))

    def heat_asymptotics(self):
        a = self.m * math.sqrt(math.pi) / (2.0 * self.w)
        const = -0.5 * self.m if self.shift == 0.0 else 0.0
        return [(-0.5, a), (0.0, const)]

    def heat_remainder(self, t):
        # Poisson dual: sum_{k in Z} e^{-t w^2 (k+a)^2} = sqrt(pi/(t w^2)) sum_n e^{-pi^2 n^2/(t w^2)} cos(2 pi n a)
        z = math.pi ** 2 / (t * self.w ** 2)
        nmax = int(math.sqrt(_XCUT / z)) + 1
        n = np.arange(1, nmax + 1)
        sgn = np.ones(nmax) if self.shift == 0.0 else (-1.0) ** n
        pref = math.sqrt(math.pi / t) / self.w
        return self.m * pref * float(np.dot(sgn, np.exp(-z * n ** 2)))

    def scaled(self, c):
        return SeriesSpectrum(self.r, self.shift, self.m, self.scale * c)

    # exact route: Hurwitz zeta
    def exact_zeta(self, s):
        a = 1.0 - self.shift
        with _mp(15):
            return float(self.m * self.w ** (-2 * s) * mpmath.zeta(2 * s, a))

    def exact_zeta_prime_zero(self):
        a = 1.0 - self.shift
        with _mp(15):
            z0 = mpmath.zeta(0, a)
            z1 = mpmath.zeta(0, a, 1)
            return float(self.m * (-2 * math.log(self.w) * z0 + 2 * z1))


def _grid(bounds):
    axes = [np.arange(-b, b + 1) for b in bounds]
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


class LatticeSpectrum(_Spectrum):
    """Twisted flat-torus Laplacian: scale * 4 pi^2 sum ((n_i + a_i)/L_i)^2, n in Z^d.

    The zero eigenvalue (untwisted case) is removed and recorded in ``kernel``.
    """

    def __init__(self, lengths, twist, mult=1, scale=1.0):
        self.L = np.asarray(lengths, dtype=float)
        self.a = np.mod(np.asarray(twist, dtype=float), 1.0)
        if self.L.shape != self.a.shape or self.L.ndim != 1:
            raise ZetaError("lengths and twist must be 1-D of equal size")
        if np.any(self.L <= 0):
            raise ZetaError("lengths must be positive")
        self.d = self.L.size
        self.m = int(mult)
        self.scale = float(scale)
        self.kernel = self.m if np.all(self.a == 0.0) else 0
        self.vol = float(np.prod(self.L))
        # balanced split between the direct and the dual sums
        self.tau = float(np.exp(np.mean(np.log(self.L ** 2)))) / (4 * math.pi * self.scale)
        self._cache = {}

    def is_empty(self):
        return self.m == 0

    def _shift_wrap(self):
        # representative in (-1/2, 1/2]
        return np.where(self.a > 0.5, self.a - 1.0, self.a)

    def eigen(self, cap):
        key = ("eig", float(cap))
        if key in self._cache:
            return self._cache[key]
        c = 4 * math.pi ** 2 * self.scale
        bounds = [int(math.ceil(math.sqrt(cap / c) * Li)) + 1 for Li in self.L]
        n = _grid(bounds) + self._shift_wrap()
        lam = c * np.sum((n / self.L) ** 2, axis=1)
        sel = (lam <= cap) & (lam > 0)
        lam = np.sort(lam[sel])
        out = (lam, np.full(lam.size, float(self.m)))
        self._cache[key] = out
        return out

    def dual(self, cap):
        """Dual lattice data (R_m, cos phase) with 0 < R_m <= cap, R_m = sum m_i^2 L_i^2/(4 scale)."""
        key = ("dual", float(cap))
        if key in self._cache:
            return self._cache[key]
        bounds = [int(math.ceil(2 * math.sqrt(cap * self.scale) / Li)) + 1 for Li in self.L]
        mm = _grid(bounds)
        R = np.sum((mm * self.L) ** 2, axis=1) / (4 * self.scale)
        sel = (R > 0) & (R <= cap)
        R, ph = R[sel], np.cos(2 * math.pi * (mm[sel] @ self.a))
        order = np.argsort(R, kind="stable")
        out = (R[order], ph[order])
        self._cache[key] = out
        return out

    @property
    def vprime(self):
        return self.m * self.vol / (4 * math.pi * self.scale) ** (self.d / 2)

    def heat_asymptotics(self):
        return [(-self.d / 2.0, self.vprime), (0.0, -float(self.kernel))]

    def heat_remainder(self, t):
        R, ph = self.dual(_XCUT * max(t, self.tau))
        if R.size == 0:
            return 0.0
        return self.vprime * t ** (-self.d / 2) * float(np.dot(ph, np.exp(-R / t)))

    def heat_trace(self, t):
        lam, mult = self.eigen(_XCUT / min(t, self.tau))
        return float(np.dot(mult, np.exp(-t * lam)))

    def scaled(self, c):
        return LatticeSpectrum(self.L, self.a, self.m, self.scale * c)

    # exact route: incomplete gamma split at tau
    def _gamma_zeta(self, s):
        tau = mpmath.mpf(self.tau)
        s = mpmath.mpmathify(s)
        h = mpmath.mpf(self.d) / 2
        vp = mpmath.mpf(self.vprime)
        g = vp * tau ** (s - h) / (s - h) - self.kernel * tau ** s / s
        R, ph = self.dual(_XCUT * self.tau)
        for Ri, pi_ in zip(R, ph):
            Ri = mpmath.mpf(Ri)
            g += vp * pi_ * Ri ** (s - h) * mpmath.gammainc(h - s, Ri / tau)
        lam, mult = self.eigen(_XCUT / self.tau)
        for li, ki in zip(lam, mult):
            li = mpmath.mpf(li)
            g += ki * li ** (-s) * mpmath.gammainc(s, li * tau)
        return g

    def exact_zeta(self, s):
        if abs(s - self.d / 2) < 1e-14:
            raise ZetaError(f"pole of the lattice zeta function at s={self.d / 2}")
        if s == 0:
            return mpmath.mpf(-self.kernel * 1.0)
        with _mp(30):
            return float(self._gamma_zeta(s) / mpmath.gamma(s))

    def exact_zeta_prime_zero(self):
        with _mp(30):
            tau = mpmath.mpf(self.tau)
            h = mpmath.mpf(self.d) / 2
            vp = mpmath.mpf(self.vprime)
            g = vp * tau ** (-h) / (-h) - self.kernel * mpmath.log(tau)
            R, ph = self.dual(_XCUT * self.tau)
            for Ri, pi_ in zip(R, ph):
                Ri = mpmath.mpf(Ri)
                g += vp * pi_ * Ri ** (-h) * mpmath.gammainc(h, Ri / tau)
            lam, mult = self.eigen(_XCUT / self.tau)
            for li, ki in zip(lam, mult):
                g += ki * mpmath.e1(mpmath.mpf(li) * tau)
            return float(g + mpmath.euler * (-self.kernel))


class SumSpectrum(_Spectrum):
    """Disjoint union of spectra; zeta values add."""

    def __init__(self, parts: Sequence):
        self.parts = [p for p in parts if not p.is_empty()]

    def is_empty(self):
        return not self.parts

    def scaled(self, c):
        return SumSpectrum([p.scaled(c) for p in self.parts])


# ---------------------------------------------------------------------------
# evaluation


def _pick(spec, method):
    m = method or spec.default_method
    if m not in METHODS:
        raise ZetaError(f"unknown method {m!r}")
    if m == EXACT and not hasattr(spec, "exact_zeta"):
        raise ZetaError(f"{type(spec).__name__} has no exact identity")
    if m == DIRECT and not isinstance(spec, FiniteSpectrum):
        raise ZetaError("direct summation needs a finite spectrum")
    return m


def _quad(f, a, b):
    val, err = integrate.quad(f, a, b, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val, abs(err)


def _theta_gamma(spec, s):
    """Gamma(s) zeta(s) minus the pole part at s = 0, split at spec.tau.

    Returns (regular value, residue at the p = 0 term, error).
    For s != 0 the residue term a0 tau^s / s is already included.
    """
    tau = spec.tau
    val, err, a0 = 0.0, 0.0, 0.0
    for p, a in spec.heat_asymptotics():
        if p == 0.0:
            a0 = a
            if s == 0:
                val += a * math.log(tau)
            else:
                val += a * tau ** s / s
            continue
        if abs(s + p) < 1e-14:
            raise ZetaError(f"pole of the zeta function at s={-p}")
        val += a * tau ** (s + p) / (s + p)
    lo, e1 = _quad(lambda t: t ** (s - 1) * spec.heat_remainder(t), 0.0, tau)
    hi, e2 = _quad(lambda t: t ** (s - 1) * spec.heat_trace(t), tau, np.inf)
    val += lo + hi
    err += e1 + e2 + 1e-14 * (abs(lo) + abs(hi))
    return val, a0, err


def zeta_at(spec, s, method=None) -> ZetaResult:
    """Continued spectral zeta function at a real point s."""
    s = float(s)
    if isinstance(spec, SumSpectrum):
        rs = [zeta_at(p, s, method) for p in spec.parts]
        return ZetaResult(sum(r.value for r in rs), sum(r.error_bound for r in rs), s,
                          rs[0].method if rs else (method or DIRECT))
    if spec.is_empty():
        return ZetaResult(0.0, 0.0, s, method or DIRECT)
    m = _pick(spec, method)
    if m == DIRECT:
        v = float(np.dot(spec.mult, spec.lam ** (-s)))
        return ZetaResult(v, 4e-16 * abs(v) * spec.lam.size, s, m)
    if m == EXACT:
        v = float(spec.exact_zeta(s))
        return ZetaResult(v, 1e-13 * max(1.0, abs(v)), s, m)
    if s == 0:
        a0 = dict(spec.heat_asymptotics()).get(0.0, 0.0)
        return ZetaResult(a0, 0.0, s, m)
    if s == round(s) and s < 0:
        raise ZetaError("theta route implemented for non-integer s < 0 only")
    g, _, err = _theta_gamma(spec, s)
    gs = special.gamma(s)
    return ZetaResult(g / gs, err / abs(gs), s, m)


def zeta_prime_zero(spec, method=None) -> ZetaResult:
    if isinstance(spec, SumSpectrum):
        rs = [zeta_prime_zero(p, method) for p in spec.parts]
        return ZetaResult(sum(r.value for r in rs), sum(r.error_bound for r in rs), 0.0,
                          rs[0].method if rs else (method or DIRECT))
    if spec.is_empty():
        return ZetaResult(0.0, 0.0, 0.0, method or DIRECT)
    m = _pick(spec, method)
    if m == DIRECT:
        v = -float(np.dot(spec.mult, np.log(spec.lam)))
        return ZetaResult(v, 4e-16 * (abs(v) + spec.lam.size), 0.0, m)
    if m == EXACT:
        v = float(spec.exact_zeta_prime_zero())
        return ZetaResult(v, 1e-13 * max(1.0, abs(v)), 0.0, m)
    g, a0, err = _theta_gamma(spec, 0)
    return ZetaResult(g + np.euler_gamma * a0, err, 0.0, m)


def log_det(spec, method=None) -> ZetaResult:
    """-zeta'(0)."""
    r = zeta_prime_zero(spec, method)
    return ZetaResult(-r.value, r.error_bound, 0.0, r.method)


def xi_function(spec, s, method=None):
    """Gamma(s - 1/2) / (2 sqrt(pi) Gamma(s)) * zeta(s - 1/2)."""
    z = zeta_at(spec, s - 0.5, method).value
    return special.gamma(s - 0.5) / (2 * math.sqrt(math.pi) * special.gamma(s)) * z


def xi_prime_zero(spec, method=None) -> ZetaResult:
    """xi'(0), reduced to -zeta(-1/2) because 1/Gamma(s) = s + O(s^2)."""
    r = zeta_at(spec, -0.5, method)
    return ZetaResult(-r.value, r.error_bound, 0.0, r.method)


def xi_derivative_numeric(spec, method=None, h0=2e-2, levels=4):
    """Central differences of xi at 0 on a shrinking grid, Richardson in h^2."""
    hs = [h0 / 2 ** k for k in range(levels)]
    d = [(xi_function(spec, h, method) - xi_function(spec, -h, method)) / (2 * h) for h in hs]
    table = [d]
    for j in range(1, levels):
        prev = table[-1]
        table.append([(4 ** j * prev[i + 1] - prev[i]) / (4 ** j - 1) for i in range(len(prev) - 1)])
    best = table[-1][0]
    err = abs(best - table[-2][-1])
    return best, err


def heat_trace(spec, t):
    if isinstance(spec, SumSpectrum):
        return sum(heat_trace(p, t) for p in spec.parts)
    if spec.is_empty():
        return 0.0
    if t < spec.tau and not isinstance(spec, FiniteSpectrum):
        return sum(a * t ** p for p, a in spec.heat_asymptotics()) + spec.heat_remainder(t)
    return spec.heat_trace(t)


def accelerated_sum(spec, s, cap=None):
    """Direct summation for Re s > d/2 with an integral tail correction (lattice spectra)."""
    cap = cap or 4e4 * spec.scale
    lam, mult = spec.eigen(cap)
    head = float(np.dot(mult, lam ** (-s)))
    # Weyl density dN = vprime * (d/2) lam^{d/2-1} dlam / Gamma(d/2+1)
    h = spec.d / 2
    dens = spec.vprime / special.gamma(h)
    tail = dens * cap ** (h - s) / (s - h)
    return head + tail, abs(tail) * 0.05 + 1e-12


__all__ = [
    "ZetaResult", "SignedSpectrum", "ZetaError", "FiniteSpectrum", "SeriesSpectrum",
    "LatticeSpectrum", "SumSpectrum", "zeta_at", "zeta_prime_zero", "log_det",
    "xi_function", "xi_prime_zero", "xi_derivative_numeric", "eta_invariant",
    "heat_trace", "accelerated_sum", "DIRECT", "THETA", "EXACT",
]
