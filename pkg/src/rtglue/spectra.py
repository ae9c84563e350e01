"""Boundary spectral data: twisted flat tori and plain-text spectrum files.

A :class:`BoundarySpectrum` lists, per form degree q of the boundary, the
positive eigenvalues of the boundary Laplacian split into the two sectors

* ``plus``  (coexact type, written S_q below)
* ``minus`` (exact type)

together with the kernel dimensions ``l_q = l_q^+ + l_q^-``.

Torus convention: Y = R^2 / (L1 Z x L2 Z) with a flat unitary twist
(alpha, beta); the scalar eigenvalues are
``4 pi^2 ((j + alpha)^2 / L1^2 + (k + beta)^2 / L2^2)`` and every scalar
eigenvalue carries form multiplicities (1, 2, 1) in degrees (0, 1, 2).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import zeta

PLUS, MINUS = 1, -1
_SECTOR_NAME = {PLUS: "plus", MINUS: "minus"}
_SECTOR_CODE = {"plus": PLUS, "minus": MINUS}

# per scalar lattice eigenvalue, sector multiplicity in degree q = 0, 1, 2
TORUS_PLUS = (1, 1, 0)
TORUS_MINUS = (0, 1, 1)


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class TorusModel:
    L1: float
    L2: float
    alpha: float
    beta: float

    @property
    def area(self):
        return self.L1 * self.L2

    @property
    def twisted(self):
        return (self.alpha % 1.0, self.beta % 1.0) != (0.0, 0.0)

    def lattice(self, mult=1, scale=1.0):
        return zeta.LatticeSpectrum([self.L1, self.L2], [self.alpha, self.beta], mult, scale)

    def count_bound(self, lam):
        """Upper bound on the number of scalar lattice points with eigenvalue <= lam."""
        rho = np.sqrt(np.maximum(lam, 0.0)) / (2 * math.pi)
        delta = 0.5 * math.hypot(1 / self.L1, 1 / self.L2)
        return math.pi * (rho + delta) ** 2 * self.area

    def describe(self):
        return (f"flat torus L1={self.L1!r} L2={self.L2!r} twist=({self.alpha!r},{self.beta!r}); "
                "eigenvalues 4*pi^2*((j+alpha)^2/L1^2+(k+beta)^2/L2^2), form multiplicities (1,2,1)")


@dataclass(frozen=True, eq=False)
class BoundarySpectrum:
    m: int
    q: np.ndarray
    lam: np.ndarray
    mult: np.ndarray
    sector: np.ndarray
    l_plus: tuple
    l_minus: tuple
    cutoff: float = math.inf
    model: TorusModel | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        _validate(self)

    # -- kernel bookkeeping
    @property
    def dim_y(self):
        return self.m - 1

    @property
    def r_half(self):
        return (self.m + 1) // 2

    def lp(self, q):
        return self.l_plus[q] if 0 <= q < self.m else 0

    def lm(self, q):
        return self.l_minus[q] if 0 <= q < self.m else 0

    def l(self, q):
        return self.lp(q) + self.lm(q)

    @property
    def l_q(self):
        return tuple(a + b for a, b in zip(self.l_plus, self.l_minus))

    @property
    def acyclic(self):
        return all(v == 0 for v in self.l_q)

    @property
    def euler_char(self):
        return sum((-1) ** q * self.l(q) for q in range(self.m))

    # -- modes
    def __len__(self):
        return int(self.mult.sum())

    @property
    def n_modes(self):
        return int(self.mult.sum())

    def modes(self, q, sector=None):
        sel = self.q == q
        if sector is not None:
            sel &= self.sector == sector
        lam, mult = self.lam[sel], self.mult[sel]
        if sector is None and lam.size:
            u, inv = np.unique(lam, return_inverse=True)
            mult = np.bincount(inv, weights=mult)
            lam = u
        return lam, mult

    def plus(self, q):
        return self.modes(q, PLUS)

    def full(self, q):
        return self.modes(q)

    def has_plus(self, q):
        if not 0 <= q < self.m:
            return False
        if self.model is not None:
            return TORUS_PLUS[q] > 0
        return bool(np.any((self.q == q) & (self.sector == PLUS)))

    def hodge_consistent(self, rtol=1e-12):
        """minus sector of degree q equals S_{q-1}, and S_q equals S_{m-2-q}."""
        def same(a, b):
            (la, ka), (lb, kb) = a, b
            return la.size == lb.size and np.allclose(la, lb, rtol=rtol, atol=0) and np.array_equal(ka, kb)
        for q in range(self.m):
            if not same(self.modes(q, MINUS), self.plus(q - 1) if q >= 1 else (np.zeros(0), np.zeros(0, int))):
                return False
            d = self.m - 2 - q
            other = self.plus(d) if d >= 0 else (np.zeros(0), np.zeros(0, int))
            if not same(self.plus(q), other):
                return False
        return True

    @property
    def lam_min(self):
        return float(self.lam.min()) if self.lam.size else math.inf

    # -- zeta engine views (untruncated whenever a model is attached)
    def zeta_plus(self, q):
        if not 0 <= q < self.m:
            return zeta.FiniteSpectrum([])
        if self.model is not None:
            return self.model.lattice(TORUS_PLUS[q])
        return zeta.FiniteSpectrum(*self.plus(q))

    def zeta_full(self, q):
        if not 0 <= q < self.m:
            return zeta.FiniteSpectrum([])
        if self.model is not None:
            return self.model.lattice(TORUS_PLUS[q] + TORUS_MINUS[q])
        return zeta.FiniteSpectrum(*self.full(q))

    def _key(self, *args):
        return args

    def logdet_plus(self, q, method=zeta.EXACT):
        k = ("ldp", q, method)
        if k not in self._cache:
            sp = self.zeta_plus(q)
            self._cache[k] = zeta.log_det(sp, _method(sp, method))
        return self._cache[k]

    def logdet_full(self, q, method=zeta.EXACT):
        k = ("ldf", q, method)
        if k not in self._cache:
            sp = self.zeta_full(q)
            self._cache[k] = zeta.log_det(sp, _method(sp, method))
        return self._cache[k]

    def zeta0_full(self, q):
        return zeta.zeta_at(self.zeta_full(q), 0.0).value

    def zeta0_plus(self, q):
        return zeta.zeta_at(self.zeta_plus(q), 0.0).value

    def zeta_half_plus(self, q, method=zeta.EXACT):
        """zeta of S_q at s = -1/2."""
        k = ("zh", q, method)
        if k not in self._cache:
            sp = self.zeta_plus(q)
            self._cache[k] = zeta.zeta_at(sp, -0.5, _method(sp, method))
        return self._cache[k]

    # -- truncation tails
    def tail_sum(self, f, df_neg, q=None, sector=None):
        """Bound on sum over discarded eigenvalues (> cutoff) of mult*f(lam).

        f must be positive and decreasing; df_neg = -f'.  Zero for file spectra
        (nothing was discarded) or an infinite cutoff.
        """
        if self.model is None or not math.isfinite(self.cutoff):
            return 0.0
        if q is None:
            weight = 4
        elif sector is None:
            weight = TORUS_PLUS[q] + TORUS_MINUS[q] if 0 <= q < self.m else 0
        else:
            weight = (TORUS_PLUS if sector == PLUS else TORUS_MINUS)[q] if 0 <= q < self.m else 0
        if weight == 0:
            return 0.0
        lo = self.cutoff
        val, _ = integrate.quad(lambda x: df_neg(x) * self.model.count_bound(x), lo, np.inf,
                                epsabs=0, epsrel=1e-6, limit=200)
        return weight * val

    @property
    def tail_bound(self):
        """Gaussian heat-sum estimate of sum_{lam > cutoff} mult e^{-lam}."""
        return self.tail_sum(lambda x: math.exp(-x), lambda x: math.exp(-x))

    def exp_tail(self, rate, q=None, sector=None):
        """Bound on sum_{lam > cutoff} mult e^{-rate sqrt(lam)}."""
        if rate <= 0:
            return math.inf
        return self.tail_sum(lambda x: math.exp(-rate * math.sqrt(x)),
                             lambda x: rate * math.exp(-rate * math.sqrt(x)) / (2 * math.sqrt(x)),
                             q, sector)

    # -- misc
    def same_structure(self, other):
        return (self.m == other.m and self.l_plus == other.l_plus and self.l_minus == other.l_minus
                and self.model == other.model and self.cutoff == other.cutoff
                and np.array_equal(self.q, other.q) and np.array_equal(self.lam, other.lam)
                and np.array_equal(self.mult, other.mult) and np.array_equal(self.sector, other.sector))

    def metadata(self):
        md = {"m": self.m, "modes": self.n_modes, "cutoff": self.cutoff,
              "l_plus": list(self.l_plus), "l_minus": list(self.l_minus)}
        if self.model is not None:
            md["model"] = self.model.describe()
        else:
            md["model"] = "finite spectrum from file"
        return md


def _method(sp, method):
    if isinstance(sp, zeta.FiniteSpectrum):
        return zeta.DIRECT
    return method


def _validate(s: BoundarySpectrum):
    if s.m < 1 or s.m % 2 == 0:
        raise SpectrumError("m must be an odd positive integer")
    n = s.lam.size
    if not (s.q.size == s.mult.size == s.sector.size == n):
        raise SpectrumError("mode arrays must have equal length")
    if n and np.any(s.lam <= 0):
        raise SpectrumError("eigenvalue must be positive")
    if n and np.any(s.mult <= 0):
        raise SpectrumError("multiplicity must be a positive integer")
    if n and (np.any(s.q < 0) or np.any(s.q > s.m - 1)):
        raise SpectrumError(f"degree out of range 0..{s.m - 1}")
    if n and not np.all(np.isin(s.sector, (PLUS, MINUS))):
        raise SpectrumError("sector must be plus or minus")
    if n > 1:
        key = np.lexsort((s.lam, s.q))
        if not np.array_equal(key, np.arange(n)):
            raise SpectrumError("modes must be sorted by (q, lambda)")
    if len(s.l_plus) != s.m or len(s.l_minus) != s.m:
        raise SpectrumError("kernel data needs one (plus, minus) pair per degree 0..m-1")
    if any(v < 0 for v in s.l_plus + s.l_minus):
        raise SpectrumError("kernel dimensions must be non-negative")
    for q in range(s.m):
        if s.l_minus[q] != s.l_plus[s.m - 1 - q]:
            raise SpectrumError(f"l_q^- != l_{{m-1-q}}^+ at q={q}")


def _build(m, rows, l_plus, l_minus, cutoff=math.inf, model=None):
    rows = sorted(rows, key=lambda t: (t[0], t[1], -t[3]))
    if rows:
        q, lam, mult, sec = (np.array(c) for c in zip(*rows))
    else:
        q, lam, mult, sec = (np.zeros(0, int), np.zeros(0), np.zeros(0, int), np.zeros(0, int))
    return BoundarySpectrum(int(m), q.astype(int), lam.astype(float), mult.astype(int),
                            sec.astype(int), tuple(int(v) for v in l_plus),
                            tuple(int(v) for v in l_minus), float(cutoff), model)


def lattice_eigenvalues(L1, L2, alpha, beta, cutoff):
    """Distinct scalar eigenvalues <= cutoff and their lattice counts (zero excluded)."""
    sp = zeta.LatticeSpectrum([L1, L2], [alpha, beta])
    lam, _ = sp.eigen(cutoff)
    if lam.size == 0:
        return lam, np.zeros(0, int)
    # group numerically equal values (exact arithmetic ties differ only by rounding)
    u, c = [], []
    for x in lam:
        if u and abs(x - u[-1]) <= 1e-12 * x:
            c[-1] += 1
        else:
            u.append(x)
            c.append(1)
    return np.array(u), np.array(c)


def twisted_torus_spectrum(L1=1.0, L2=1.0, alpha=0.5, beta=0.5, cutoff=10 * 4 * math.pi ** 2,
                           acyclic=True) -> BoundarySpectrum:
    if L1 <= 0 or L2 <= 0:
        raise SpectrumError("torus side lengths must be positive")
    if not (0 <= alpha < 1 and 0 <= beta < 1):
        raise SpectrumError("twist parameters must lie in [0, 1)")
    model = TorusModel(float(L1), float(L2), float(alpha), float(beta))
    if acyclic and not model.twisted:
        raise SpectrumError("untwisted torus has harmonic forms; it cannot be acyclic")
    lam, cnt = lattice_eigenvalues(L1, L2, alpha, beta, cutoff)
    if lam.size == 0:
        raise SpectrumError("cutoff lies below the first eigenvalue")
    rows = []
    for x, c in zip(lam, cnt):
        for q in range(3):
            if TORUS_PLUS[q]:
                rows.append((q, x, c * TORUS_PLUS[q], PLUS))
            if TORUS_MINUS[q]:
                rows.append((q, x, c * TORUS_MINUS[q], MINUS))
    if model.twisted:
        lp, lm = (0, 0, 0), (0, 0, 0)
    else:
        lp, lm = TORUS_PLUS, TORUS_MINUS
    return _build(3, rows, lp, lm, cutoff, model)


def from_modes(m, modes, l_plus=None, l_minus=None) -> BoundarySpectrum:
    """Finite spectrum from (q, lambda, mult[, sector]) tuples."""
    rows = []
    for t in modes:
        q, lam, mult = t[:3]
        sec = t[3] if len(t) > 3 else PLUS
        sec = _SECTOR_CODE.get(sec, sec)
        rows.append((int(q), float(lam), int(mult), int(sec)))
    l_plus = l_plus if l_plus is not None else (0,) * m
    l_minus = l_minus if l_minus is not None else (0,) * m
    return _build(m, rows, l_plus, l_minus)


def truncate(spec: BoundarySpectrum, Lambda: float) -> BoundarySpectrum:
    if not Lambda > 0:
        raise SpectrumError("Lambda must be positive")
    if math.isinf(Lambda):
        return spec
    sel = spec.lam <= Lambda
    cutoff = min(spec.cutoff, Lambda) if spec.model is not None else spec.cutoff
    return BoundarySpectrum(spec.m, spec.q[sel], spec.lam[sel], spec.mult[sel], spec.sector[sel],
                            spec.l_plus, spec.l_minus, cutoff, spec.model)


# ---------------------------------------------------------------------------
# text format


def save_spectrum(spec: BoundarySpectrum, path):
    lines = ["# boundary spectrum", f"m={spec.m}"]
    for q in range(spec.m):
        lines.append(f"l{q}={spec.l_plus[q]},{spec.l_minus[q]}")
    if math.isfinite(spec.cutoff):
        lines.append(f"cutoff={spec.cutoff!r}")
    if spec.model is not None:
        t = spec.model
        lines.append(f"torus={t.L1!r},{t.L2!r},{t.alpha!r},{t.beta!r}")
    for q, lam, k, s in zip(spec.q, spec.lam, spec.mult, spec.sector):
        lines.append(f"q={int(q)} lambda={float(lam)!r} mult={int(k)} sector={_SECTOR_NAME[int(s)]}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_spectrum(path) -> BoundarySpectrum:
    if not os.path.exists(path):
        raise SpectrumError(f"{path}: no such file")
    m, lpairs, cutoff, model, rows = None, {}, math.inf, None, []
    with open(path) as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                fields = dict(tok.split("=", 1) for tok in line.split())
            except ValueError:
                raise SpectrumError(f"{path}:{no}: expected key=value tokens") from None
            try:
                if "q" in fields:
                    extra = set(fields) - {"q", "lambda", "mult", "sector"}
                    if extra or "lambda" not in fields or "mult" not in fields:
                        raise SpectrumError(f"{path}:{no}: mode line needs q, lambda, mult[, sector]")
                    lam = float(fields["lambda"])
                    if not lam > 0:
                        raise SpectrumError(f"{path}:{no}: eigenvalue must be positive")
                    k = int(fields["mult"])
                    if k <= 0:
                        raise SpectrumError(f"{path}:{no}: multiplicity must be a positive integer")
                    sec = fields.get("sector", "plus")
                    if sec not in _SECTOR_CODE:
                        raise SpectrumError(f"{path}:{no}: sector must be plus or minus")
                    rows.append((int(fields["q"]), lam, k, _SECTOR_CODE[sec]))
                    continue
                if len(fields) != 1:
                    raise SpectrumError(f"{path}:{no}: one header key per line")
                (key, val), = fields.items()
                if key == "m":
                    m = int(val)
                elif key == "cutoff":
                    cutoff = float(val)
                elif key == "torus":
                    L1, L2, a, b = (float(v) for v in val.split(","))
                    model = TorusModel(L1, L2, a, b)
                elif key.startswith("l") and key[1:].isdigit():
                    p, n = val.split(",")
                    lpairs[int(key[1:])] = (int(p), int(n))
                else:
                    raise SpectrumError(f"{path}:{no}: unknown header key {key!r}")
            except SpectrumError:
                raise
            except ValueError as exc:
                raise SpectrumError(f"{path}:{no}: {exc}") from None
    if m is None:
        raise SpectrumError(f"{path}: missing header m=<int>")
    lp = tuple(lpairs.get(q, (0, 0))[0] for q in range(m))
    lm = tuple(lpairs.get(q, (0, 0))[1] for q in range(m))
    if any(q >= m for q in lpairs):
        raise SpectrumError(f"{path}: kernel entry for degree >= m")
    if model is not None and m != 3:
        raise SpectrumError(f"{path}: torus model requires m=3")
    return _build(m, rows, lp, lm, cutoff, model)


__all__ = [
    "BoundarySpectrum", "TorusModel", "SpectrumError", "PLUS", "MINUS",
    "twisted_torus_spectrum", "from_modes", "truncate", "save_spectrum", "load_spectrum",
    "lattice_eigenvalues",
]
