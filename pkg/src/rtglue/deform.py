"""Finite-rank model of the deformation from Pi_> to P_- on one boundary mode.

A boundary mode of B_Y^2 with eigenvalue mu^2 on a flat 2-torus carries the
forms {1, e1, e2, e12} with wave vector k = mu e1.  Even forms on the collar
restrict to (tangential even part, normal odd part), a 4-dimensional space
on which

    gamma = -i beta Gamma^Y (diagonal in tan/nor),
    A     = [[0, -1], [-1, 0]] (nabla^Y + Gamma^Y nabla^Y Gamma^Y),

and P_- projects onto Im nabla^Y in both slots.  Everything below is plain
linear algebra on this space (or a direct sum of copies).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, linalg, special

from . import zeta

TAN = (0, 3)  # 1, e12
NOR = (1, 2)  # e1, e2


class ModeBlockError(RuntimeError):
    pass


class CrossingError(RuntimeError):
    pass


def _exterior_r2(mu):
    """nabla^Y, Gamma^Y, beta on Lambda(R^2) in the basis (1, e1, e2, e12)."""
    nab = np.zeros((4, 4), complex)
    nab[1, 0] = 1j * mu       # 1  -> i mu e1
    nab[3, 2] = 1j * mu       # e2 -> i mu e1^e2
    star = np.zeros((4, 4))
    star[3, 0] = 1            # *1 = e12
    star[0, 3] = 1            # *e12 = 1
    star[2, 1] = 1            # *e1 = e2
    star[1, 2] = -1           # *e2 = -e1
    deg = np.array([0, 1, 1, 2])
    # i^{r-1} (-1)^{p(p+1)/2} *, r = 2, applied to a degree-p form
    phase = np.array([1j * (-1) ** (p * (p + 1) // 2) for p in deg])
    gam_y = star * phase[None, :]
    beta = np.diag((-1.0) ** deg)
    return nab, gam_y, beta


def _graph_unitary(P, Bp, Bm, tol=1e-12):
    """U with Im P = {x + U x : x in E_{+i}} as a 4x4 operator (zero on E_{-i})."""
    w, v = linalg.eigh(P)
    W = v[:, w > 0.5]
    X = Bp.conj().T @ W
    Y = Bm.conj().T @ W
    if W.shape[1] != Bp.shape[1] or abs(linalg.det(X)) < tol:
        raise ModeBlockError("subspace is not a graph over the +i eigenspace")
    return Bm @ (Y @ linalg.inv(X)) @ Bp.conj().T


def _proj(M):
    """Orthogonal projection onto the column span of M."""
    q, _ = linalg.qr(M, mode="economic")
    return q @ q.conj().T


@dataclass(frozen=True)
class ModeBlock:
    mu: float
    gamma: np.ndarray
    A: np.ndarray
    U_pi: np.ndarray
    U_p: np.ndarray
    Pi_pos: np.ndarray
    P_minus: np.ndarray
    Qp: np.ndarray          # projection onto the +i eigenspace of gamma
    Qm: np.ndarray
    B_Y2: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def P_star(self):
        return np.eye(self.dim)

    @property
    def abs_A(self):
        w, v = linalg.eigh(self.A)
        return (v * np.abs(w)) @ v.conj().T

    @property
    def sign_A(self):
        return self.U_pi + self.U_pi.conj().T

    def invariant_residuals(self):
        I = np.eye(self.dim)
        g, A, Ui, Up = self.gamma, self.A, self.U_pi, self.U_p
        ev = np.sort(linalg.eigvalsh(A))
        h = self.dim // 2
        target = np.r_[-self.mu * np.ones(h), self.mu * np.ones(h)]
        return {
            "gamma_unitary": _n(g.conj().T @ g - I),
            "gamma_square": _n(g @ g + I),
            "A_hermitian": _n(A - A.conj().T),
            "gamma_A_anticommute": _n(g @ A + A @ g),
            "A_spectrum": float(np.max(np.abs(ev - target))),
            "U_pi_unitary": _n(Ui.conj().T @ Ui - self.Qp),
            "U_p_unitary": _n(Up.conj().T @ Up - self.Qp),
            "U_pi_maps_to_minus": _n(self.Qm @ Ui @ self.Qp - Ui),
            "U_p_maps_to_minus": _n(self.Qm @ Up @ self.Qp - Up),
            "graph_Pi": _n(self.Pi_pos - 0.5 * (I + Ui + Ui.conj().T)),
            "graph_P": _n(self.P_minus - 0.5 * (I + Up + Up.conj().T)),
            "anticommute_1": _n(Ui.conj().T @ Up + Up.conj().T @ Ui),
            "anticommute_2": _n(Ui @ Up.conj().T + Up @ Ui.conj().T),
            "gamma_U_pi": _n(g @ Ui + Ui @ g),
            "gamma_U_p": _n(g @ Up + Up @ g),
        }


def _n(M):
    return float(np.linalg.norm(M, 2))


def build_block(mu, tol=1e-12) -> ModeBlock:
    if not mu > 0:
        raise ModeBlockError("mu must be positive")
    nab, gy, beta = _exterior_r2(mu)
    D = nab + gy @ nab @ gy
    t, n = list(TAN), list(NOR)
    gamma = np.zeros((4, 4), complex)
    g = -1j * beta @ gy
    gamma[:2, :2] = g[np.ix_(t, t)]
    gamma[2:, 2:] = g[np.ix_(n, n)]
    A = np.zeros((4, 4), complex)
    A[:2, 2:] = -D[np.ix_(t, n)]
    A[2:, :2] = -D[np.ix_(n, t)]
    # Im nabla^Y in each slot: e12 among tangential, e1 among normal forms
    img = nab @ nab.conj().T
    Pm = np.zeros((4, 4), complex)
    Pm[:2, :2] = _proj(img[np.ix_(t, t)][:, [1]])
    Pm[2:, 2:] = _proj(img[np.ix_(n, n)][:, [0]])
    w, v = linalg.eigh(1j * gamma)
    Bp, Bm = v[:, w < 0], v[:, w > 0]     # gamma v = i v  <=>  (i gamma) v = -v
    Qp, Qm = Bp @ Bp.conj().T, Bm @ Bm.conj().T
    wa, va = linalg.eigh(A)
    Pi = va[:, wa > 0] @ va[:, wa > 0].conj().T
    blk = ModeBlock(float(mu), gamma, A, _graph_unitary(Pi, Bp, Bm), _graph_unitary(Pm, Bp, Bm),
                    Pi, Pm, Qp, Qm, B_Y2=(D @ D))
    bad = {k: v for k, v in blk.invariant_residuals().items() if v > tol * max(1.0, mu)}
    if bad:
        raise ModeBlockError(f"mode block invariants violated: {bad}")
    return blk


# ---------------------------------------------------------------------------
# the path theta -> Ptilde(theta)

@dataclass(frozen=True)
class PathObjects:
    theta: float
    P: np.ndarray         # U_pi cos + U_p sin, E_{+i} -> E_{-i}
    Ptilde: np.ndarray
    T: np.ndarray
    U: np.ndarray


def _X(block):
    return block.U_p.conj().T @ block.U_pi


def path_objects(theta, block: ModeBlock) -> PathObjects:
    c, s = math.cos(theta), math.sin(theta)
    I = np.eye(block.dim)
    P = block.U_pi * c + block.U_p * s
    Pt = 0.5 * (I + P + P.conj().T)
    X = _X(block)
    T = -1j * theta * X
    U = c * block.Qp + s * X + block.Qm
    return PathObjects(float(theta), P, Pt, T, U)


def t_prime(block):
    return -1j * _X(block)


def w_block(theta, block):
    """[[0, W*], [-W, 0]] with W = -U_pi sin + U_p cos."""
    W = -block.U_pi * math.sin(theta) + block.U_p * math.cos(theta)
    return W.conj().T - W


def lemma_checks(block: ModeBlock, theta, t_grid=(0.1, 1.0, 10.0)) -> dict:
    """Residual norms of the projection-path identities at one theta."""
    po = path_objects(theta, block)
    I = np.eye(block.dim)
    Pt, T, U = po.Ptilde, po.T, po.U
    g, A, absA = block.gamma, block.A, block.abs_A
    Tp = t_prime(block)
    Pi, Pm = block.Pi_pos, block.P_minus
    c = math.cos(theta)
    out = {
        "Ptilde_idempotent": _n(Pt @ Pt - Pt),
        "Ptilde_hermitian": _n(Pt - Pt.conj().T),
        "Ptilde_expansion": _n(Pt - (Pi * c + Pm * math.sin(theta) + 0.5 * (1 - c - math.sin(theta)) * I)),
        "gamma_Ptilde": _n(g @ Pt - (I - Pt) @ g),
        "Ptilde_BY2": _n(Pt @ (A @ A) - (A @ A) @ Pt),
        "PAP": _n(Pt @ A @ Pt - c * absA @ Pt),
        "QAQ": _n((I - Pt) @ A @ (I - Pt) + c * absA @ (I - Pt)),
        "Pi_P_Pi": _n(Pi @ Pm @ Pi - 0.5 * Pi),
        "P_Pi_sum": _n(Pm @ Pi + Pi @ Pm - (Pm + Pi - 0.5 * I)),
        "U_conjugation": _n(U @ path_objects(0.0, block).Ptilde @ U.conj().T - Pt),
        "U_unitary": _n(U.conj().T @ U - I),
        "T_hermitian": _n(T - T.conj().T),
        "exp_iT": _n(linalg.expm(1j * T) - U),
        "gamma_T": _n(g @ T - T @ g),
        "BY2_T": _n((A @ A) @ T - T @ (A @ A)),
        "T_prime_Ptilde": _n(Tp @ Pt - (I - Pt) @ Tp + 0.5j * w_block(theta, block)),
        "sign_A": _n(block.sign_A - A @ linalg.inv(absA)),
    }
    for t in t_grid:
        out[f"trace_igammaT'_t={t}"] = abs(np.trace(1j * g @ Tp @ linalg.expm(-t * A @ A)))
    return out


def commutator_TA(block):
    """[T'(theta), A]; no identity is claimed for it."""
    Tp = t_prime(block)
    return Tp @ block.A - block.A @ Tp


# ---------------------------------------------------------------------------
# finite-rank eta functional

@dataclass(frozen=True)
class BlockSum:
    """Direct sum of mode blocks (for multi-eigenvalue trace tables)."""
    blocks: tuple

    @property
    def A(self):
        return linalg.block_diag(*[b.A for b in self.blocks])

    @property
    def gamma(self):
        return linalg.block_diag(*[b.gamma for b in self.blocks])

    def stack(self, f):
        return linalg.block_diag(*[f(b) for b in self.blocks])


def direct_sum(blocks):
    return BlockSum(tuple(blocks))


@dataclass(frozen=True)
class ResidueTable:
    levels: np.ndarray     # distinct eigenvalues of |A|
    d: np.ndarray          # trace of B on each eigenspace

    def eta(self, s):
        """sum_lambda d(lambda) lambda^{-s-1}."""
        return complex(np.sum(self.d * self.levels ** (-s - 1.0)))


def residue_analog(block, B, tol=1e-10) -> ResidueTable:
    A = block.A
    A2 = A @ A
    if _n(B @ A2 - A2 @ B) > tol * max(1.0, _n(B)) * max(1.0, _n(A2)):
        raise ValueError("B does not commute with A^2")
    w, v = linalg.eigh(A)
    a = np.abs(w)
    levels = []
    for x in np.sort(a):
        if x > tol and not any(abs(x - y) <= tol * max(1, y) for y in levels):
            levels.append(x)
    d = []
    for lv in levels:
        sel = np.abs(a - lv) <= tol * max(1, lv)
        E = v[:, sel]
        d.append(np.trace(E.conj().T @ B @ E))
    return ResidueTable(np.array(levels), np.array(d, dtype=complex))


def residue_pairing_operator(theta, block):
    """gamma [[0, W*], [-W, 0]] sign(A) Ptilde(theta)."""
    return block.gamma @ w_block(theta, block) @ block.sign_A @ path_objects(theta, block).Ptilde


# ---------------------------------------------------------------------------
# half-line heat kernel

def heat_kernel_halfline(theta, mu, t, x, y, block=None, method="closed"):
    """Kernel of exp(-t B^2) on [0, inf) x (one mode) under Ptilde(theta).

    The z-integral term reduces to
        -c mu erfcx(u) exp(-(x+y)^2/4t - t mu^2) (I - Ptilde),
    c = cos theta, u = (x + y + 2 c mu t) / (2 sqrt t).
    method="quad" integrates the z-integral numerically instead.
    """
    if not t > 0 or x < 0 or y < 0:
        raise ValueError("need t > 0 and x, y >= 0")
    blk = build_block(mu) if block is None else block
    Pt = path_objects(theta, blk).Ptilde
    I = np.eye(blk.dim)
    a = x + y
    c = math.cos(theta)
    g = math.exp(-t * mu * mu)
    K = (4 * math.pi * t) ** -0.5 * (math.exp(-(x - y) ** 2 / (4 * t)) * I
                                     + math.exp(-a * a / (4 * t)) * (I - 2 * Pt)) * g
    Q = I - Pt
    if method == "closed":
        u = (a + 2 * c * mu * t) / (2 * math.sqrt(t))
        K = K - c * mu * special.erfcx(u) * math.exp(-a * a / (4 * t)) * g * Q
    elif method == "quad":
        At = Q @ blk.A @ Q
        w, v = linalg.eigh(At)

        def term(z):
            return math.exp(-(a + z) ** 2 / (4 * t))

        M = np.zeros_like(I, dtype=complex)
        for lam, vec in zip(w, v.T):
            if abs(lam) < 1e-14:
                continue
            val, _ = integrate.quad(lambda z: term(z) * math.exp(lam * z), 0, np.inf,
                                    epsabs=0, epsrel=1e-12, limit=200)
            M += lam * val * np.outer(vec, vec.conj())
        K = K + (math.pi * t) ** -0.5 * Q @ M * g
    else:
        raise ValueError(f"unknown method {method!r}")
    return K


def heat_kernel_residuals(theta, mu, t, y, h=1e-4, block=None):
    """(boundary Ptilde K(0,y), boundary (I-Ptilde)(d_x + A)K(0,y), PDE residual at x = y,
    symmetry K(x,y)* - K(y,x)) as norms; derivatives by central differences."""
    blk = build_block(mu) if block is None else block
    Pt = path_objects(theta, blk).Ptilde
    I = np.eye(blk.dim)

    def K(x, yy, tt=t):
        return heat_kernel_halfline(theta, mu, tt, x, yy, blk)

    b1 = _n(Pt @ K(0.0, y))
    dx0 = (-3 * K(0.0, y) + 4 * K(h, y) - K(2 * h, y)) / (2 * h)
    b2 = _n((I - Pt) @ (dx0 + blk.A @ K(0.0, y)))
    x = y + 0.37
    kt = (K(x, y, t + h) - K(x, y, t - h)) / (2 * h)
    kxx = (K(x + h, y) - 2 * K(x, y) + K(x - h, y)) / (h * h)
    pde = _n(kt - kxx + mu * mu * K(x, y))
    sym = _n(K(x, y).conj().T - K(y, x))
    return {"boundary_P": b1, "boundary_Q": b2, "pde": pde, "symmetry": sym}


# ---------------------------------------------------------------------------
# F_theta and its Mellin transform

def f_theta(theta, x, method="closed"):
    """F(x) = x int_0^inf erfc(z) exp(-2 cos(theta) x z - x^2) dz."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    c = math.cos(theta)
    if method == "quad":
        val, _ = integrate.quad(lambda z: special.erfc(z) * math.exp(-2 * c * x * z),
                                0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
        return x * math.exp(-x * x) * val
    if x == 0:
        return 0.0
    if abs(c * x) < 1e-8:
        # 1 - erfcx(y) = 2y/sqrt(pi) - y^2 + O(y^3)
        y = c * x
        return math.exp(-x * x) * x * (1 / math.sqrt(math.pi) - y / 2)
    return math.exp(-x * x) * (1 - special.erfcx(c * x)) / (2 * c)


@dataclass(frozen=True)
class MellinResult:
    value: float
    error_bound: float


def mellin_f(theta, s, tol=1e-10) -> MellinResult:
    """MF(s) = int_0^inf x^{s-1} F(x) dx for Re s > -1 (real s here)."""
    if not s > -1:
        raise ValueError("Mellin transform needs s > -1")
    f = lambda x: x ** (s - 1) * f_theta(theta, x) if x > 0 else 0.0
    v1, e1 = integrate.quad(f, 0, 1, epsabs=tol, epsrel=tol, limit=400)
    v2, e2 = integrate.quad(f, 1, np.inf, epsabs=tol, epsrel=tol, limit=400)
    err = e1 + e2
    if not np.isfinite(v1 + v2) or err > 100 * tol * max(1, abs(v1 + v2)):
        raise RuntimeError("Mellin quadrature did not converge")
    return MellinResult(v1 + v2, err)


def mellin_coefficient(theta, tol=1e-10):
    """-1/2 + (2 cos(theta) / sqrt(pi)) MF(1)."""
    mf = mellin_f(theta, 1.0, tol)
    c = 2 * math.cos(theta) / math.sqrt(math.pi)
    return -0.5 + c * mf.value, abs(c) * mf.error_bound


# ---------------------------------------------------------------------------
# spectral flow

@dataclass
class HermitianPath:
    func: Callable[[float], np.ndarray]
    start: float = 0.0
    end: float = 1.0
    tol: float = 1e-9

    @classmethod
    def linear(cls, H0, H1, tol=1e-9):
        H0, H1 = np.asarray(H0), np.asarray(H1)
        return cls(lambda s: (1 - s) * H0 + s * H1, 0.0, 1.0, tol)

    def __call__(self, s):
        return self.func(s)

    def eig(self, s):
        return linalg.eigvalsh(self.func(s))


@dataclass(frozen=True)
class Crossing:
    at: float
    direction: int    # +1 upward (negative to nonnegative)


def _neg(ev, tol):
    return int(np.sum(ev < -tol))


def track_crossings(path: HermitianPath, n=200, max_depth=40):
    """Locate zero crossings of the sorted eigenvalue branches.

    Samples with an eigenvalue inside the tolerance band are nudged; an
    interval with several changes is bisected until each change is isolated.
    """
    tol = path.tol
    grid = np.linspace(path.start, path.end, n + 1)
    h = (path.end - path.start) / n

    def safe(s, interior):
        if not interior:
            return s, path.eig(s)
        ev = path.eig(s)
        k = 0
        while np.min(np.abs(ev)) < tol:
            k += 1
            if k > 30:
                raise CrossingError(f"eigenvalue stuck at zero near {s}")
            s = s + h * 2.0 ** (-k - 2) * (-1) ** k
            ev = path.eig(s)
        return s, ev

    pts = [safe(s, 0 < i < n) for i, s in enumerate(grid)]
    out = []

    def resolve(a, ea, b, eb, depth):
        na, nb = _neg(ea, tol), _neg(eb, tol)
        if na == nb and np.array_equal(np.sign(ea), np.sign(eb)):
            return
        if depth >= max_depth:
            raise CrossingError(f"non-transversal crossing near {0.5 * (a + b)}")
        if abs(na - nb) == 1 and np.sum(np.sign(ea) != np.sign(eb)) == 1:
            out.append(Crossing(0.5 * (a + b), na - nb))
            return
        m, em = safe(0.5 * (a + b), True)
        resolve(a, ea, m, em, depth + 1)
        resolve(m, em, b, eb, depth + 1)

    for (a, ea), (b, eb) in zip(pts[:-1], pts[1:]):
        resolve(a, ea, b, eb, 0)
    return out


def spectral_flow(path: HermitianPath, n=200) -> int:
    """m^+ - m^-: net count of eigenvalues moving from negative to nonnegative."""
    return sum(c.direction for c in track_crossings(path, n))


def eta_matrix(H, tol=1e-9):
    return zeta.eta_invariant(zeta.SignedSpectrum.from_values(linalg.eigvalsh(H), atol=tol))


@dataclass(frozen=True)
class SfEtaReport:
    sf: int
    eta_start: float
    eta_end: float

    @property
    def eta_difference(self):
        return self.eta_end - self.eta_start

    @property
    def match(self):
        return self.eta_difference == self.sf


def sf_eta_check(path: HermitianPath, n=200) -> SfEtaReport:
    sf = spectral_flow(path, n)
    return SfEtaReport(sf, eta_matrix(path(path.start), path.tol), eta_matrix(path(path.end), path.tol))


__all__ = [
    "ModeBlock", "ModeBlockError", "build_block", "PathObjects", "path_objects", "t_prime",
    "w_block", "lemma_checks", "commutator_TA", "BlockSum", "direct_sum", "ResidueTable",
    "residue_analog", "residue_pairing_operator", "heat_kernel_halfline", "heat_kernel_residuals", "f_theta",
    "mellin_f", "MellinResult", "mellin_coefficient", "HermitianPath", "Crossing",
    "track_crossings", "spectral_flow", "eta_matrix", "SfEtaReport", "sf_eta_check", "CrossingError",
]
