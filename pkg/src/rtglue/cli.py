"""rtglue command line.

Every table command writes rows with the columns
(quantity, lhs, rhs, residual, error_bound, r, q, bc) and exits with status
1 when some |residual| exceeds its error_bound.  Configuration errors exit
with status 2.  A config file holds ``key = value`` lines with the same keys
as the long flags; flags given on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import mpmath
import numpy as np
import scipy

from . import __version__
from . import cylinder, deform, dtn, spectra, torsion

EXIT_OK, EXIT_RESIDUAL, EXIT_CONFIG = 0, 1, 2
COLUMNS = ("quantity", "lhs", "rhs", "residual", "error_bound", "r", "q", "bc")
DEFAULT_CUTOFF = 10 * 4 * math.pi ** 2
THREADS_ENV = "RTGLUE_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    torus: tuple | None = None
    spectrum: str | None = None
    cutoff: float = DEFAULT_CUTOFF
    tol: float = 1e-6
    r: tuple = (1.0,)
    L: tuple = (1.0,)
    bc: tuple = ("rel",)
    q: tuple | None = None
    theta0: float | None = None
    paths: int = 100
    dim: int = 6
    seed: int = 0
    format: str = "json"
    out: str | None = None
    threads: int = 1

    def validate(self):
        if self.command == "spectrum":
            if self.spectrum is not None:
                raise ConfigError("spectrum: --spectrum is an input; use --torus to generate and --out to save")
            if self.torus is None:
                raise ConfigError("spectrum: no source given; pass --torus L1,L2,alpha,beta")
            if not self.out:
                raise ConfigError("spectrum: --out FILE is required")
        elif self.command != "flow":
            if self.torus is not None and self.spectrum is not None:
                raise ConfigError("give either --torus or --spectrum, not both")
            if self.torus is None and self.spectrum is None:
                raise ConfigError("no spectrum source; pass --torus L1,L2,alpha,beta or --spectrum FILE")
        if not self.tol > 0:
            raise ConfigError("--tol must be positive")
        if not self.cutoff > 0:
            raise ConfigError("--cutoff must be positive")
        if not self.r or not self.L or not self.bc:
            raise ConfigError("grids must be non-empty")
        if any(not x > 0 for x in self.r + self.L):
            raise ConfigError("--r and --L values must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError("--format must be csv or json")
        if self.paths < 1 or self.dim < 1:
            raise ConfigError("--paths and --dim must be positive")
        if self.threads < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer")
        return self


# ---------------------------------------------------------------------------
# parsing

def parse_grid(text):
    """'a', 'a,b,c' or 'start:stop:step' (stop inclusive)."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(x) for x in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
                raise ValueError
            a, b, h = parts
            n = int(math.floor((b - a) / h + 1e-9))
            return tuple(round(a + i * h, 12) for i in range(n + 1))
        vals = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; use a, a,b,c or start:stop:step") from None
    if not vals:
        raise ConfigError("grids must be non-empty")
    return vals


def parse_torus(text):
    try:
        vals = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise ConfigError(f"bad --torus {text!r}; expected L1,L2,alpha,beta") from None
    if len(vals) != 4:
        raise ConfigError(f"bad --torus {text!r}; expected L1,L2,alpha,beta")
    return vals


def read_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"{path}: config file not found")
    out = {}
    with open(path) as fh:
        for no, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{no}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


_KEYS = ("torus", "spectrum", "cutoff", "tol", "r", "L", "bc", "q", "theta0", "paths", "dim",
         "seed", "format", "out")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with defaults for these flags")
    common.add_argument("--torus", help="twisted torus L1,L2,alpha,beta")
    common.add_argument("--spectrum", help="spectrum file written by the spectrum command")
    common.add_argument("--cutoff", help=f"eigenvalue cutoff (default {DEFAULT_CUTOFF:.6g})")
    common.add_argument("--tol", help="absolute tolerance added to every bound (default 1e-6)")
    common.add_argument("--r", help="collar lengths: a | a,b | start:stop:step")
    common.add_argument("--L", help="far cylinder lengths, same grid syntax")
    common.add_argument("--bc", help="comma separated boundary conditions")
    common.add_argument("--q", help="comma separated degrees (default all)")
    common.add_argument("--theta0", help="circle twist for closed-model rows")
    common.add_argument("--paths", help="number of random paths (flow)")
    common.add_argument("--dim", help="matrix size of random paths (flow)")
    common.add_argument("--seed", help="random seed (flow)")
    common.add_argument("--format", help="csv or json")
    common.add_argument("--out", help="output file (default stdout)")

    p = argparse.ArgumentParser(prog="rtglue", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rtglue {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", parents=[common], help="generate and save a torus spectrum")
    sub.add_parser("det", parents=[common], help="closed form against mode oracle")
    sub.add_parser("glue", parents=[common], help="gluing identity across a cut")
    sub.add_parser("adiabatic", parents=[common], help="long collar limits")
    sub.add_parser("flow", parents=[common], help="spectral flow against eta differences")
    sub.add_parser("torsion", parents=[common], help="determinant equalities and torsion gluing")
    return p


def make_config(ns) -> RunConfig:
    vals = {}
    if ns.config:
        vals.update(read_config(ns.config))
        unknown = set(vals) - set(_KEYS)
        if unknown:
            raise ConfigError(f"{ns.config}: unknown keys {sorted(unknown)}")
    for k in _KEYS:
        v = getattr(ns, k)
        if v is not None:
            vals[k] = v
    cfg = RunConfig(ns.command)
    try:
        if "torus" in vals:
            cfg.torus = parse_torus(vals["torus"])
        cfg.spectrum = vals.get("spectrum")
        if "cutoff" in vals:
            cfg.cutoff = float(vals["cutoff"])
        if "tol" in vals:
            cfg.tol = float(vals["tol"])
        if "theta0" in vals:
            cfg.theta0 = float(vals["theta0"])
        for k in ("paths", "dim", "seed"):
            if k in vals:
                setattr(cfg, k, int(vals[k]))
    except ValueError as e:
        raise ConfigError(f"bad numeric value: {e}") from None
    if "r" in vals:
        cfg.r = parse_grid(vals["r"])
    if "L" in vals:
        cfg.L = parse_grid(vals["L"])
    if "bc" in vals:
        cfg.bc = tuple(s.strip() for s in vals["bc"].split(",") if s.strip())
    if "q" in vals:
        try:
            cfg.q = tuple(int(s) for s in vals["q"].split(","))
        except ValueError:
            raise ConfigError(f"bad --q {vals['q']!r}") from None
    cfg.format = vals.get("format", cfg.format)
    cfg.out = vals.get("out")
    t = os.environ.get(THREADS_ENV, "1")
    try:
        cfg.threads = int(t)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={t!r} is not an integer") from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# tables

@dataclass(frozen=True)
class Row:
    quantity: str
    lhs: float
    rhs: float
    residual: float
    error_bound: float
    r: float | None = None
    q: int | None = None
    bc: str | None = None

    @property
    def ok(self):
        return abs(self.residual) <= self.error_bound

    def values(self):
        return tuple(getattr(self, c) for c in COLUMNS)


def row(quantity, lhs, rhs, bound, r=None, q=None, bc=None, residual=None):
    lhs, rhs = float(lhs), float(rhs)
    res = lhs - rhs if residual is None else float(residual)
    return Row(quantity, lhs, rhs, res, float(bound), None if r is None else float(r), q, bc)


def _num(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def render(rows, metadata, fmt):
    if fmt == "json":
        body = {"metadata": metadata,
                "columns": list(COLUMNS),
                "rows": [dict(zip(COLUMNS, (_num(v) for v in r.values()))) for r in rows]}
        return json.dumps(body, sort_keys=True, indent=1, allow_nan=False) + "\n"
    buf = io.StringIO()
    for k in sorted(metadata):
        buf.write(f"# {k}: {json.dumps(metadata[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r.values()])
    return buf.getvalue()


def run_metadata(cfg: RunConfig, sp=None):
    md = {"command": cfg.command, "tol": cfg.tol, "cutoff": cfg.cutoff,
          "versions": {"rtglue": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                       "mpmath": mpmath.__version__, "python": platform.python_version()}}
    if sp is not None:
        md["spectrum"] = {k: _num(v) for k, v in sp.metadata().items()}
        md["tail_bound"] = sp.tail_bound
    if cfg.spectrum:
        md["spectrum_file"] = cfg.spectrum
    return md


def load_source(cfg: RunConfig):
    try:
        if cfg.spectrum is not None:
            return spectra.load_spectrum(cfg.spectrum)
        L1, L2, a, b = cfg.torus
        return spectra.twisted_torus_spectrum(L1, L2, a, b, cfg.cutoff, acyclic=(a, b) != (0.0, 0.0))
    except spectra.SpectrumError as e:
        raise ConfigError(f"spectra: {e}") from None


def _map(cfg, f, items):
    items = list(items)
    if cfg.threads == 1:
        return [f(x) for x in items]
    with ThreadPoolExecutor(cfg.threads) as ex:
        return list(ex.map(f, items))


def _degrees(cfg, sp):
    qs = cfg.q if cfg.q is not None else tuple(range(sp.m + 1))
    bad = [q for q in qs if not 0 <= q <= sp.m]
    if bad:
        raise ConfigError(f"degrees {bad} out of range 0..{sp.m}")
    return qs


def _check_bcs(bcs, allowed):
    bad = [b for b in bcs if b not in allowed]
    if bad:
        raise ConfigError(f"unknown boundary conditions {bad}; choose from {list(allowed)}")


# ---------------------------------------------------------------------------
# commands

def brute_force_count(L1, L2, alpha, beta, cutoff):
    """Number of lattice points with eigenvalue <= cutoff, by plain enumeration."""
    c = cutoff / (4 * math.pi ** 2)
    jmax = int(math.ceil(L1 * math.sqrt(c))) + 1
    kmax = int(math.ceil(L2 * math.sqrt(c))) + 1
    j = np.arange(-jmax - 1, jmax + 1) + alpha
    k = np.arange(-kmax - 1, kmax + 1) + beta
    lam = (j[:, None] / L1) ** 2 + (k[None, :] / L2) ** 2
    lam = lam[lam > 0]
    return int(np.count_nonzero(lam <= c))


def cmd_spectrum(cfg: RunConfig):
    sp = load_source(cfg)
    spectra.save_spectrum(sp, cfg.out)
    lam, mult = sp.modes(0, spectra.PLUS)
    n = int(np.sum(mult))
    bf = brute_force_count(*cfg.torus, cfg.cutoff)
    rows = [row("scalar_mode_count", n, bf, 0.0)]
    md = run_metadata(cfg, sp)
    md["spectrum_file"] = cfg.out
    return rows, md


def cmd_det(cfg: RunConfig):
    sp = load_source(cfg)
    _check_bcs(cfg.bc, cylinder.BCS)

    def one(job):
        q, r, bc = job
        p = cylinder.CylinderProblem(q, r, bc, sp)
        a = cylinder.logdet_closed_form(p)
        b = cylinder.logdet_mode_oracle(p)
        return row("logdet_closed_vs_oracle", a.value, b.value, a.error_bound + b.error_bound + cfg.tol, r, q, bc)

    jobs = [(q, r, bc) for bc in cfg.bc for r in cfg.r for q in _degrees(cfg, sp)]
    md = run_metadata(cfg, sp)
    md["note"] = cylinder.EMPTY_SECTOR_NOTE
    return _map(cfg, one, jobs), md


def cmd_glue(cfg: RunConfig):
    sp = load_source(cfg)
    _check_bcs(cfg.bc, cylinder.BCS)

    def one(job):
        q, r, L, bc = job
        rep = dtn.bfk_check(q, r, L, bc, sp)
        return row(f"bfk_L={L!r}", rep.lhs, rep.rhs, rep.error_bound + cfg.tol, r, q, bc)

    jobs = [(q, r, L, bc) for bc in cfg.bc for r in cfg.r for L in cfg.L for q in _degrees(cfg, sp)]
    rows = _map(cfg, one, jobs)
    if cfg.theta0 is not None:
        if not sp.acyclic:
            raise ConfigError("dtn: closed circle rows need an acyclic boundary")

        def circ(job):
            q, r, L = job
            rep = dtn.closed_circle_check(q, r + L, cfg.theta0, sp, r=r)
            return row(f"closed_circle_L={L!r}", rep.lhs, rep.rhs, rep.error_bound + cfg.tol, r, q, "closed")

        rows += _map(cfg, circ, [(q, r, L) for r in cfg.r for L in cfg.L for q in _degrees(cfg, sp)])
    return rows, run_metadata(cfg, sp)


def adiabatic_envelope(sp, r):
    """sum over S_0 of mult e^{-2 mu r} / (1 - e^{-2 mu r}), the size of the
    leading boundary correction; deviations are bounded by it on the models."""
    lam, mult = sp.plus(0)
    e = np.exp(-2 * np.sqrt(lam) * r)
    return float(np.sum(mult * e / -np.expm1(-2 * np.sqrt(lam) * r)))


def cmd_adiabatic(cfg: RunConfig):
    sp = load_source(cfg)
    if not sp.acyclic:
        raise ConfigError("dtn: adiabatic sweep needs an acyclic boundary")
    pairs = list(dtn.ADIABATIC_PAIRS)
    if cfg.bc != ("rel",):
        want = set(cfg.bc)
        pairs = [p for p in pairs if p[0] in want]
        if not pairs:
            raise ConfigError(f"no adiabatic pairs for {sorted(want)}; choose from {[p[0] for p in dtn.ADIABATIC_PAIRS]}")
    L = cfg.L[0]
    tables = _map(cfg, lambda p: dtn.adiabatic_sweep(sp, p, cfg.r, L), pairs)
    rows = []
    for p, t in zip(pairs, tables):
        name = f"{p[0]}-{p[1]}"
        for r, v in zip(t.r, t.value):
            rows.append(row(f"adiabatic:{name}", v, t.limit, adiabatic_envelope(sp, r) + cfg.tol, r, None, name))
        if math.isfinite(t.decay_rate):
            target = 2 * math.sqrt(t.lam_min)
            rows.append(row(f"decay_rate:{name}", t.decay_rate, target, 0.1 * target, None, None, name))
    return rows, run_metadata(cfg, sp)


def random_path(rng, d):
    """Linear path between two random Hermitian matrices with invertible ends."""
    def herm():
        X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        return 0.5 * (X + X.conj().T)
    ends = []
    for _ in range(2):
        H = herm()
        while np.min(np.abs(np.linalg.eigvalsh(H))) < 1e-3:
            H = herm()
        ends.append(H)
    return deform.HermitianPath.linear(*ends)


def cmd_flow(cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    paths = [random_path(rng, cfg.dim) for _ in range(cfg.paths)]
    reps = _map(cfg, deform.sf_eta_check, paths)
    rows = [row(f"sf_vs_eta:path{i}", rep.sf, rep.eta_difference, 0.0) for i, rep in enumerate(reps)]
    md = run_metadata(cfg)
    md.update({"paths": cfg.paths, "dim": cfg.dim, "seed": cfg.seed})
    return rows, md


def cmd_torsion(cfg: RunConfig):
    sp = load_source(cfg)
    if not sp.acyclic:
        raise ConfigError("torsion: the determinant equalities need an acyclic boundary")
    rows = []
    for r in cfg.r:
        rep = torsion.theorem_2_11_check(sp, r)
        s, off, nb = rep.sums, rep.offset, rep.n_boundary
        targets = {"Ptilde0-rel": (s["Ptilde0"] - s["rel"], nb * off),
                   "Ptilde1-rel": (s["Ptilde1"] - s["rel"], -nb * off),
                   "P_minus-abs": (s["P_minus_L0"], s["abs"]),
                   "P_plus-abs": (s["P_plus_L1"], s["abs"]),
                   "rel-abs": (s["rel"], s["abs"])}
        for name, (a, b) in targets.items():
            rows.append(row(f"slab:{name}", a, b, cfg.tol, r, None, name))
    theta0 = 0.5 if cfg.theta0 is None else cfg.theta0
    try:
        gl = _map(cfg, lambda j: torsion.gluing_check(sp, j[0], j[1], theta0),
                  [(r, L) for r in cfg.r for L in cfg.L])
    except torsion.LedgerError as e:
        raise ConfigError(f"torsion: {e}") from None
    for g in gl:
        b = g.error_bound + cfg.tol
        lab = f"_L={g.L!r}"
        rows.append(row("gluing:closed_vs_bfk" + lab, g.closed_sum, g.bfk_sum, b, g.r, None, "closed"))
        rows.append(row("gluing:closed_vs_pieces" + lab, g.closed_sum, g.pieces_sum, b, g.r, None, "P_plus|P_minus"))
        for q, res in sorted(g.degree_residuals.items()):
            rows.append(row("gluing:degree_bfk" + lab, res, 0.0, b, g.r, q, "closed"))
        d = sum(g.eta_pieces) - g.eta_closed
        rows.append(row("gluing:eta_mod2" + lab, sum(g.eta_pieces), g.eta_closed, 1e-12, g.r, None, "eta",
                        residual=d - 2 * round(d / 2)))
        dt = g.log_T_closed - g.log_T_pieces
        rows.append(row("gluing:logT_real" + lab, g.log_T_closed.real, g.log_T_pieces.real, b, g.r))
        k = dt.imag / (2 * math.pi)
        rows.append(row("gluing:logT_imag_mod2pi" + lab, g.log_T_closed.imag, g.log_T_pieces.imag, 1e-12, g.r,
                        residual=2 * math.pi * (k - round(k))))
        za, zb = g.zeta0_terms
        rows.append(row("gluing:zeta0_cancel" + lab, za.imag, -zb.imag, 0.0, g.r))
    md = run_metadata(cfg, sp)
    md["theta0"] = theta0
    md["note"] = ("slab pieces carry two boundary copies; eta congruence only for sign-symmetric "
                  "spectra; Maslov-index terms not computed")
    return rows, md


COMMANDS = {"spectrum": cmd_spectrum, "det": cmd_det, "glue": cmd_glue, "adiabatic": cmd_adiabatic,
            "flow": cmd_flow, "torsion": cmd_torsion}


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = make_config(ns)
        rows, md = COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        print(f"rtglue {ns.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, dtn.DtnError, torsion.LedgerError) as e:
        print(f"rtglue {ns.command}: error: {type(e).__module__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(rows, md, cfg.format)
    if cfg.out and cfg.command != "spectrum":
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [r for r in rows if not r.ok]
    for r in failed:
        print(f"rtglue {cfg.command}: residual {r.residual!r} exceeds bound {r.error_bound!r} "
              f"({r.quantity}, r={r.r}, q={r.q}, bc={r.bc})", file=sys.stderr)
    return EXIT_RESIDUAL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
