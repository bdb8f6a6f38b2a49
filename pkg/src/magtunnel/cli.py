"""Command-line front end.

Every command writes ``<command>.csv`` and a ``<command>.json`` mirror into
``--out``.  CSV files start with ``#`` lines carrying the config hash and
the constants block.  A ``manifest.json`` is written when a command fails.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import math
import sys
import traceback
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import degennes, fiber, interaction, lattice, model, pde
from .model import FROZEN_CONSTANTS, ModelParams, SpectralConstants

DEFAULT_CONFIG = """\
[model]
B = 1.0
R = 1.0
h = 0.25

[constants]
source = frozen

[degennes]
n = 2000

[fiber]
h_values = 0.25, 0.1, 0.05
m_window = 2
crossing_n = 40

[calibrate]
deg = 4

[interaction]
ell = 6.0
e0 = 0.5
ns = 8, 12, 16, 24, 32, 48

[two_disc]
L = 6.0
h = 0.25

[lattice]
n = 20
K = 2.0
flux = 1/2

[butterfly]
q_max = 20
n_theta = 8

[pde]
h_single = 0.125
refine = 1, 2, 3
h_two = 0.25
L_values = 3.0, 3.5, 4.0, 4.5
"""


class CheckFailure(RuntimeError):
    pass


def load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg.read_string(DEFAULT_CONFIG)
    if path:
        with open(path, encoding="utf-8") as fh:
            cfg.read_file(fh)
    return cfg


def config_text(cfg: configparser.ConfigParser) -> str:
    buf = io.StringIO()
    cfg.write(buf)
    return buf.getvalue()


def floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x.strip()]


def model_params(cfg) -> ModelParams:
    m = cfg["model"]
    return ModelParams(m.getfloat("B"), m.getfloat("R"), m.getfloat("h"))


def resolve_constants(cfg) -> SpectralConstants:
    src = cfg["constants"].get("source", "frozen")
    if src == "frozen":
        return FROZEN_CONSTANTS
    if src == "calibrate":
        th, _ = degennes.theta0()
        m = cfg["model"]
        return fiber.calibrate_constants(m.getfloat("B"), m.getfloat("R"), th,
                                         k0=degennes.k0_constant(th)).consts
    raise ValueError(f"unknown constants source {src!r}")


def validate(cfg):
    model_params(cfg)
    if cfg["constants"].get("source") not in ("frozen", "calibrate"):
        raise ValueError("constants.source must be frozen or calibrate")
    if cfg["interaction"].getfloat("ell") <= 2 * cfg["model"].getfloat("R"):
        raise ValueError("interaction.ell must exceed 2R")
    if cfg["butterfly"].getint("q_max") > 60:
        raise ValueError("butterfly.q_max must be at most 60")
    Fraction(cfg["lattice"]["flux"])


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Writer:
    """Collects artifacts for one run and writes them with a common header."""

    def __init__(self, out: Path, cfg_hash: str, consts: SpectralConstants):
        self.out = out
        self.hash = cfg_hash
        self.consts = consts
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, columns, rows, meta: dict | None = None):
        head = [f"# magtunnel {name}", f"# config_sha256 {self.hash}",
                "# constants " + " ".join(f"{k}={fmt(v)}" for k, v in self.consts.as_dict().items())]
        for k, v in (meta or {}).items():
            head.append(f"# {k} {fmt(v)}")
        lines = head + [",".join(columns)] + [",".join(fmt(x) for x in r) for r in rows]
        (self.out / f"{name}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        doc = {"command": name, "config_sha256": self.hash, "constants": self.consts.as_dict(),
               "meta": {k: _jsonable(v) for k, v in (meta or {}).items()},
               "columns": list(columns), "rows": [[_jsonable(x) for x in r] for r in rows]}
        (self.out / f"{name}.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                               encoding="utf-8")
        self.files += [f"{name}.csv", f"{name}.json"]


def _jsonable(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return str(x)


# ---------------------------------------------------------------------------
# commands


def cmd_degennes(cfg, consts, args, w: Writer):
    n = cfg["degennes"].getint("n")
    rows = []
    for k in (1, 2, 4):
        th, x0 = degennes.theta0(n=n * k)
        rows.append((n * k, th, x0, abs(x0 * x0 - th)))
    k0 = degennes.k0_constant(rows[-1][1])
    w.table("degennes", ("n", "theta0", "xi0", "identity_residual"), rows,
            {"k0": k0, "delta0": degennes.delta0_from(rows[-1][1]),
             "grid_spread": abs(rows[-1][1] - rows[-2][1])})


def cmd_fiber(cfg, consts, args, w: Writer):
    p0 = model_params(cfg)
    f = cfg["fiber"]
    rows = []
    for h in floats(f["h_values"]):
        p = p0.with_h(h)
        info = model.xi_and_e(p, consts)
        for m in range(info.m_minus - f.getint("m_window"), info.m_minus + f.getint("m_window") + 2):
            try:
                mu = fiber.fiber_ground_energy(p, m, consts.theta0)
            except fiber.BracketError:
                continue
            rows.append(("level", h, m, mu, info.xi, info.e))
    n = f.getint("crossing_n")
    hc = fiber.crossing_near(p0.B, p0.R, n, consts)
    pc = p0.with_h(hc)
    info = model.xi_and_e(pc, consts)
    rows.append(("crossing", hc, n, fiber.fiber_ground_energy(pc, n, consts.theta0), info.xi, info.e))
    w.table("fiber", ("kind", "h", "m", "mu", "xi", "e"), rows)


def cmd_calibrate(cfg, consts, args, w: Writer):
    p = model_params(cfg)
    th, _ = degennes.theta0()
    cal = fiber.calibrate_constants(p.B, p.R, th, deg=cfg["calibrate"].getint("deg"),
                                    k0=degennes.k0_constant(th))
    c = cal.consts
    rows = [("theta0", c.theta0), ("c1", c.c1), ("c0_const", c.c0_const), ("c2", c.c2), ("k0", c.k0),
            ("c0_rate", cal.c0_rate), ("c0_from_curvature", cal.c0_from_curvature),
            ("c0_const_two_sequences", cal.c0_const_two_sequences),
            ("c1_fit_residual", cal.residuals["c1_fit"]), ("c2_fit_residual", cal.residuals["c2_fit"])]
    w.consts = c
    w.table("calibrate", ("name", "value"), rows)


def cmd_interaction(cfg, consts, args, w: Writer):
    p = model_params(cfg)
    s = cfg["interaction"]
    ell, e0, ns = s.getfloat("ell"), s.getfloat("e0"), ints(s["ns"])
    est = interaction.extract_C_ell(p.B, p.R, consts, -1, -1, ell, e0, ns, jobs=args.jobs)
    rows = []
    for h, c, norm in est.samples:
        S = model.tunneling_action(p.with_h(h), ell, consts.theta0).value
        rows.append((h, c.log_value.real, c.phase, c.log_value.real + S / h - math.log(h),
                     norm.real, c.rel_error))
    w.table("interaction", ("h", "log_abs_w", "phase", "log_abs_w_plus_S_over_h_minus_log_h",
                            "normalized_w", "rel_error"), rows,
            {"ell": ell, "e0": e0, "C_ell": est.value.real, "C_ell_error": est.error})


def cmd_two_disc(cfg, consts, args, w: Writer):
    s = cfg["two_disc"]
    L, h = s.getfloat("L"), s.getfloat("h")
    m = cfg["model"]
    p = ModelParams(m.getfloat("B"), m.getfloat("R"), h)
    syn = lattice.two_disc_effective(0.0, 0.0, 1.0, 2.0, crossing=True)
    pair = interaction.fiber_pair(p, consts)
    cut = interaction.CutoffSpec.default(L, p.R)
    patch = interaction.gram_patch(p, consts, [(0.0, 0.0), (L, 0.0)], cut, pair=pair)
    ev = np.linalg.eigvalsh(patch.M)
    wl = interaction.w_line_integral(p, consts, -1, -1, L, pair=pair).value.real
    rows = [("synthetic_4x4", *syn.eigenvalues),
            ("gram_patch", ev[0], ev[1], ev[1] - ev[0], 4 * abs(wl))]
    w.table("two_disc", ("kind", "v1", "v2", "v3", "v4"), rows, {"L": L, "h": h})


def cmd_lattice(cfg, consts, args, w: Writer):
    s = cfg["lattice"]
    n, K = s.getint("n"), s.getfloat("K")
    phi = Fraction(s["flux"])
    B, L = cfg["model"].getfloat("B"), 1.0
    h = B * L * L / (2 * math.pi * float(phi))
    patch = lattice.LatticePatch(n, n, L)
    X = lattice.build_X(patch, B, h)
    Y = lattice.build_Y(patch, B, h, K)
    rx = lattice.fourier_reduce_check(X, B, h, L, patch=patch)
    p, q = phi.numerator, phi.denominator
    ry = lattice.fourier_reduce_check(Y, B, h, L, patch=patch,
                                      bands_fn=lambda t: lattice.hprime_bands(t, p, q, K))
    rows = [("X", X.dim, X.hermiticity_residual(), rx.excess, rx.bulk_excess),
            ("Y", Y.dim, Y.hermiticity_residual(), ry.excess, ry.bulk_excess)]
    w.table("lattice", ("operator", "dim", "hermiticity", "excess", "bulk_excess"), rows,
            {"phi": str(phi), "K": K})


def cmd_butterfly(cfg, consts, args, w: Writer):
    s = cfg["butterfly"]
    q_max = args.qmax or s.getint("q_max")
    ds = lattice.butterfly(q_max, s.getint("n_theta"), jobs=args.jobs)
    sym = lattice.butterfly_symmetry_residuals(ds)
    w.table("butterfly", lattice.ButterflyDataset.COLUMNS, ds.rows,
            {"q_max": q_max, "mirror_residual": sym["mirror"], "reflection_residual": sym["reflection"]})


def cmd_pde_check(cfg, consts, args, w: Writer):
    s = cfg["pde"]
    m = cfg["model"]
    B, R = m.getfloat("B"), m.getfloat("R")
    p1 = ModelParams(B, R, s.getfloat("h_single"))
    a0 = math.sqrt(p1.h / B) / 8
    run = pde.single_disc_lowest(p1, [a0 / f for f in floats(s["refine"])], theta0=consts.theta0)
    info = model.xi_and_e(p1, consts)
    ref = min(fiber.fiber_ground_energy(p1, k, consts.theta0)
              for k in (info.m_minus - 1, info.m_minus, info.m_plus))
    rows = [("single", a, v, ref) for a, v in zip(run.spacings, run.values)]
    rows.append(("single_richardson", 0.0, run.extrapolated, ref))
    p2 = ModelParams(B, R, s.getfloat("h_two"))
    gaps = pde.two_disc_gap(p2, floats(s["L_values"]), math.sqrt(p2.h / B) / 8, theta0=consts.theta0)
    for g in gaps:
        rows.append(("two_disc", g.L, g.gap, g.action))
    slopes = pde.gap_slopes(gaps, p2.h)
    w.table("pde_check", ("kind", "x", "value", "reference"), rows,
            {"observed_order": run.observed_order if run.observed_order is not None else "nan",
             "slopes": " ".join(repr(float(x)) for x in slopes)})


def verify_checks(cfg, consts, args) -> list[tuple]:
    """Fast invariant suite; each row is ``(name, value, threshold, passed)``."""
    rng = np.random.default_rng(args.seed)
    tol = args.tol
    out = []

    def add(name, value, thr, ok):
        out.append((name, float(value), float(thr), bool(ok)))

    th, x0 = degennes.theta0()
    add("theta0_in_unit_interval", th, 1.0, 0 < th < 1)
    add("xi0_identity", abs(x0 * x0 - th), 1e-7, abs(x0 * x0 - th) < 1e-7)
    worst = 0.0
    for h, mo in ((0.1, 0), (0.05, 1), (0.02, -1)):
        p = ModelParams(1.0, 1.0, h)
        mm = model.xi_and_e(p, consts).m_minus + mo
        a = fiber.fiber_ground_energy(p, mm, consts.theta0)
        b = fiber.fd_fiber_solver(p, mm)
        worst = max(worst, abs(a - b) / abs(a))
    add("kummer_vs_fd", worst, tol, worst < tol)
    syn = lattice.two_disc_effective(0.0, 0.0, 1.0, 2.0, crossing=True).eigenvalues
    d = float(np.abs(syn - np.array([-2.5, 0, 0, 2.5])).max())
    add("two_disc_synthetic", d, 1e-12, d < 1e-12)
    for L, eps in ((6.0 + 0.01, 2.0), (25.0, 0.4)):
        b = model.error_budget(L, 1.0, eps)
        add(f"budget_L{L:g}_eps{eps:g}", min(b.self_margin, b.cross_margin), 0.0, b.passed)
    th_ = 0.7
    b0 = lattice.amo_spectrum(th_, 0, 1)
    d0 = abs(b0[0, 0] - (-2 + 2 * math.cos(th_))) + abs(b0[0, 1] - (2 + 2 * math.cos(th_)))
    add("amo_flux_zero", d0, 1e-12, d0 < 1e-12)
    sym = lattice.butterfly_symmetry_residuals(lattice.butterfly(8, 8))
    add("butterfly_symmetry", max(sym.values()), 1e-10, max(sym.values()) < 1e-10)
    Y = lattice.build_Y(lattice.LatticePatch(3, 3, 1.0), 1.0, 0.3, 2.0)
    add("Y_hermitian", Y.hermiticity_residual(), 1e-14, Y.hermiticity_residual() < 1e-14)
    dt = lattice.t_matrix_det_exact(float(rng.uniform(0.1, 10)))
    add("T_singular", float(dt), 0.0, dt == 0)
    p = ModelParams(1.0, 1.0, 0.25)
    dom = pde.DiscreteDomain.around([(0.0, 0.0)], 1.0, math.sqrt(p.h) / 8, 3.0)
    ph = pde.plaquette_phases(p, dom)
    dev = float(np.abs(ph - p.B * dom.a**2 / p.h).max())
    add("plaquette_flux", dev, 1e-12, dev < 1e-12)
    op = pde.assemble(p, dom)
    e1 = pde.lowest_eigs(op, 2).values
    e2 = pde.lowest_eigs(pde.gauge_transform(op, rng.uniform(0, 2 * np.pi, op.size)), 2).values
    drift = float(np.abs(e1 - e2).max() / abs(e1).max())
    add("gauge_drift", drift, 1e-12, drift < 1e-12)
    return out


def cmd_verify(cfg, consts, args, w: Writer):
    rows = verify_checks(cfg, consts, args)
    w.table("verify", ("check", "value", "threshold", "passed"), rows)
    bad = [r[0] for r in rows if not r[3]]
    if bad:
        raise CheckFailure("failed checks: " + ", ".join(bad))


COMMANDS = {
    "degennes": cmd_degennes,
    "fiber": cmd_fiber,
    "calibrate": cmd_calibrate,
    "interaction": cmd_interaction,
    "two-disc": cmd_two_disc,
    "lattice": cmd_lattice,
    "butterfly": cmd_butterfly,
    "pde-check": cmd_pde_check,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magtunnel", description="Magnetic tunneling between discs.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="config file (INI sections override the defaults)")
    ap.add_argument("--out", default="magtunnel_out", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--tol", type=float, default=1e-8, help="tolerance for the cross-oracle check")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    ap.add_argument("--qmax", type=int, default=None, help="butterfly q_max override")
    ap.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    text = config_text(cfg)
    if args.print_config:
        sys.stdout.write(text)
        return 0
    out = Path(args.out)
    digest = hashlib.sha256((text + f"seed={args.seed}\ntol={args.tol!r}\n").encode()).hexdigest()
    writer = None
    try:
        validate(cfg)
        consts = resolve_constants(cfg)
        writer = Writer(out, digest, consts)
        COMMANDS[args.command](cfg, consts, args, writer)
    except Exception as exc:  # report through the manifest and a nonzero status
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"command": args.command, "config_sha256": digest, "status": "failed",
                    "error": f"{type(exc).__name__}: {exc}",
                    "artifacts": writer.files if writer else [],
                    "traceback": traceback.format_exc().splitlines()[-3:]}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
        print(manifest["error"], file=sys.stderr)
        return 1
    (out / "manifest.json").unlink(missing_ok=True)
    for f in writer.files:
        print(out / f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
