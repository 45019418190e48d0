"""Command line front end: one subcommand per pipeline, CSV/JSON out, a manifest per run.

Exit codes: 0 success, 2 invalid input or configuration, 3 a numerical invariant
failed (named on stderr and in the manifest).  A JSON config file may supply any
long option (dashes or underscores); flags given on the command line win.
"""
import argparse
import csv
import hashlib
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from . import potential as pot
from . import hill1d, galerkin, landscape, effmass
from . import modespace as ms
from . import propagate as prop

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class InvariantError(RuntimeError):
    def __init__(self, name, detail=""):
        super().__init__(f"{name}: {detail}" if detail else name)
        self.name = name


NUMERIC_ERRORS = (InvariantError, hill1d.IntegrationError, hill1d.IncompleteError,
                  hill1d.InterlacingError, galerkin.EigensolverError)
INVALID_ERRORS = (ValueError, KeyError, json.JSONDecodeError, prop.TailError, FileNotFoundError)


# ---- presets for observables, external potentials and data ------------------------

PHI_PRESETS = {
    "bump": lambda x: effmass.bump(x, 0.0, 1.5),
    "gauss": lambda x: np.exp(-x ** 2 / 2),
    "one": lambda x: np.ones_like(x),
}

VEXT_PRESETS = {
    "none": None,
    "bump": lambda t, x: 2.0 * effmass.bump(x, 1.0, 2.0),
    "gauss": lambda t, x: 0.5 * np.exp(-x ** 2 / 2),
}


@dataclass
class RunConfig:
    potential: object = "mathieu5"      # preset name or {"dim", "coeffs"} descriptor
    dim: int = 1
    L: float = 16.0
    per_period: int = 8
    eps: float = 0.125
    eps_list: list = field(default_factory=lambda: [0.125, 0.0625, 0.03125])
    window: list = field(default_factory=lambda: [0.0, 0.5])
    phi: str = "bump"
    vext: str = "bump"
    scheme: str = "bloch_strang"
    dt: float = None
    t_final: float = 0.5
    out: str = None
    seed: int = 0
    jobs: int = 1
    plots: bool = True
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.phi not in PHI_PRESETS:
            raise ValueError(f"unknown phi preset {self.phi!r}; choose from {sorted(PHI_PRESETS)}")
        if self.vext not in VEXT_PRESETS:
            raise ValueError(f"unknown vext preset {self.vext!r}; choose from {sorted(VEXT_PRESETS)}")
        a, b = self.window
        if not b > a >= 0:
            raise ValueError("window must satisfy 0 <= a < b")
        if any(not e > 0 for e in self.eps_list) or not self.eps > 0:
            raise ValueError("eps values must be positive")
        return self

    def potential_obj(self):
        if isinstance(self.potential, dict):
            return pot.from_json(self.potential)
        p = str(self.potential)
        if p.lstrip().startswith("{"):
            return pot.from_json(p)
        if os.path.exists(p):
            with open(p) as fh:
                return pot.from_json(json.load(fh))
        return pot.preset(p, self.dim)

    def digest(self):
        # output location and parallelism do not change results
        d = {k: v for k, v in asdict(self).items() if k not in ("out", "jobs", "plots")}
        text = json.dumps(_jsonable(d), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return o


def all_tolerances(cfg):
    tol = {
        "hill.rtol": hill1d.DEFAULT_RTOL, "hill.touch_tol": hill1d.TOUCH_TOL,
        "hill.value_floor": hill1d.VALUE_FLOOR, "hill.det_tol": hill1d.DET_TOL,
        "galerkin.gauge_tie": galerkin.GAUGE_TIE, "galerkin.low_overlap": galerkin.LOW_OVERLAP,
        "landscape.grad_tol_rel": landscape.GRAD_TOL, "landscape.gap_tol_rel": landscape.GAP_TOL,
        "landscape.rank_tol": landscape.RANK_TOL,
        "effmass.mass_floor": effmass.MASS_FLOOR, "effmass.width": effmass.DEFAULT_WIDTH,
        "propagate.tail_threshold": 1e-6, "propagate.mass_drift": 1e-8,
        "wigner.marginal": 1e-6, "modespace.roundtrip": 1e-6, "galerkin.residual_rel": 1e-9,
    }
    tol.update(cfg.tolerances)
    return tol


# ---- output helpers ----------------------------------------------------------------

class Run:
    """Collects outputs for one subcommand and writes the manifest."""

    def __init__(self, command, cfg):
        self.command = command
        self.cfg = cfg
        self.dir = cfg.out or os.path.join("blochlimit-out", command)
        os.makedirs(self.dir, exist_ok=True)
        self.outputs = []
        self.checks = {}
        self.notes = []
        self.t0 = time.perf_counter()

    def path(self, name):
        p = os.path.join(self.dir, name)
        self.outputs.append(name)
        return p

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        return name

    def write_json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return name

    def write_text(self, name, text):
        with open(self.path(name), "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
        return name

    def figure(self, stem, kind, csv_name, draw, **script_kw):
        from . import plotting
        self.outputs.append(os.path.basename(
            plotting.write_plot_script(self.dir, stem, kind, csv_name, **script_kw)))
        if not self.cfg.plots:
            return
        try:
            draw(os.path.join(self.dir, f"{stem}.png"))
            self.outputs.append(f"{stem}.png")
        except ImportError as exc:        # matplotlib missing: the script still reproduces it
            self.notes.append(f"figure {stem} skipped: {exc}")

    def check(self, name, value, limit, ok=None):
        ok = bool(value < limit) if ok is None else bool(ok)
        self.checks[name] = {"value": _jsonable(value), "limit": limit, "ok": ok}
        if not ok:
            raise InvariantError(name, f"{value!r} (limit {limit!r})")

    def manifest(self, status, failure=None):
        m = {
            "command": self.command,
            "status": status,
            "version": __version__,
            "config": asdict(self.cfg),
            "config_hash": self.cfg.digest(),
            "tolerances": all_tolerances(self.cfg),
            "checks": self.checks,
            "outputs": sorted(set(self.outputs)),
            "notes": self.notes,
            "runtime_s": round(time.perf_counter() - self.t0, 3),
        }
        if failure:
            m["failure"] = failure
        with open(os.path.join(self.dir, "manifest.json"), "w") as fh:
            json.dump(_jsonable(m), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return m


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _xi_grid(n):
    return np.linspace(-np.pi, np.pi, int(n))


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [float(t) for t in str(s).split(",") if t.strip()]


# ---- subcommands -------------------------------------------------------------------

def cmd_discriminant(run, args):
    V = run.cfg.potential_obj()
    scan = hill1d.discriminant_scan(V, (args.lam_min, args.lam_max), args.samples)
    run.write_csv("discriminant.csv", ["lambda", "delta", "delta_prime"],
                  zip(scan.lam, scan.delta, scan.delta_prime))
    from . import plotting
    panels = plotting.discriminant_panels(scan.lam, scan.delta)
    run.figure("discriminant", "discriminant", "discriminant.csv",
               lambda p: plotting.discriminant_figure(scan.lam, scan.delta, p, panels), panels=panels)
    return {"samples": len(scan.lam)}


def cmd_bands(run, args):
    V = run.cfg.potential_obj()
    n = args.n_bands
    from . import plotting
    if args.solver == "hill":
        table = hill1d.band_table(V, n)
        xi = _xi_grid(args.points)
        bv = table.band_value(np.arange(1, n + 1)[:, None], xi[None, :])
        rows = [(i + 1, xi[j], bv.rho[i, j], bv.rho_p[i, j], bv.rho_pp[i, j])
                for i in range(n) for j in range(len(xi))]
        run.write_csv("bands.csv", ["n", "xi", "rho", "rho_p", "rho_pp"], rows)
        run.write_json("edges.json", [asdict(e) for e in table.edges.info])
        run.figure("bands", "bands", "bands.csv",
                   lambda p: plotting.bands_figure(xi, bv.rho, p), xcol="xi")
        return {"n_bands": n}
    K = args.K
    if V.dim == 1:
        xis = _xi_grid(args.points)[:, None]
        cols = ["xi"]
    else:
        g = _xi_grid(args.points)
        xis = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        cols = ["xi1", "xi2"]
    w, _, res = galerkin.solve_fibers(V, xis, K, n)
    scale = max(1.0, float(np.max(np.abs(w))))
    run.check("galerkin.residual", float(res.max()) / scale, all_tolerances(run.cfg)["galerkin.residual_rel"])
    rows = [(i + 1, *xis[j], w[j, i], res[j, i]) for i in range(n) for j in range(len(xis))]
    run.write_csv("bands.csv", ["n", *cols, "rho", "residual"], rows)
    if V.dim == 1:
        run.figure("bands", "bands", "bands.csv",
                   lambda p: plotting.bands_figure(xis[:, 0], w.T, p), xcol="xi")
    return {"n_bands": n, "K": K}


def cmd_fiber(run, args):
    V = run.cfg.potential_obj()
    xi = _floats(args.xi)
    if len(xi) != V.dim:
        raise ValueError(f"--xi needs {V.dim} component(s)")
    f = galerkin.solve_fiber(V, np.array(xi), args.K, args.n_bands)
    run.write_csv("fiber_energies.csv", ["n", "rho", "residual"],
                  [(i + 1, f.energies[i], f.residuals[i]) for i in range(len(f.energies))])
    if args.dump_waves:
        kcols = ["k"] if V.dim == 1 else ["k1", "k2"]
        rows = [(i + 1, *f.kvecs[j], f.waves[j, i].real, f.waves[j, i].imag)
                for i in range(f.waves.shape[1]) for j in range(len(f.kvecs))]
        run.write_csv("fiber_waves.csv", ["n", *kcols, "re_c", "im_c"], rows)
    return {"xi": xi}


def _landscape_grid(run, args):
    V = run.cfg.potential_obj()
    top = args.n_bands if getattr(args, "all_bands", False) else args.band
    n_ret = top + 2
    grid = galerkin.build_grid(V, n_ret, args.resolution, K=args.K)
    oracle = hill1d.band_table(V, n_ret) if V.dim == 1 else None
    return V, grid, oracle


def _report_rows(rep):
    rows = []
    for n, cl in rep.critical.items():
        for c in cl:
            rows.append((n, "critical", *np.round(c.point, 12), c.grad_norm, c.rank, c.rank_verdict))
    for n, cl in rep.crossings.items():
        for c in cl:
            k = c.classification
            rows.append((n, "crossing", *np.round(c.point, 12), c.gap, k.kind if k else "", k.q_fit if k else ""))
    return rows


def cmd_classify(run, args):
    V, grid, oracle = _landscape_grid(run, args)
    bands = list(range(1, args.n_bands + 1)) if args.all_bands else [args.band]
    tol = run.cfg.tolerances
    rep = landscape.landscape_report(grid, bands, tol.get("grad_tol"), tol.get("gap_tol"),
                                     tol.get("rank_tol", landscape.RANK_TOL), oracle)
    run.write_json("landscape.json", rep.to_json())
    table = landscape.audit_table(rep)
    run.write_text("audit.txt", table)
    print(table)
    for n in bands:
        for c in rep.critical[n]:
            if c.polished:
                scale = landscape.energy_scale(grid, [n])
                lim = tol.get("grad_tol", landscape.GRAD_TOL * scale)
                run.check(f"critical.grad_norm.band{n}", c.grad_norm, lim)
        for c in rep.crossings[n]:
            scale = landscape.energy_scale(grid, [n, n + 1])
            run.check(f"crossing.gap.band{n}", c.gap, tol.get("gap_tol", landscape.GAP_TOL * scale))
    return {"bands": bands}


def cmd_audit(run, args):
    V, grid, oracle = _landscape_grid(run, args)
    n = args.band
    tol = run.cfg.tolerances
    rep = landscape.landscape_report(grid, [n], tol.get("grad_tol"), tol.get("gap_tol"),
                                     tol.get("rank_tol", landscape.RANK_TOL), oracle)
    lines = [f"band {n}"]
    lam = ", ".join(f"{c.point.round(9).tolist()} (rank {c.rank})" for c in rep.critical[n]) or "none"
    lines.append(f"Lambda_{n}: {lam}")
    sig = []
    for c in rep.crossings[n]:
        k = c.classification or landscape.CrossingClass("unresolved")
        desc = k.kind if k.kind != "degenerate" else f"degenerate q={k.q}"
        sig.append(f"{c.point.round(9).tolist()} {desc} (slope {k.q_fit:.4f}, c {k.c:.4g})")
    lines.append(f"Sigma_{n}: " + ("; ".join(sig) or "none"))
    for name, v in rep.verdicts[n].items():
        extra = f" margin {v.margin:.4g}" if v.margin is not None else ""
        lines.append(f"{name:<4} {v}{extra}{' - ' + v.detail if v.detail else ''}")
    text = "\n".join(lines)
    run.write_text("audit.txt", text)
    run.write_json("landscape.json", rep.to_json())
    run.write_csv("clusters.csv", ["n", "kind", *(["xi"] if V.dim == 1 else ["xi1", "xi2"]), "value", "class", "extra"],
                  _report_rows(rep))
    print(text)
    return {"band": n}


def cmd_normal_form(run, args):
    V = run.cfg.potential_obj()
    n = args.band
    grid = galerkin.build_grid(V, n + 2, args.resolution, K=args.K, with_waves=False)
    sigma = np.array(_floats(args.sigma))
    nf = landscape.extract_normal_form(grid, sigma, n, args.neighborhood)
    run.check("normal_form.reconstruction", nf.residual, 1e-10)
    cols = ["eta"] if V.dim == 1 else ["eta1", "eta2"]
    run.write_csv("normal_form.csv", [*cols, "lambda", "g"],
                  [(*e, l, g) for e, l, g in zip(nf.eta, nf.lam, nf.gap)])
    run.write_json("normal_form.json", {"sigma": nf.sigma, "hess_lambda": nf.hess_lambda,
                                        "degree": nf.degree, "m": nf.multiplicity_ratio,
                                        "theta": nf.theta, "residual": nf.residual})
    return {"degree": nf.degree}


def _initial(cfg, args, V, eps, N=None):
    N = N or ms.default_points(cfg.L, eps, cfg.per_period)
    fib = ms.dual_fibers(V, cfg.L, eps, N)
    if getattr(args, "field", None):
        psi = ms.read_field(args.field)
        if abs(psi.eps - eps) > 1e-15 or psi.N != N:
            raise ValueError("input field does not match --eps / grid rule")
    else:
        psi = ms.packet(cfg.L, eps, args.xi0, args.x0, args.sigma, N)
    if getattr(args, "project_band", None):
        psi = ms.recompose(ms.decompose(psi, fib), [int(args.project_band)])
    return psi, fib


def cmd_decompose(run, args):
    cfg = run.cfg
    V = cfg.potential_obj()
    psi, fib = _initial(cfg, args, V, cfg.eps)
    modes = ms.decompose(psi, fib)
    back = ms.recompose(modes)
    rt = float(np.sqrt(np.sum(np.abs(back.values - psi.values) ** 2) * psi.dx))
    tol = all_tolerances(cfg)
    run.check("modespace.roundtrip", rt, tol["modespace.roundtrip"])
    nmax = min(args.modes, modes.n_modes)
    norms = modes.mode_norms2()
    tails = [ms.tail_norm(psi, fib, k) for k in range(1, nmax + 1)]
    run.check("modespace.tail_monotone", float(np.max(np.diff(tails), initial=-1.0)), 1e-14)
    run.write_csv("modes.csv", ["n", "norm2", "tail"],
                  [(k, norms[k - 1], tails[k - 1]) for k in range(1, nmax + 1)])
    from . import plotting
    run.figure("tail", "series", "modes.csv",
               lambda p: plotting.series_figure(np.arange(1, nmax + 1), {"tail": np.maximum(tails, 1e-300)}, p,
                                                "N", "tail", logy=True),
               xcol="n", ycols=["tail"], plotfn="semilogy")
    return {"roundtrip": rt, "modes": nmax}


def cmd_evolve(run, args):
    cfg = run.cfg
    V = cfg.potential_obj()
    eps = cfg.eps
    dt = cfg.dt or (1e-3 if cfg.scheme == "bloch_strang" else 0.1 * eps ** 2)
    dt = cfg.t_final / int(np.ceil(cfg.t_final / dt - 1e-9))
    psi, fib = _initial(cfg, args, V, eps)
    phi = PHI_PRESETS[cfg.phi](psi.x)
    ec = prop.EvolutionConfig(eps, cfg.t_final, dt, cfg.scheme, V, VEXT_PRESETS[cfg.vext])
    res = prop.evolve(psi, ec, fib if cfg.scheme == "bloch_strang" else None,
                      observables={"phi": phi}, snap_every=args.snap_every)
    tol = all_tolerances(cfg)
    drift = float(np.max(np.abs(np.asarray(res.mass) - res.mass[0])))
    run.write_csv("series.csv", ["t", "mass", "phi"], zip(res.times, res.mass, res.observables["phi"]))
    ms.write_field(run.path("final.bin"), res.field)
    run.outputs.append("final.json")
    if args.snap_every:
        rec = prop.density_record(res)
        stride = max(1, psi.N // args.density_points)
        rows = [(t, x, d) for t, dens in zip(rec.times, rec.densities)
                for x, d in zip(rec.x[::stride], dens[::stride])]
        run.write_csv("density.csv", ["t", "x", "density"], rows)
        for i, s in enumerate(res.snapshots):
            ms.write_field(run.path(f"snap_{i:04d}.bin"), s)
            run.outputs.append(f"snap_{i:04d}.json")
    from . import plotting
    run.figure("series", "series", "series.csv",
               lambda p: plotting.series_figure(res.times, {"phi": res.observables["phi"]}, p, "t", "int phi |psi|^2"),
               xcol="t", ycols=["phi"])
    run.check("propagate.mass_drift", drift, tol["propagate.mass_drift"])
    if args.wigner:
        err = prop.wigner_marginal_error(res.field)
        run.check("wigner.marginal", err, tol["wigner.marginal"])
    return {"steps": res.steps, "runtime": res.runtime, "mass_drift": drift}


def _compare_worker(payload):
    cfg_d, eps, a = payload
    cfg = RunConfig(**cfg_d)
    V = cfg.potential_obj()
    vext = VEXT_PRESETS[cfg.vext]
    psi, fib = _initial(cfg, argparse.Namespace(**a), V, eps)
    phi = PHI_PRESETS[cfg.phi](psi.x)
    lo, hi = cfg.window
    dt = cfg.dt or eps ** 2 / 32
    nst = int(np.ceil(hi / dt - 1e-9))
    ec = prop.EvolutionConfig(eps, hi, hi / nst, "bloch_strang", V, vext)
    res = prop.evolve(psi, ec, fib, observables={"phi": phi})
    full = prop.time_average(res.times, res.observables["phi"], lo, hi)
    models = effmass.critical_models(V, a["n_max"], vext)
    profiles = effmass.profiles_for(psi, fib, models)
    pred, _ = effmass.predict_density(profiles, lo, hi, phi, a["predict_dt"])
    return eps, full, pred


def _fan_out(fn, payloads, jobs):
    if jobs <= 1 or len(payloads) == 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, payloads))


def cmd_effmass_compare(run, args):
    cfg = run.cfg
    a = {"xi0": args.xi0, "x0": args.x0, "sigma": args.sigma, "project_band": args.project_band,
         "n_max": args.n_max, "predict_dt": args.predict_dt, "field": None}
    payloads = [(asdict(cfg), float(e), a) for e in cfg.eps_list]
    rows = _fan_out(_compare_worker, payloads, cfg.jobs)
    out = [(e, f, p, abs(f - p)) for e, f, p in rows]
    run.write_csv("convergence.csv", ["eps", "full_value", "predicted", "err"], out)
    from . import plotting
    run.figure("convergence", "convergence", "convergence.csv",
               lambda p: plotting.convergence_figure([r[0] for r in out], [r[3] for r in out], p),
               ycol="err")
    errs = [r[3] for r in sorted(out, key=lambda r: -r[0])]
    mono = all(b < a_ for a_, b in zip(errs, errs[1:]))
    if args.check_trend:
        run.check("effmass.err_strictly_decreasing", errs, None, ok=mono)
    else:
        run.checks["effmass.err_strictly_decreasing"] = {"value": errs, "ok": mono, "enforced": False}
    for r in out:
        print(f"eps={r[0]:.6g} full={r[1]:.10g} predicted={r[2]:.10g} err={r[3]:.3e}")
    return {"monotone": mono}


def _interaction_worker(payload):
    cfg_d, eps, a = payload
    cfg = RunConfig(**cfg_d)
    V = cfg.potential_obj()
    rows = effmass.interaction_offdiagonal(V, a["band"], a["sigma0"], a["xi1"], a["xi2"], [eps], L=cfg.L)
    r = rows[0]
    return r.eps, r.overlap, r.predicted


def cmd_interaction(run, args):
    cfg = run.cfg
    s0 = args.sigma0 if args.sigma0 is not None else args.xi1
    a = {"band": args.band, "sigma0": s0, "xi1": args.xi1, "xi2": args.xi2}
    rows = _fan_out(_interaction_worker, [(asdict(cfg), float(e), a) for e in cfg.eps_list], cfg.jobs)
    run.write_csv("interaction.csv", ["eps", "overlap_re", "overlap_im", "predicted_re", "predicted_im"],
                  [(e, o.real, o.imag, p.real, p.imag) for e, o, p in rows])
    for e, o, p in rows:
        print(f"eps={e:.6g} |overlap|={abs(o):.6e} |predicted|={abs(p):.6e}")
    return {"rows": len(rows)}


COMMANDS = {
    "discriminant": cmd_discriminant, "bands": cmd_bands, "fiber": cmd_fiber,
    "classify": cmd_classify, "normal-form": cmd_normal_form, "decompose": cmd_decompose,
    "evolve": cmd_evolve, "effmass-compare": cmd_effmass_compare,
    "interaction": cmd_interaction, "audit": cmd_audit,
}


# ---- argument parsing --------------------------------------------------------------

def _common(p):
    g = p.add_argument_group("common")
    g.add_argument("--config", help="JSON file with RunConfig fields (CLI flags override it)")
    g.add_argument("--preset", dest="potential", help="potential preset (free, mathieu5), JSON descriptor or file")
    g.add_argument("--dim", type=int, help="dimension for presets (default 1)")
    g.add_argument("--out", help="output directory (default blochlimit-out/<command>)")
    g.add_argument("--seed", type=int, help="seed for randomized checks")
    g.add_argument("--jobs", type=int, help="worker processes for eps sweeps")
    g.add_argument("--no-plots", dest="plots", action="store_false", default=None,
                   help="skip PNG rendering (plot scripts are still written)")
    g.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help="override a tolerance, e.g. --tol grad_tol=1e-5")


def _field_args(p):
    p.add_argument("--L", type=float, help="box length (default 16)")
    p.add_argument("--per-period", type=int, help="grid points per fast period (default 8)")
    p.add_argument("--xi0", type=float, default=0.0, help="carrier quasimomentum of the packet")
    p.add_argument("--x0", type=float, default=0.0, help="packet centre")
    p.add_argument("--sigma", type=float, default=1.0, help="packet width")
    p.add_argument("--project-band", type=int, default=None, help="keep only this Bloch mode of the data")


def build_parser():
    ap = argparse.ArgumentParser(prog="blochlimit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discriminant", help="scan Delta(lam) and Delta'(lam)")
    _common(p)
    p.add_argument("--lam-min", type=float, default=-6.0)
    p.add_argument("--lam-max", type=float, default=60.0)
    p.add_argument("--samples", type=int, default=2001, help="number of lam samples")

    p = sub.add_parser("bands", help="band functions on a quasimomentum grid")
    _common(p)
    p.add_argument("--solver", choices=["hill", "galerkin"], default="hill")
    p.add_argument("--n-bands", type=int, default=6)
    p.add_argument("--points", type=int, default=129, help="xi samples on [-pi, pi] (per axis)")
    p.add_argument("--K", type=int, default=32, help="Galerkin cutoff |k|_inf <= K")

    p = sub.add_parser("fiber", help="one fiber eigenproblem")
    _common(p)
    p.add_argument("--xi", required=True, help="quasimomentum, comma separated for d = 2")
    p.add_argument("--K", type=int, default=32)
    p.add_argument("--n-bands", type=int, default=6)
    p.add_argument("--dump-waves", action="store_true", help="write Bloch-wave coefficients")

    for name, hlp in (("classify", "critical sets, crossings and hypothesis verdicts"),
                      ("audit", "human readable audit of one band")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--band", type=int, default=1)
        p.add_argument("--n-bands", type=int, default=4, help="with --all-bands: classify bands 1..n")
        p.add_argument("--resolution", type=int, default=64, help="grid nodes per axis on [0, 2 pi)")
        p.add_argument("--K", type=int, default=16)
        if name == "classify":
            p.add_argument("--all-bands", action="store_true", help="classify bands 1..n-bands")

    p = sub.add_parser("normal-form", help="lambda and g around a crossing")
    _common(p)
    p.add_argument("--sigma", required=True, help="crossing point, comma separated for d = 2")
    p.add_argument("--band", type=int, default=1)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--neighborhood", type=float, default=None)

    p = sub.add_parser("decompose", help="Bloch mode decomposition of a field")
    _common(p)
    _field_args(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--modes", type=int, default=8, help="number of modes to report")
    p.add_argument("--field", help="input field (.bin with JSON sidecar) instead of a packet")

    p = sub.add_parser("evolve", help="full eps-scaled dynamics")
    _common(p)
    _field_args(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--scheme", choices=list(prop.SCHEMES))
    p.add_argument("--dt", type=float)
    p.add_argument("--tfinal", dest="t_final", type=float)
    p.add_argument("--snap-every", type=int, default=None, help="store a snapshot every k steps")
    p.add_argument("--density-points", type=int, default=512, help="x samples per density row")
    p.add_argument("--phi", help="observable preset (bump, gauss, one)")
    p.add_argument("--vext", help="external potential preset (none, bump, gauss)")
    p.add_argument("--wigner", action="store_true", help="check the Wigner marginal on the final field")
    p.add_argument("--field", help="input field (.bin with JSON sidecar) instead of a packet")

    p = sub.add_parser("effmass-compare", help="full dynamics against the limit models over eps")
    _common(p)
    _field_args(p)
    p.add_argument("--eps-list", help="comma separated eps values")
    p.add_argument("--window", help="time window a,b")
    p.add_argument("--phi", help="observable preset (bump, gauss, one)")
    p.add_argument("--vext", help="external potential preset (none, bump, gauss)")
    p.add_argument("--dt", type=float, help="full-dynamics step (default eps^2/32)")
    p.add_argument("--predict-dt", type=float, default=1e-3)
    p.add_argument("--n-max", type=int, default=6, help="bands searched for critical points")
    p.add_argument("--check-trend", action="store_true", help="exit 3 unless err(eps) strictly decreases")

    p = sub.add_parser("interaction", help="band n / n+1 coherence of well-prepared data")
    _common(p)
    p.add_argument("--L", type=float)
    p.add_argument("--band", type=int, default=1)
    p.add_argument("--xi1", type=float, required=True)
    p.add_argument("--xi2", type=float, required=True)
    p.add_argument("--sigma0", type=float, default=None, help="demodulation point (default xi1)")
    p.add_argument("--eps-list", help="comma separated eps values")
    return ap


CONFIG_KEYS = {f for f in RunConfig.__dataclass_fields__}


def make_config(args):
    base = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
        unknown = set(base) - CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
    for k in CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            base[k] = v
    if "eps_list" in base:
        base["eps_list"] = _floats(base["eps_list"])
    if "window" in base:
        base["window"] = _floats(base["window"])
    tol = dict(base.get("tolerances", {}))
    for item in getattr(args, "tol", []) or []:
        k, _, v = item.partition("=")
        if not v:
            raise ValueError(f"--tol expects NAME=VALUE, got {item!r}")
        tol[k.strip()] = float(v)
    base["tolerances"] = tol
    return RunConfig(**base).validate()


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = make_config(args)
        cfg.potential_obj()
    except INVALID_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    np.random.seed(cfg.seed)
    run = Run(args.command, cfg)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            info = COMMANDS[args.command](run, args)
        run.notes += [str(w.message) for w in caught]
    except NUMERIC_ERRORS as exc:
        name = getattr(exc, "name", type(exc).__name__)
        run.manifest("FAILED", {"invariant": name, "message": str(exc), "exit": EXIT_NUMERIC})
        print(f"FAILED invariant {name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except INVALID_ERRORS as exc:
        run.manifest("FAILED", {"invariant": "validation", "message": str(exc), "exit": EXIT_INVALID})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    m = run.manifest("OK")
    m_info = ", ".join(f"{k}={v}" for k, v in (info or {}).items())
    print(f"{args.command}: ok ({m_info}) -> {run.dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
