"""Command-line entry point: ``cknlab <subcommand> [--config FILE] [--key value ...]``.

Every configuration key doubles as a flag (``--grid.N 64``). Exit status is
0 on success, 1 on a module error or a failed self-test, 2 on an invalid
configuration.
"""

from __future__ import annotations

import argparse
import glob
import logging
import math
import os
import sys

import numpy as np

from . import ckn_operators as ops
from . import hausdorff as hd
from . import inequality_lab as il
from . import renorm_map as rm
from .config import SCHEMA, ConfigError, RunConfig, load_config, parse_override
from .io import load_snapshot_with_header, save_snapshot
from .leray_solver import FluidParams, Trajectory, apriori_check, energy_balance_defect, simulate
from .presets import abc_field, beltrami_shell2
from .reports import Report
from .torus_field import make_grid, power_law_spectrum, sample_random_field

log = logging.getLogger("cknlab")

SUBCOMMANDS = ("simulate", "diagnose", "scan", "renorm", "dimension", "verify", "cantor", "pipeline")
SCALE_COLUMNS = ["n", "r_n", "A", "delta", "G", "J", "K", "S", "alpha", "kappa", "j", "g"]


class SelfTestFailure(RuntimeError):
    pass


# --- shared builders ------------------------------------------------------

def initial_field(cfg: RunConfig, grid=None):
    grid = grid or make_grid(cfg["grid.N"], cfg["grid.L"])
    kind = cfg["init.kind"]
    if kind == "random":
        spec = power_law_spectrum(cfg["init.amplitude"], cfg["init.exponent"], cfg["init.cutoff"])
        return sample_random_field(grid, spec, cfg["init.seed"])
    if kind == "beltrami":
        return beltrami_shell2(grid, cfg["init.amplitude"], cfg["init.seed"])
    if kind == "abc":
        a = cfg["init.amplitude"]
        return abc_field(grid, a, a, a)
    snap, _ = load_snapshot_with_header(cfg["init.path"])
    return snap.u


def run_simulation(cfg: RunConfig) -> Trajectory:
    u0 = initial_field(cfg)
    params = FluidParams(cfg["fluid.nu"], u0.grid, cfg["fluid.lam"])
    return simulate(u0, cfg["stepper.T"], cfg["stepper.dt"], params, cfg["stepper.stride"])


def load_trajectory(directory: str, cfg: RunConfig) -> Trajectory:
    paths = sorted(glob.glob(os.path.join(directory, "*.ckn")))
    if not paths:
        raise ValueError(f"no snapshot files in {directory}")
    loaded = [load_snapshot_with_header(p) for p in paths]
    loaded.sort(key=lambda sh: sh[0].t)
    nus = {h.nu for _, h in loaded}
    if len(nus) != 1:
        raise ValueError("snapshots disagree on viscosity")
    grid = loaded[0][0].u.grid
    return Trajectory(FluidParams(nus.pop(), grid, cfg["fluid.lam"]), [s for s, _ in loaded])


def trajectory_for(cfg: RunConfig, args) -> Trajectory:
    if getattr(args, "snapshots", None):
        return load_trajectory(args.snapshots, cfg)
    return run_simulation(cfg)


# --- subcommands ----------------------------------------------------------

def cmd_simulate(cfg: RunConfig, args, tr: Trajectory | None = None) -> list[Report]:
    tr = tr or run_simulation(cfg)
    out = cfg["io.out"]
    snap_dir = os.path.join(out, "snapshots")
    for i, s in enumerate(tr.snapshots):
        save_snapshot(s, os.path.join(snap_dir, f"snap_{i:06d}.ckn"), tr.nu)
    rep = Report("simulate", cfg.hash)
    t = rep.table("series", ["t", "energy", "enstrophy", "dissipation_integral"], ["time", "L^5/T^2", "L^3/T^2", "L^3/T"])
    for row in zip(*(tr.series[k] for k in ("t", "energy", "enstrophy", "dissipation_integral"))):
        t.add(*(float(v) for v in row))
    ap = apriori_check(tr)
    rep.summary = {
        "snapshots": len(tr.snapshots), "snapshot_dir": snap_dir, "E0": ap.E0,
        "max_energy_excess": ap.max_energy_excess, "dissipation_integral": ap.dissipation_integral,
        "dissipation_bound": ap.dissipation_bound, "apriori_passed": ap.passed,
        "energy_balance_defect": energy_balance_defect(tr),
    }
    return [rep]


def cmd_diagnose(cfg: RunConfig, args, tr: Trajectory | None = None) -> list[Report]:
    tr = tr or trajectory_for(cfg, args)
    quad = ops.quadrature_for(tr, cfg["scan.oversample"])
    n_min = cfg["scan.n_min"] or ops.min_resolved_index(quad.grid)
    t0 = cfg["diagnose.t0"] or tr.span[1]
    chain = ops.scale_chain(tr, cfg["diagnose.x0"], t0, n_min, cfg["scan.window"], quad)
    rep = Report("diagnose", cfg.hash)
    t = rep.table("chain", SCALE_COLUMNS, ["1", "length"] + ["1"] * 10)
    for i, d in enumerate(chain):
        v = ops.to_scale_vector(d)
        t.add(-i, d.r, d.A, d.delta, d.G, d.J, d.K, d.S, v.alpha, v.kappa, v.j, v.g)
    rep.summary = {"x0": list(cfg["diagnose.x0"]), "t0": t0, "window": cfg["scan.window"],
                   "n_min": n_min, "finest_delta": chain[-1].delta}
    return [rep]


def _scan(cfg: RunConfig, tr: Trajectory) -> ops.FlaggedSet:
    quad = ops.quadrature_for(tr, cfg["scan.oversample"])
    return ops.scan_singular_candidates(
        tr, cfg["scan.eps"], n_min=cfg["scan.n_min"] or None,
        spacing_x=cfg["scan.spacing_x"] or None, spacing_t=cfg["scan.spacing_t"] or None,
        window=cfg["scan.window"], tail=cfg["scan.tail"], quad=quad)


def _scan_report(cfg: RunConfig, fs: ops.FlaggedSet) -> Report:
    rep = Report("scan", cfg.hash)
    t = rep.table("flagged", ["t0", "x", "y", "z", "estimate", "smallest_scale"],
                  ["time", "length", "length", "length", "1", "length"])
    for p in fs.points:
        t.add(p.t0, *p.x0, p.estimate, p.smallest_scale)
    s = rep.table("scales", ["r_n", "max_delta"], ["length", "1"])
    for k, r in enumerate(fs.scales):
        s.add(r, float(fs.deltas[:, k].max()))
    rep.summary = {"eps": fs.eps, "probed": fs.probed, "flagged": len(fs), "window": fs.window,
                   "scales": list(fs.scales),
                   "flagged_points": [{"t0": p.t0, "x0": list(p.x0), "estimate": p.estimate} for p in fs.points]}
    return rep


def cmd_scan(cfg: RunConfig, args, tr: Trajectory | None = None) -> list[Report]:
    tr = tr or trajectory_for(cfg, args)
    return [_scan_report(cfg, _scan(cfg, tr))]


def cmd_renorm(cfg: RunConfig, args) -> list[Report]:
    rc = rm.RenormConfig(p=cfg["renorm.p"], C=cfg["renorm.C"], rho=cfg["renorm.rho"], k_max=cfg["renorm.k_max"])
    delta = cfg["renorm.delta"]
    net = rm.ball_net(cfg["renorm.net_radius"], cfg["renorm.net_points"])
    steps = rm.steps_to_ball(net, delta, rc)
    rep = Report("renorm", cfg.hash)
    worst = int(np.argmax(np.where(steps < 0, np.iinfo(int).max, steps)))
    trace = rm.iterate_to_ball(rm.ScaleVector.from_array(net[worst]), delta, rc)
    t = rep.table("trace", ["k", "alpha", "kappa", "j", "g", "size"], ["1"] * 6)
    for k, X in enumerate(trace.iterates):
        t.add(k, X.alpha, X.kappa, X.j, X.g, X.size)
    try:
        thr = rm.contraction_threshold(rc, cfg["renorm.delta_lo"], cfg["renorm.delta_hi"], net)
    except rm.SearchRangeError as e:
        thr = float("nan")
        log.warning("%s", e)
    maj = rm.majorant_matrix(delta, rc)
    rep.summary = {
        "p": rc.p, "C": rc.C, "rho": rc.rho, "delta": delta, "net_points": int(net.shape[0]),
        "all_entered": bool(np.all(steps >= 0)), "max_steps": int(steps.max()),
        "worst_start": net[worst].tolist(), "threshold": thr,
        "majorant_eigenvalues": [abs(complex(e)) for e in maj.eigenvalues],
        "majorant_spectral_radius": maj.spectral_radius,
    }
    return [rep]


def read_items(path: str) -> list[hd.CoverItem]:
    """Rows: center coordinates..., radius, shape tag (ball | parabolic)."""
    items = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                nums = [float(x) for x in parts[:-1]]
            except ValueError:
                if lineno == 1 or not items:
                    continue  # column-name header
                raise ValueError(f"{path}:{lineno}: malformed row") from None
            if len(nums) < 2:
                raise ValueError(f"{path}:{lineno}: need center coordinates and a radius")
            *center, r = nums
            shape = parts[-1]
            items.append(hd.CoverItem(tuple(center), r, shape,
                                      space_dims=max(1, len(center) - 1)) if shape == hd.PARABOLIC
                         else hd.CoverItem(tuple(center), r, shape))
    if not items:
        raise ValueError(f"{path}: no items")
    return items


def cmd_dimension(cfg: RunConfig, args, tr: Trajectory | None = None,
                  flagged: ops.FlaggedSet | None = None) -> list[Report]:
    rep = Report("dimension", cfg.hash)
    if cfg["dimension.points"] and flagged is None:
        items = read_items(cfg["dimension.points"])
        radii = sorted({it.radius for it in items}, reverse=True)
        covers = [hd.CoveringFamily([it for it in items if it.radius == r]) for r in radii]
        alphas = np.round(np.arange(0.0, 3.0 + 1e-9, 0.05), 10)
        t = rep.table("sums", ["alpha"] + [f"level{i}" for i in range(len(covers))], ["1"] * (len(covers) + 1))
        for a in alphas:
            t.add(float(a), *(hd.hausdorff_sum(c, float(a)) for c in covers))
        rep.summary = {"items": len(items), "levels": len(covers)}
        if len(covers) >= cfg["dimension.levels"]:
            est = hd.estimate_dimension(covers, levels=cfg["dimension.levels"])
            rep.summary.update(alpha_c=est.alpha_c, measure_at_critical=est.measure_at_critical)
        return [rep]
    tr = tr or trajectory_for(cfg, args)
    fs = flagged if flagged is not None else _scan(cfg, tr)
    res = hd.spacetime_cover_bound(fs, tr, cfg["scan.eps"])
    t = rep.table("cover", ["t", "x", "y", "z", "radius"], ["time", "length", "length", "length", "length"])
    if res.family is not None:
        for it in res.family.items:
            t.add(it.center[3], *it.center[:3], it.radius)
    times, R2 = hd.reynolds_trace(tr)
    an = hd.SingularTimeAnalysis(times, R2)
    span = tr.span[1] - tr.span[0]
    st = hd.singular_time_scan(an, span * 2.0 ** -np.arange(1, 8))
    rep.summary = {"flagged": len(fs), "selected": 0 if res.family is None else len(res.family),
                   "sum_18r": res.lhs, "bound": res.rhs, "holds": res.holds,
                   "singular_times_flagged": int(st.flagged_times.size),
                   "singular_time_sum": st.covering_sum, "singular_time_bound": st.bound_consistent}
    return [rep]


def cmd_verify(cfg: RunConfig, args) -> list[Report]:
    rep = Report("verify", cfg.hash)
    t = rep.table("ratios", ["inequality", "exponent", "max_ratio", "N"], ["-", "1", "1", "1"])
    total = il.InequalityConstants()
    L = cfg["grid.L"]
    spec = power_law_spectrum(cfg["init.amplitude"], cfg["init.exponent"], cfg["init.cutoff"])
    for N in cfg["ensemble.N"]:
        g = make_grid(N, L)
        fields = [sample_random_field(g, spec, s) for s in cfg["ensemble.seeds"]]
        c = il.fit_field_constants(fields, label=f"N={N}")
        for table, name in (("CP", "poincare"), ("CS", "sobolev"), ("CL", "calderon_zygmund")):
            for key, v in sorted(getattr(c, table).items()):
                t.add(name, key, v, N)
        total = total.merge(c)
    rng = np.random.default_rng(cfg["init.seed"])
    worst = 0.0
    for _ in range(cfg["verify.holder_trials"]):
        n = int(rng.integers(2, 5))
        w = rng.dirichlet(np.ones(n))
        fs = [rng.standard_normal(64) for _ in range(n)]
        worst = max(worst, il.check_holder(fs, list(1.0 / w)))
    t.add("holder", "random", worst, 0)
    heat = []
    for frac in (0.25, 0.125):
        r = frac * L
        hk = il.verify_heat_kernel_bounds(il.TestFunctionSpec((0.0, 0.0, 0.0), 1.0, r, cfg["fluid.nu"]))
        t.add("heat_kernel_C", f"r=L*{frac}", hk.C, 0)
        heat.append(hk)
    total.provenance = {"seeds": cfg["ensemble.seeds"], "N": cfg["ensemble.N"], "config_hash": cfg.hash}
    path = os.path.join(cfg["io.out"], "constants.json")
    total.save(path)
    rep.summary = {"constants_file": path, "holder_max_ratio": worst,
                   "heat_kernel_C": [h.C for h in heat],
                   "heat_identity_max": max(h.inner_identity_max for h in heat),
                   "Cprop1": total.Cprop1 if "10/3" in total.CS and "5/3" in total.CL else None}
    return [rep]


def cmd_cantor(cfg: RunConfig, args) -> list[Report]:
    lo, hi = cfg["cantor.min_generation"], cfg["cantor.max_generation"]
    covers = [hd.cantor_cover(n) for n in range(lo, hi + 1)]
    est = hd.estimate_dimension(covers, levels=min(cfg["dimension.levels"], len(covers)))
    target = math.log(2) / math.log(3)
    rep = Report("cantor", cfg.hash)
    t = rep.table("generations", ["n", "delta", "sum_at_log3_2"], ["1", "length", "1"])
    worst = 0.0
    for n, c, d in zip(range(lo, hi + 1), covers, est.deltas):
        s = hd.hausdorff_sum(c, target)
        worst = max(worst, abs(s - 1.0))
        t.add(n, float(d), s)
    passed = 0.60 <= est.alpha_c <= 0.66 and worst <= 1e-12
    rep.summary = {"alpha_c": est.alpha_c, "log3_2": target, "max_sum_error": worst, "passed": passed}
    if not passed:
        rep.write(cfg["io.out"])
        raise SelfTestFailure(f"Cantor self-test failed: alpha_c={est.alpha_c:.6f}, sum error {worst:.2e}")
    return [rep]


def cmd_pipeline(cfg: RunConfig, args) -> list[Report]:
    tr = trajectory_for(cfg, args)
    reports = cmd_simulate(cfg, args, tr) if not getattr(args, "snapshots", None) else []
    reports += cmd_diagnose(cfg, args, tr)
    fs = _scan(cfg, tr)
    reports.append(_scan_report(cfg, fs))
    reports += cmd_dimension(cfg, args, tr, flagged=fs)
    return reports


COMMANDS = {
    "simulate": cmd_simulate, "diagnose": cmd_diagnose, "scan": cmd_scan, "renorm": cmd_renorm,
    "dimension": cmd_dimension, "verify": cmd_verify, "cantor": cmd_cantor, "pipeline": cmd_pipeline,
}


# --- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cknlab", description="Leray-regularized Navier-Stokes diagnostics lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", ""))
        p.add_argument("--config", help="flat JSON configuration file")
        p.add_argument("--out", help="output directory (same as --io.out)")
        if name in ("diagnose", "scan", "dimension", "pipeline"):
            p.add_argument("--snapshots", help="directory of snapshot files to analyse instead of simulating")
        for key in SCHEMA:
            p.add_argument(f"--{key.name}", dest=f"key:{key.name}", metavar="VALUE", help=key.doc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for dest, value in vars(args).items():
        if dest.startswith("key:") and value is not None:
            name = dest[4:]
            overrides[name] = parse_override(name, value)
    if args.out:
        overrides["io.out"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 2
    try:
        reports = COMMANDS[args.command](cfg, args)
        for rep in reports:
            for path in rep.write(cfg["io.out"]):
                print(path)
    except SelfTestFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, ArithmeticError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
