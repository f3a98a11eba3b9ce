"""``seqrpf <kind> --config <path> [--out <dir>] [--seed <n>] [--jobs <n>]``.

Exit status: 0 on success, 1 when a module raised, 2 on config errors.
Runners only move module outputs into tables; no arithmetic happens here.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import clt, deviations, distributions, environments, gibbs, moments, rpf
from .config import ExperimentConfig, load_config
from .errors import ConfigError, SeqRpfError
from .reports import RunManifest, Table, emit_plots, versions, write_csv, write_summary

log = logging.getLogger("seqrpf")


def _grid(cfg: ExperimentConfig, key: str, default):
    return cfg.grids.get(key, default)


def _pmap(fn, items, jobs: int):
    """Order-preserving map, parallel across processes when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _complex_grid(values):
    return [complex(v) if not isinstance(v, (list, tuple)) else complex(v[0], v[1]) for v in values]


# ---------------------------------------------------------------------------------
# Runners: each returns (tables, summary, seeds, warnings)
# ---------------------------------------------------------------------------------


def run_rpf(cfg, jobs):
    spec = cfg.system
    n = int(cfg.params.get("horizon", rpf.DEFAULT_HORIZON))
    tol = float(cfg.tolerances.get("residual", 1e-8))
    D = spec.d_max
    trip = Table(["j", "z_re", "z_im", "lambda_re", "lambda_im", "eigen_residual", "duality_residual", "n_used"]
                 + [f"h_{a}" for a in range(D)] + [f"nu_{a}" for a in range(D)])
    for z in _complex_grid(_grid(cfg, "z", [0.0])):
        fam = rpf.solve_family(spec, z, n=n, tol=tol)
        for k, j in enumerate(fam.indices):
            trip.rows.append([int(j), z.real, z.imag, fam.lam[k].real, fam.lam[k].imag, fam.eigen_residual[k], fam.duality_residual[k], fam.n_used]
                             + list(fam.h_at(j).real) + list(fam.nu_at(j).real))
    horizons = _grid(cfg, "horizons", list(range(2, 26)))
    fit = rpf.convergence_rate_fit(spec, int(_grid(cfg, "j", spec.window[0])), horizons=horizons)
    res = Table(["horizon", "residual"], [[int(h), r] for h, r in zip(fit.horizons, fit.residuals)])
    summary = {"slope": fit.slope, "delta": fit.delta, "r_squared": fit.r_squared, "floor": fit.floor}
    return {"triplets": trip, "residuals": res}, summary, [], []


def run_stability(cfg, jobs):
    rows = rpf.stability_sweep(cfg.system, _grid(cfg, "deltas", [1e-1, 1e-2, 1e-3]), seed=cfg.seed)
    t = Table(["delta", "lambda", "h", "nu"], [[r["delta"], r["lambda"], r["h"], r["nu"]] for r in rows])
    return {"stability": t}, {"rows": rows}, [cfg.seed], []


def run_gibbs(cfg, jobs):
    fam = gibbs.build_gibbs(cfg.system)
    D = cfg.system.d_max
    t = Table(["j"] + [f"m_{a}" for a in range(D)], [[int(j)] + list(fam.marginal(j)) for j in fam.indices])
    lo, hi = gibbs.gibbs_band(fam, fam.indices, int(cfg.params.get("r_max", 8)))
    return {"marginals": t}, {"band_lo": lo, "band_hi": hi}, [], []


def run_mixing(cfg, jobs):
    fam = gibbs.build_gibbs(cfg.system)
    rep = gibbs.psi_mixing_report(fam, int(cfg.params.get("r_max", 1)), _grid(cfg, "n", list(range(1, 21))))
    t = Table(["n", "psi"], [[int(n), p] for n, p in zip(rep.n_values, rep.psi)])
    return {"psi": t}, {"C": rep.C, "delta": rep.delta}, [], []


def run_moments(cfg, jobs):
    k_max = int(_grid(cfg, "k_max", 4))
    rep = moments.moments_report(cfg.system, int(_grid(cfg, "j", 0)), _grid(cfg, "n", [64, 256, 1024, 4096]), k_max)
    t = Table(["n", "k", "gamma", "predicted", "gap", "gap_self"])
    for k in sorted(rep.gap):
        for i, n in enumerate(rep.n_values):
            t.rows.append([int(n), k, rep.gamma[k][i], rep.predicted[k][i], rep.gap[k][i], rep.gap_self[k][i]])
    return {"moments": t}, {"slopes": rep.slopes, "constants": rep.constants}, [], []


def run_variance(cfg, jobs):
    vg = moments.variance_growth(cfg.system, _grid(cfg, "n", [16, 32, 64, 128, 256, 512]))
    t = Table(["n", "var", "var_over_n"], [[int(n), v, r] for n, v, r in zip(vg["n"], vg["var"], vg["var_over_n"])])
    summary = {k: vg[k] for k in ("sup_var", "slope", "classification")}
    return {"variance": t}, summary, [], []


def run_berry_esseen(cfg, jobs):
    rep = clt.berry_esseen_report(cfg.system, _grid(cfg, "n", [64, 256, 1024, 4096]), int(_grid(cfg, "j", 0)), seed=cfg.seed)
    t = Table(["n", "sigma", "D_n", "sqrt_n_D_n", "esseen"],
              [[int(n), s, d, sc, e] for n, s, d, sc, e in zip(rep.n_values, rep.sigma, rep.distance, rep.scaled, rep.esseen)])
    return {"distances": t}, {"constant": rep.constant, "band_ratio": rep.band_ratio, "degenerate": rep.degenerate}, [cfg.seed], []


def run_llt(cfg, jobs):
    tol = cfg.tolerances
    rep = clt.llt_report(cfg.system, _grid(cfg, "n", [128, 256, 512, 1024]), int(_grid(cfg, "j", 0)),
                         c0=float(tol.get("c0", 1e-3)), slack=float(tol.get("slack", 0.1)))
    tables = {"llt": Table(["n", "sigma", "gap"], [[int(n), s, g] for n, s, g in zip(rep.n_values, rep.sigma, rep.gap)])}
    if "t_interval" in cfg.grids:
        rows = clt.cf_decay_scan(cfg.system, tuple(cfg.grids["t_interval"]), rep.n_values)
        tables["cf_decay"] = Table(["n", "sup_ratio", "scaled"], [[r["n"], r["sup_ratio"], r["scaled"]] for r in rows])
    return tables, {"h": rep.h, "monotone": rep.monotone, "slack": rep.slack}, [], []


def run_concentration(cfg, jobs):
    t = Table(["n", "t", "tail", "bound", "azuma"])
    summary = {}
    for n in _grid(cfg, "n", [64, 256, 1024]):
        rep = moments.concentration_report(cfg.system, int(n), points=int(_grid(cfg, "points", 50)))
        for k in range(rep.t_grid.size):
            t.rows.append([int(n), rep.t_grid[k], rep.tails[k], rep.bound[k], rep.azuma_bound[k]])
        summary[str(n)] = {"C": rep.C, "C1": rep.C1, "violations": rep.violations}
    return {"concentration": t}, summary, [], []


def run_cumulants(cfg, jobs):
    k_max = int(_grid(cfg, "k_max", 6))
    rep = moments.cumulant_report(cfg.system, k_max, _grid(cfg, "n", [256, 512, 1024, 2048, 4096]))
    t = Table(["n"] + [f"Gamma_{k}" for k in range(2, k_max + 1)],
              [[int(n)] + list(rep.cumulants[i, 2:]) for i, n in enumerate(rep.n_values)])
    return {"cumulants": t}, {"variation": rep.variation[2:], "c0": rep.c0, "radius": rep.radius}, [], []


def run_ldp(cfg, jobs):
    g = cfg.grids
    rep = deviations.ldp_report(cfg.system, delta=g.get("delta"), t_grid=g.get("t"), n_list=g.get("n", (256, 1024, 4096)),
                                x=g.get("x"), eps=g.get("eps"))
    rate = Table(["t", "rate", "maximizer", "at_edge"],
                 [[t, r, s, e] for t, r, s, e in zip(rep.t_grid, rep.rate, rep.maximizers, rep.out_of_range)])
    press = Table(["s", "pi"], [[s, p] for s, p in zip(rep.s_grid, rep.pi_values)])
    gaps = Table(["n", "local_gap", "md_a_gap", "md_b_gap"],
                 [[int(n), a, b, c] for n, a, b, c in zip(rep.n_values, rep.local_gap, rep.md_a_gap, rep.md_b_gap)])
    summary = {"delta": rep.delta, "duality_error": rep.duality_error, "non_convex": rep.non_convex, "sigma2": rep.sigma2,
               "limit_gaps": rep.limit_gaps, "x": rep.x, "eps": rep.eps}
    return {"rate": rate, "pressure": press, "deviation_gaps": gaps}, summary, [], []


def run_env_mixing(cfg, jobs):
    rep = environments.phi_mixing_exact(cfg.environment.driver, _grid(cfg, "n", list(range(1, 17))))
    t = Table(["n", "phi", "partial_sum"], [[int(n), p, s] for n, p, s in zip(rep.n_values, rep.phi, rep.partial_sums)])
    return {"phi": t}, {}, [], []


def run_env_propgrowth(cfg, jobs):
    s = int(_grid(cfg, "s", 1))
    rows = environments.propgrowth_report(cfg.environment, s, _grid(cfg, "n", [16, 64, 256, 1024]))
    t = Table(["n", "sum", "ratio"], [[r["n"], r["sum"], r["ratio"]] for r in rows])
    summary = {"compliant": bool(rows[-1]["sum"] > 0 and rows[-1]["ratio"] > rows[0]["ratio"])}
    if "mc_samples" in cfg.params:
        mc_n = int(cfg.params.get("mc_n", rows[-1]["n"]))
        est, se = environments.propgrowth_monte_carlo(cfg.environment, s, mc_n, int(cfg.params["mc_samples"]), cfg.seed)
        exact = environments.propgrowth_report(cfg.environment, s, [mc_n])[0]["sum"]
        summary.update({"mc_n": mc_n, "mc_estimate": est, "mc_stderr": se, "mc_exact": exact})
    return {"propgrowth": t}, summary, [cfg.seed], []


def _env_llt_task(args):
    env, seed, J, s, d0, n_list, run_llt = args
    return environments.env_llt_pipeline(env, seed, J, s, d0, n_list, run_llt=run_llt)


def run_env_llt(cfg, jobs):
    g = cfg.grids
    seeds = sorted(int(x) for x in g.get("seeds", [cfg.seed]))
    J = tuple(g.get("t_interval", (np.pi / 2, 3 * np.pi / 2)))
    args = [(cfg.environment, sd, J, int(g.get("s", 1)), float(g.get("delta_0", 0.2)), g.get("n", [256, 512, 1024]),
             bool(cfg.params.get("llt", True))) for sd in seeds]
    results = _pmap(_env_llt_task, args, jobs)
    blocks = Table(["seed", "n", "log_n", "count", "per_log", "pattern_hits"])
    radius = Table(["t", "spectral_radius"], [[t, r] for t, r in zip(results[0].t_grid, results[0].spectral_radius)])
    llt = Table(["seed", "n", "sigma", "gap"])
    summary = {}
    for r in results:
        for i, n in enumerate(r.n_values):
            blocks.rows.append([r.seed, int(n), float(np.log(n)), int(r.block_counts[i]), r.counts_per_log[i], int(r.pattern_hits[i])])
        if r.llt is not None:
            for n, s, gp in zip(r.llt.n_values, r.llt.sigma, r.llt.gap):
                llt.rows.append([r.seed, int(n), s, gp])
        summary[str(r.seed)] = {"compliant": r.compliant, "superlog": r.superlog,
                                "llt_monotone": None if r.llt is None else r.llt.monotone}
    return {"blocks": blocks, "spectral_radius": radius, "llt": llt}, summary, seeds, []


def run_env_concentration(cfg, jobs):
    g = cfg.grids
    seeds = g.get("seeds", list(range(64)))
    zs = _grid(cfg, "z", [0.2])
    rep = environments.pressure_concentration_report(cfg.environment, zs, seeds, g.get("n", [64, 128, 256, 512, 1024]))
    t = Table(["z", "n", "deviation"])
    for zi, z in enumerate(zs):
        for i, n in enumerate(rep["n"]):
            t.rows.append([z, int(n), rep["deviation"][zi, i]])
    loc = environments.locality_check(cfg.environment, rep["seeds"][0], zs[0], int(cfg.params.get("locality_j", 16)),
                                      int(cfg.params.get("locality_n", 2 * rpf.DEFAULT_HORIZON)))
    return {"deviation": t}, {"exponent": rep["exponent"], "locality_gap": loc}, rep["seeds"], []


def run_env_deterministic_h(cfg, jobs):
    seeds = _grid(cfg, "seeds", list(range(8)))
    rep = environments.deterministic_h_check(cfg.environment, seeds, measure=cfg.params.get("measure"))
    return {}, rep, sorted(seeds), []


RUNNERS = {
    "rpf": (run_rpf, "system", {"horizon"}),
    "stability": (run_stability, "system", set()),
    "gibbs": (run_gibbs, "system", {"r_max"}),
    "mixing": (run_mixing, "system", {"r_max"}),
    "moments": (run_moments, "system", set()),
    "variance": (run_variance, "system", set()),
    "berry-esseen": (run_berry_esseen, "system", set()),
    "llt": (run_llt, "system", set()),
    "concentration": (run_concentration, "system", set()),
    "cumulants": (run_cumulants, "system", set()),
    "ldp": (run_ldp, "system", set()),
    "env-mixing": (run_env_mixing, "environment", set()),
    "env-propgrowth": (run_env_propgrowth, "environment", {"mc_samples", "mc_n"}),
    "env-llt": (run_env_llt, "environment", {"llt"}),
    "env-concentration": (run_env_concentration, "environment", {"locality_j", "locality_n"}),
    "env-deterministic-h": (run_env_deterministic_h, "environment", {"measure"}),
}


def run_experiment(kind: str, config_path, out=None, seed=None, jobs: int = 1, plots: bool = True) -> RunManifest:
    """Validate, run, and persist one experiment.  Raises ConfigError or a module error."""
    if kind not in RUNNERS:
        raise ConfigError(f"unknown kind {kind!r}")
    fn, needs, params = RUNNERS[kind]
    cfg = load_config(config_path, kind=kind, param_keys=params, needs=needs)
    if seed is not None:
        cfg = ExperimentConfig(cfg.kind, int(seed), {**cfg.raw, "seed": int(seed)}, cfg.system, cfg.environment,
                               cfg.grids, cfg.tolerances, cfg.params, cfg.out)
    out = Path(out or cfg.out or f"runs/{kind}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    tables, summary, seeds, warnings = fn(cfg, jobs)
    files = [write_csv(out / f"{name}.csv", t) for name, t in sorted(tables.items())]
    files.append(write_summary(out / "summary.json", {"kind": kind, "seed": cfg.seed, **summary}))
    if plots:
        svgs, w = emit_plots(tables, out)
        files += svgs
        warnings += w
    manifest = RunManifest(kind, cfg.hash, seeds or [cfg.seed], versions(), time.perf_counter() - t0,
                           sorted(p.name for p in files) + ["manifest.json"], warnings, "ok")
    manifest.write(out / "manifest.json")
    return manifest


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="seqrpf")
    ap.add_argument("kind", choices=sorted(RUNNERS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        m = run_experiment(args.kind, args.config, args.out, args.seed, args.jobs, not args.no_plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SeqRpfError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    log.info("wrote %d files (%.2fs)", len(m.files), m.wall_clock)
    return 0


if __name__ == "__main__":
    sys.exit(main())
