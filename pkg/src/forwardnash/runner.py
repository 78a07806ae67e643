"""Scenario pipeline: simulate, verify, and emit figure grids from one config.

A run directory gets a manifest.json (config hash, seed, versions, backend,
verdict summary) plus CSV/JSON outputs. Exit semantics: 0 iff every
non-skipped verification passed.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__, kernels
from .config import TASK_NAMES, ConfigError, ScenarioConfig, load_scenario
from .crra import CompetitorAggregates
from .figures import default_figure_specs, emit_figure
from .meanfield import (gamma_asymptotics, kappa_c0, kappa_coefficients,
                        mf_consumption_simulate, mf_mean_consumption,
                        simulate_kappa_terminal)
from .nplayer import simulate_nash_consumption
from .population import (AgentSampler, Population, Power, TimeGrid,
                         sample_population, uniform_alpha)
from .sde import generate_bundle
from .verify import (MartingaleScenario, Optimal, Perturbed, ResidualReport,
                     compatibility_residual, explicit_vs_euler, extinction_probe,
                     ks_gamma_test, martingale_residual)

log = logging.getLogger("forwardnash.runner")


@dataclass(frozen=True)
class RunResult:
    run_dir: Path
    reports: tuple
    files: tuple
    exit_code: int


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _report_dict(name: str, rep: ResidualReport) -> dict:
    return _jsonable({"name": name, "statistic": rep.statistic,
                      "mc_std_error": rep.mc_std_error, "n_paths": rep.n_paths,
                      "verdict": rep.verdict, "metadata": rep.metadata})


def _write_csv(path: Path, header, columns):
    rows = np.column_stack(columns)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def _simulate_step(cfg: ScenarioConfig, run_dir: Path, seed: int) -> list:
    if cfg.grid is None:
        raise ConfigError("grid: simulate step needs a [grid] table")
    pop = cfg.population()
    bundle = generate_bundle(cfg.grid, pop.n, seed)
    files = []
    if cfg.kind == "nplayer":
        sim = simulate_nash_consumption(pop, bundle)
        path = run_dir / "equilibrium_paths.csv"
        header = ["t", "c_tilde"] + [f"c_{i}" for i in range(pop.n)] + ["interaction"]
        _write_csv(path, header, [sim.times, sim.c_tilde, *sim.c, sim.interaction])
        files.append(path)
        log.info("nplayer simulate: positivity_ok=%s interaction_max=%.3g",
                 sim.positivity_ok, sim.interaction_max)
    else:
        sim = mf_consumption_simulate(pop, bundle)
        cbar, resid = mf_mean_consumption(pop, np.log(sim.c), sim.log_y) \
            if pop.n >= 2 else (sim.cbar, None)
        path = run_dir / "equilibrium_paths.csv"
        header = ["t", "c_bar"] + [f"c_{i}" for i in range(pop.n)]
        _write_csv(path, header, [sim.times, cbar, *sim.c])
        files.append(path)
        if resid is not None:
            log.info("meanfield simulate: mean-consumption identity residual %.3g", resid)
    return files


def _agg_from_options(opts: dict) -> CompetitorAggregates:
    return CompetitorAggregates(
        sigma_pi_bar=float(opts.get("sigma_pi_bar", 0.0)),
        c_bar=float(opts.get("c_bar", 0.0)),
        c_tilde=float(opts.get("c_tilde", 1.0)),
        mu_pi_bar=float(opts.get("mu_pi_bar", 0.0)),
        Sigma_pi_sq_bar=float(opts.get("sigma_pi_sq_bar", 0.0)),
        nu_pi_sq_bar=float(opts.get("nu_pi_sq_bar", 0.0)),
    )


def _task_martingale(cfg, opts, seed):
    agent = cfg.agents[0]
    scn = MartingaleScenario(cfg.name, agent, _agg_from_options(opts),
                             x0=float(opts.get("x0", agent.x0)))
    n_paths = int(opts.get("n_paths", cfg.n_paths))
    grid = cfg.grid
    out = [("martingale_optimal",
            martingale_residual(scn, Optimal(), grid, n_paths, seed))]
    pert = Perturbed(float(opts.get("pi_shift", 0.5)), float(opts.get("c_mult", 1.5)))
    out.append(("martingale_perturbed",
                martingale_residual(scn, pert, grid, n_paths, seed)))
    return out


def _task_compatibility(cfg, opts, seed):
    base = cfg.agents[0]
    sampler = AgentSampler(base, alpha=uniform_alpha(float(opts.get("alpha_low", 1.2)),
                                                     float(opts.get("alpha_high", 2.5))))
    n_inner = int(opts.get("n_inner", 200))
    pop = sample_population(sampler, n_inner, int(opts.get("types_seed", seed)))
    rep = compatibility_residual(pop, cfg.grid, int(opts.get("n_outer", 100)),
                                 n_inner, seed + 1)
    return [("compatibility", rep)]


def _task_convergence(cfg, opts, seed):
    agent = cfg.agents[0]
    dt0 = float(opts.get("dt0", 1e-2))
    levels = int(opts.get("levels", 5))
    dts = [dt0 / 2**k for k in range(levels)]
    table = explicit_vs_euler(
        agent, float(opts.get("b_ybar", 0.5)),
        (float(opts.get("delta_yw", 0.2)), float(opts.get("delta_yb", 0.1))),
        float(opts.get("forcing", 1.0)), float(opts.get("t_end", 1.0)),
        dts, int(opts.get("n_paths", 100)), seed)
    rep = ResidualReport(table.order, 0.0, int(opts.get("n_paths", 100)), table.verdict,
                         {"dts": list(table.dts), "rms": list(table.rms_errors)})
    return [("logistic_convergence", rep)]


def _kappa_setup(cfg, opts):
    idx = int(opts.get("agent", 0))
    if not 0 <= idx < len(cfg.agents):
        raise ConfigError(f"verification: agent index {idx} out of range")
    agent = cfg.agents[idx]
    if not isinstance(agent.coupling, Power):
        raise ConfigError(f"agents[{idx}].coupling: kappa tasks need a power coupling")
    pop = Population((agent,), "meanfield")
    zbar = opts.get("zbar")
    zbar_fn = None if zbar is None else (lambda a, t, _v=float(zbar): _v)
    kc = kappa_coefficients(agent, pop, zbar_fn=zbar_fn)
    c0 = float(opts.get("c0", kappa_c0(agent, pop)))
    return kc, c0


def _task_gamma_law(cfg, opts, seed):
    kc, c0 = _kappa_setup(cfg, opts)
    ga = gamma_asymptotics(kc)
    if ga.regime != "GammaLimit":
        raise ConfigError(f"verification.gamma_law: scenario sits in regime "
                          f"{ga.regime}, needs GammaLimit (q < 0)")
    t_end = float(opts.get("t_end", 50.0))
    n_paths = int(opts.get("n_paths", 5000))
    samples = simulate_kappa_terminal(kc, c0, t_end, n_paths, float(opts.get("dt", 0.01)), seed)
    ks = ks_gamma_test(samples, ga.shape, ga.scale, float(opts.get("ks_threshold", 0.05)))
    rep_ks = ResidualReport(ks.statistic, 0.0, n_paths, ks.verdict,
                            {"shape": ga.shape, "scale": ga.scale, "threshold": ks.threshold})
    se = float(np.std(samples, ddof=1) / np.sqrt(n_paths))
    diff = float(np.mean(samples) - ga.mean)
    rep_mean = ResidualReport(diff, se, n_paths,
                              "pass" if abs(diff) <= 3.0 * se else "fail",
                              {"target_mean": ga.mean})
    return [("gamma_ks", rep_ks), ("gamma_mean", rep_mean)]


def _task_extinction(cfg, opts, seed):
    kc, c0 = _kappa_setup(cfg, opts)
    horizons = [float(t) for t in opts.get("horizons", [10.0, 25.0, 50.0])]
    eps = float(opts.get("epsilon", 1e-3))
    n_paths = int(opts.get("n_paths", 2000))
    fracs = [extinction_probe(kc, c0, t, eps, n_paths, float(opts.get("dt", 0.01)), seed)
             for t in horizons]
    ses = [math.sqrt(max(f * (1 - f), 1.0 / n_paths) / n_paths) for f in fracs]
    monotone = all(fracs[i + 1] >= fracs[i] - 3.0 * ses[i] for i in range(len(fracs) - 1))
    final_ok = fracs[-1] > float(opts.get("final_fraction", 0.9))
    rep = ResidualReport(fracs[-1], ses[-1], n_paths,
                         "pass" if (monotone and final_ok) else "fail",
                         {"horizons": horizons, "fractions": fracs, "epsilon": eps})
    return [("extinction", rep)]


_TASKS = {"martingale": _task_martingale, "compatibility": _task_compatibility,
          "convergence": _task_convergence, "gamma_law": _task_gamma_law,
          "extinction": _task_extinction}
assert set(_TASKS) == set(TASK_NAMES)


def _verify_step(cfg: ScenarioConfig, seed: int) -> list:
    out = []
    for task, opts in cfg.verification.items():
        out.extend(_TASKS[task](cfg, opts, seed))
    return out


def _figures_step(cfg: ScenarioConfig, run_dir: Path, seed: int) -> list:
    specs = default_figure_specs()
    files = []
    for fid in cfg.figures:
        spec = specs[fid]
        params = {**spec.fixedParams, **cfg.figure_params}
        params["seed"] = int(cfg.figure_params.get("seed", seed))
        spec = dataclasses.replace(spec, fixedParams=params)
        files.append(emit_figure(spec, run_dir / "figures"))
    return files


def run_scenario(config_path, steps=("simulate", "verify", "figures"),
                 out_dir="runs", seed: Optional[int] = None,
                 threads: Optional[int] = None) -> RunResult:
    """Execute a scenario config end to end and write a run directory."""
    cfg = load_scenario(config_path)
    if threads is not None:
        kernels.set_threads(threads)
    eff_seed = cfg.seed if seed is None else seed
    run_dir = Path(out_dir) / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)

    files: list = []
    reports: list = []
    if "simulate" in steps and cfg.agents and cfg.grid is not None:
        files.extend(_simulate_step(cfg, run_dir, eff_seed))
    if "verify" in steps and cfg.verification:
        reports.extend(_verify_step(cfg, eff_seed))
    if "figures" in steps and cfg.figures:
        files.extend(_figures_step(cfg, run_dir, eff_seed))

    report_dicts = [_report_dict(name, rep) for name, rep in reports]
    if report_dicts:
        rpath = run_dir / "reports.json"
        rpath.write_text(json.dumps(report_dicts, indent=2, sort_keys=True) + "\n")
        files.append(rpath)

    failed = [d["name"] for d in report_dicts if d["verdict"] == "fail"]
    manifest = {
        "scenario": cfg.name,
        "config_sha256": cfg.source_sha256,
        "seed": eff_seed,
        "backend": kernels.backend_name(),
        "versions": {"artifact": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__},
        "steps": list(steps),
        "outputs": sorted(str(p.relative_to(run_dir)) for p in files),
        "verdicts": {d["name"]: d["verdict"] for d in report_dicts},
    }
    mpath = run_dir / "manifest.json"
    mpath.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    for name, rep in reports:
        log.info("%s: %s (statistic=%.6g, se=%.3g)", name, rep.verdict.upper(),
                 rep.statistic, rep.mc_std_error)
    return RunResult(run_dir, tuple(reports), tuple(files + [mpath]),
                     1 if failed else 0)
