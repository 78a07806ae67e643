"""Figure data grids: closed-form surfaces and sample trajectories as CSV.

Plotting is out of scope; these files carry the numbers. Grid points are
emitted in sorted axis order, every cell either a finite value or an
explicit nan with a logged reason, so re-runs are byte-identical.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .meanfield import (gamma_asymptotics, k_alpha_theta, kappa_c0,
                        kappa_coefficients, kappa_trajectory,
                        deterministic_benchmark, mf_consumption_initial,
                        mf_portfolio)
from .population import (AgentType, DegenerateEquilibriumError, Free, Power,
                         Population, StockParams, TimeGrid, VolSchedule,
                         ZeroUtilityVolatilityError, validate_agent)
from .sde import generate_bundle

log = logging.getLogger("forwardnash.figures")

FIGURE_IDS = ("K_surface", "portfolio_surface", "consumption_surface_Kpos",
              "consumption_surface_Kneg", "q_sign_region",
              "asymptotic_consumption", "consumption_trajectories")

ALPHA_ONE_GUARD = 1e-9


@dataclass(frozen=True)
class FigureSpec:
    id: str
    gridRanges: dict = field(default_factory=dict)  # axis -> (min, max, steps)
    fixedParams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.id!r} (known: {', '.join(FIGURE_IDS)})")
        for axis, rng in self.gridRanges.items():
            lo, hi, steps = rng
            if steps < 2:
                raise ValueError(f"{self.id}: axis {axis} needs >= 2 steps")
            if not hi > lo:
                raise ValueError(f"{self.id}: axis {axis} needs max > min")

    def axis(self, name: str) -> np.ndarray:
        lo, hi, steps = self.gridRanges[name]
        return np.linspace(lo, hi, int(steps))

    def param(self, name: str, default=None):
        if default is None and name not in self.fixedParams:
            raise ValueError(f"{self.id}: missing fixed parameter {name!r}")
        return self.fixedParams.get(name, default)


# Captioned scenario: mu = 0.3, sigma = 1, nu = 0, population point mass at
# (alpha, theta) = (0.5, 0.7) so E[1/alpha] = 2 and E[theta] = 0.7.
_BASE_FIXED = {"mu": 0.3, "sigma": 1.0, "nu": 0.0,
               "alpha_pop": 0.5, "theta_pop": 0.7}
_BASE_RANGES = {"alpha": (0.05, 2.95, 30), "theta": (0.0, 1.0, 21)}


def default_figure_specs() -> dict:
    specs = {
        "K_surface": FigureSpec("K_surface", dict(_BASE_RANGES), dict(_BASE_FIXED)),
        "portfolio_surface": FigureSpec(
            "portfolio_surface", dict(_BASE_RANGES),
            {**_BASE_FIXED, "delta_zb": 0.5}),
        "consumption_surface_Kpos": FigureSpec(
            "consumption_surface_Kpos", dict(_BASE_RANGES),
            {**_BASE_FIXED, "ratio0": 1.4, "e_log_ratio": 0.5}),
        "consumption_surface_Kneg": FigureSpec(
            "consumption_surface_Kneg", dict(_BASE_RANGES),
            {**_BASE_FIXED, "ratio0": 0.7, "e_log_ratio": -0.5}),
        "q_sign_region": FigureSpec(
            "q_sign_region", dict(_BASE_RANGES),
            {**_BASE_FIXED, "kappa": -0.5, "deltas": (0.0, 0.25, 0.5), "log_z0": 1.0}),
        "asymptotic_consumption": FigureSpec(
            "asymptotic_consumption", dict(_BASE_RANGES),
            {**_BASE_FIXED, "kappa": -0.5, "delta_zb": 0.25, "log_z0": 1.0}),
        "consumption_trajectories": FigureSpec(
            "consumption_trajectories", {},
            {**_BASE_FIXED, "kappa": -0.5, "delta_zb": 0.25, "log_z0": 1.0,
             "t_end": 50.0, "dt": 0.01, "seed": 20260813,
             "agents": ((1.65, 0.65), (0.55, 0.35))}),
    }
    return specs


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    v = float(value)
    if v == 0.0:
        return "0"
    return "%.17g" % v if math.isfinite(v) else "nan"


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _market(spec: FigureSpec) -> StockParams:
    return StockParams(spec.param("mu", 0.3), spec.param("nu", 0.0),
                       spec.param("sigma", 1.0))


def _agent_at(base: AgentType, alpha: float, theta: float) -> AgentType:
    return dataclasses.replace(base, alpha=alpha, theta=theta)


def _pop_point_mass(spec: FigureSpec, **overrides) -> Population:
    agent = AgentType(alpha=spec.param("alpha_pop"), theta=spec.param("theta_pop"),
                      stock=_market(spec), **overrides)
    bad = validate_agent(agent)
    if not bad.ok:
        raise ValueError(f"{spec.id}: fixed parameters invalid: {bad}")
    return Population((agent,), "meanfield")


def _nan_point(fig_id: str, alpha, theta, reason: str):
    log.info("%s: nan at alpha=%.6g theta=%.6g (%s)", fig_id, alpha, theta, reason)


def _k_surface(spec: FigureSpec):
    pop = _pop_point_mass(spec)
    base = pop.agents[0]
    rows = []
    for alpha in spec.axis("alpha"):
        for theta in spec.axis("theta"):
            if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
                _nan_point(spec.id, alpha, theta, "alpha = 1 excluded")
                rows.append((alpha, theta, float("nan"), float("nan")))
                continue
            K = k_alpha_theta(_agent_at(base, alpha, theta), pop)
            rows.append((alpha, theta, K, abs(K)))
    return ["alpha", "theta", "K", "abs_K"], rows


def _portfolio_surface(spec: FigureSpec):
    dzb = spec.param("delta_zb")
    pop = _pop_point_mass(spec, deltaZ=VolSchedule(0.0, dzb))
    base = pop.agents[0]
    rows = []
    for alpha in spec.axis("alpha"):
        for theta in spec.axis("theta"):
            if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
                _nan_point(spec.id, alpha, theta, "alpha = 1 excluded")
                rows.append((alpha, theta, float("nan"), float("nan"), float("nan")))
                continue
            try:
                pi, pi1, pi2 = mf_portfolio(_agent_at(base, alpha, theta), pop)
            except DegenerateEquilibriumError as exc:
                _nan_point(spec.id, alpha, theta, str(exc))
                rows.append((alpha, theta, float("nan"), float("nan"), float("nan")))
                continue
            rows.append((alpha, theta, pi, pi1, pi2))
    return ["alpha", "theta", "pi_star", "pi_competitive", "pi_classical"], rows


def _consumption_surface(spec: FigureSpec):
    ratio0 = spec.param("ratio0")
    e_log = spec.param("e_log_ratio")
    # point-mass population whose ratio reproduces E[(1/alpha) log(phi0/z0)]
    # exactly: log ratio_pop = e_log * alpha_pop
    ratio_pop = math.exp(e_log * spec.param("alpha_pop"))
    pop = _pop_point_mass(spec, phi0=ratio_pop)
    base = dataclasses.replace(pop.agents[0], phi0=ratio0)
    rows = []
    for alpha in spec.axis("alpha"):
        for theta in spec.axis("theta"):
            if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
                _nan_point(spec.id, alpha, theta, "alpha = 1 excluded")
                rows.append((alpha, theta, float("nan"), float("nan")))
                continue
            agent = _agent_at(base, alpha, theta)
            c0 = mf_consumption_initial(agent, pop)
            rows.append((alpha, theta, c0, k_alpha_theta(agent, pop)))
    return ["alpha", "theta", "c0_star", "K"], rows


def _kappa_pop(spec: FigureSpec, dzb: float) -> Population:
    kappa = spec.param("kappa")
    z0 = math.exp(spec.param("log_z0"))
    return _pop_point_mass(spec, deltaZ=VolSchedule(0.0, dzb),
                           z0=z0, phi0=z0 ** (1.0 - kappa), coupling=Power(kappa))


def _q_regime(kc) -> str:
    try:
        return gamma_asymptotics(kc).regime
    except ZeroUtilityVolatilityError:
        return "DeterministicPositive" if kc.bA > 0 else "DeterministicExtinction"


def _q_sign_region(spec: FigureSpec):
    rows = []
    for dzb in spec.param("deltas"):
        pop = _kappa_pop(spec, dzb)
        base = pop.agents[0]
        for alpha in spec.axis("alpha"):
            for theta in spec.axis("theta"):
                if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
                    _nan_point(spec.id, alpha, theta, "alpha = 1 excluded")
                    rows.append((dzb, alpha, theta, float("nan"), float("nan"), "Excluded"))
                    continue
                kc = kappa_coefficients(_agent_at(base, alpha, theta), pop)
                if not math.isfinite(kc.q):
                    _nan_point(spec.id, alpha, theta,
                               "q undefined at zero utility volatility")
                rows.append((dzb, alpha, theta, kc.bA, kc.q, _q_regime(kc)))
    return ["delta_zb", "alpha", "theta", "b_A", "q", "regime"], rows


def _asymptotic_consumption(spec: FigureSpec):
    pop = _kappa_pop(spec, spec.param("delta_zb"))
    pop0 = _kappa_pop(spec, 0.0)
    kappa = spec.param("kappa")
    rows = []
    for alpha in spec.axis("alpha"):
        for theta in spec.axis("theta"):
            if abs(alpha - 1.0) < ALPHA_ONE_GUARD:
                _nan_point(spec.id, alpha, theta, "alpha = 1 excluded")
                rows.append((alpha, theta, float("nan"), float("nan"),
                             float("nan"), "Excluded", "Excluded"))
                continue
            kc = kappa_coefficients(_agent_at(pop.agents[0], alpha, theta), pop)
            kc0 = kappa_coefficients(_agent_at(pop0.agents[0], alpha, theta), pop0)
            regime = _q_regime(kc)
            if regime == "GammaLimit":
                mean = -kc.bA / kappa
            elif regime == "ExtinctionToZero":
                mean = 0.0
            else:
                _nan_point(spec.id, alpha, theta, f"no point limit in regime {regime}")
                mean = float("nan")
            bench = max(kc0.bA, 0.0) / abs(kappa)
            rows.append((alpha, theta, kc.q, mean, bench, regime, _q_regime(kc0)))
    return ["alpha", "theta", "q", "asymptotic_mean", "benchmark_level",
            "regime", "benchmark_regime"], rows


def _consumption_trajectories(spec: FigureSpec):
    kappa = spec.param("kappa")
    grid = TimeGrid(spec.param("t_end"), int(round(spec.param("t_end") / spec.param("dt"))))
    pop = _kappa_pop(spec, spec.param("delta_zb"))
    pop0 = _kappa_pop(spec, 0.0)
    pairs = spec.param("agents")
    bundle = generate_bundle(grid, n_idio=len(pairs), seed=spec.param("seed"))
    times = grid.times()
    rows = []
    for i, (alpha, theta) in enumerate(pairs):
        tag = f"a{alpha:g}_t{theta:g}"
        agent = _agent_at(pop.agents[0], alpha, theta)
        kc = kappa_coefficients(agent, pop)
        kc0 = kappa_coefficients(_agent_at(pop0.agents[0], alpha, theta), pop0)
        c0 = kappa_c0(agent, pop)
        path = kappa_trajectory(kc, c0, bundle, idio_index=i)
        bench = deterministic_benchmark(kc0.bA, kappa, c0, times)
        for t, v in zip(times, path.values):
            rows.append((f"equilibrium_{tag}", t, v))
        for t, v in zip(times, bench):
            rows.append((f"benchmark_{tag}", t, v))
    rows.sort(key=lambda r: (r[0], r[1]))
    return ["series", "t", "value"], rows


_BUILDERS = {
    "K_surface": _k_surface,
    "portfolio_surface": _portfolio_surface,
    "consumption_surface_Kpos": _consumption_surface,
    "consumption_surface_Kneg": _consumption_surface,
    "q_sign_region": _q_sign_region,
    "asymptotic_consumption": _asymptotic_consumption,
    "consumption_trajectories": _consumption_trajectories,
}


def emit_figure(spec: FigureSpec, out_dir) -> Path:
    """Compute one figure grid and write {id}.csv under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header, rows = _BUILDERS[spec.id](spec)
    path = out / f"{spec.id}.csv"
    _write_csv(path, header, rows)
    log.info("%s: wrote %d rows to %s", spec.id, len(rows), path)
    return path
