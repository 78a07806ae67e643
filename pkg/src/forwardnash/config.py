"""Scenario configuration: TOML in, validated objects out.

Every validation error names the offending location (section.key or
agents[i].field) so a config can be fixed without reading a traceback.
The schema is documented in README.md.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .population import (AgentType, Free, Population, Power, Proportional,
                         StockParams, TimeGrid, VolSchedule, validate_agent)

SCENARIO_KEYS = {"name", "kind"}
GRID_KEYS = {"t_end", "n_steps", "dt"}
SIMULATION_KEYS = {"n_paths", "seed"}
AGENT_KEYS = {"alpha", "theta", "mu", "nu", "sigma", "delta_z", "delta_phi",
              "b_phi_bar", "lam", "x0", "z0", "phi0", "count", "coupling"}
COUPLING_KEYS = {"type", "K", "kappa"}
FIGURES_KEYS = {"ids", "params"}
TOP_KEYS = {"scenario", "grid", "simulation", "agents", "figures", "verification"}
KINDS = ("nplayer", "meanfield")
TASK_NAMES = ("martingale", "compatibility", "convergence", "gamma_law", "extinction")


class ConfigError(ValueError):
    """Invalid scenario file; the message carries the location."""


def _fail(loc: str, msg: str):
    raise ConfigError(f"{loc}: {msg}")


def _check_keys(table: dict, allowed: set, loc: str):
    for key in table:
        if key not in allowed:
            _fail(f"{loc}.{key}" if loc else key,
                  f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _require(table: dict, key: str, loc: str):
    if key not in table:
        _fail(loc, f"missing required key '{key}'")
    return table[key]


def _num(value, loc: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(loc, f"expected a number, got {type(value).__name__}")
    return float(value)


def _int(value, loc: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(loc, f"expected an integer, got {type(value).__name__}")
    return value


def _pair(value, loc: str):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        _fail(loc, "expected a two-element array [w, b]")
    return _num(value[0], f"{loc}[0]"), _num(value[1], f"{loc}[1]")


def _coupling(table, loc: str):
    if not isinstance(table, dict):
        _fail(loc, "expected a table like { type = \"free\" }")
    _check_keys(table, COUPLING_KEYS, loc)
    kind = _require(table, "type", loc)
    if kind == "free":
        return Free()
    if kind == "proportional":
        return Proportional(_num(_require(table, "K", loc), f"{loc}.K"))
    if kind == "power":
        return Power(_num(_require(table, "kappa", loc), f"{loc}.kappa"))
    _fail(f"{loc}.type", f"unknown coupling type {kind!r}")


def _agent(table: dict, loc: str) -> tuple:
    if not isinstance(table, dict):
        _fail(loc, "expected a table")
    _check_keys(table, AGENT_KEYS, loc)
    alpha = _num(_require(table, "alpha", loc), f"{loc}.alpha")
    theta = _num(_require(table, "theta", loc), f"{loc}.theta")
    mu = _num(_require(table, "mu", loc), f"{loc}.mu")
    sigma = _num(_require(table, "sigma", loc), f"{loc}.sigma")
    nu = _num(table.get("nu", 0.0), f"{loc}.nu")
    dzw, dzb = _pair(table.get("delta_z", [0.0, 0.0]), f"{loc}.delta_z")
    dfw, dfb = _pair(table.get("delta_phi", [0.0, 0.0]), f"{loc}.delta_phi")
    agent = AgentType(
        alpha=alpha, theta=theta, stock=StockParams(mu, nu, sigma),
        x0=_num(table.get("x0", 1.0), f"{loc}.x0"),
        z0=_num(table.get("z0", 1.0), f"{loc}.z0"),
        phi0=_num(table.get("phi0", 1.0), f"{loc}.phi0"),
        deltaZ=VolSchedule(dzw, dzb), deltaPhi=VolSchedule(dfw, dfb),
        bPhiBar=_num(table.get("b_phi_bar", 0.0), f"{loc}.b_phi_bar"),
        lam=_num(table.get("lam", 1.0), f"{loc}.lam"),
        coupling=_coupling(table.get("coupling", {"type": "free"}), f"{loc}.coupling"),
    )
    count = _int(table.get("count", 1), f"{loc}.count")
    if count < 1:
        _fail(f"{loc}.count", "must be >= 1")
    return agent, count


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    kind: str
    agents: tuple
    grid: Optional[TimeGrid]
    n_paths: int
    seed: int
    figures: tuple
    figure_params: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    source_sha256: str = ""
    path: Optional[Path] = None

    def population(self) -> Population:
        if not self.agents:
            raise ConfigError("agents: scenario has no agent table")
        return Population(self.agents, self.kind)


def parse_scenario(text: str, path: Optional[Path] = None) -> ScenarioConfig:
    from .figures import FIGURE_IDS

    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse failure: {exc}") from exc
    _check_keys(raw, TOP_KEYS, "")

    scn = _require(raw, "scenario", "scenario")
    _check_keys(scn, SCENARIO_KEYS, "scenario")
    name = _require(scn, "name", "scenario")
    if not isinstance(name, str) or not name:
        _fail("scenario.name", "expected a nonempty string")
    kind = scn.get("kind", "meanfield")
    if kind not in KINDS:
        _fail("scenario.kind", f"expected one of {KINDS}, got {kind!r}")

    grid = None
    if "grid" in raw:
        gtab = raw["grid"]
        _check_keys(gtab, GRID_KEYS, "grid")
        t_end = _num(_require(gtab, "t_end", "grid"), "grid.t_end")
        if t_end <= 0:
            _fail("grid.t_end", "must be positive")
        if "n_steps" in gtab and "dt" in gtab:
            _fail("grid", "give n_steps or dt, not both")
        if "n_steps" in gtab:
            n_steps = _int(gtab["n_steps"], "grid.n_steps")
        elif "dt" in gtab:
            dt = _num(gtab["dt"], "grid.dt")
            if dt <= 0:
                _fail("grid.dt", "must be positive")
            n_steps = int(round(t_end / dt))
            if abs(n_steps * dt - t_end) > 1e-9 * t_end:
                _fail("grid.dt", f"does not divide t_end={t_end}")
        else:
            _fail("grid", "missing n_steps or dt")
        if n_steps < 1:
            _fail("grid.n_steps", "must be >= 1")
        grid = TimeGrid(t_end, n_steps)

    n_paths, seed = 1000, 0
    if "simulation" in raw:
        stab = raw["simulation"]
        _check_keys(stab, SIMULATION_KEYS, "simulation")
        n_paths = _int(stab.get("n_paths", n_paths), "simulation.n_paths")
        seed = _int(stab.get("seed", seed), "simulation.seed")
        if n_paths < 1:
            _fail("simulation.n_paths", "must be >= 1")

    agents = []
    rows = raw.get("agents", [])
    if not isinstance(rows, list):
        _fail("agents", "expected an array of tables ([[agents]])")
    for i, row in enumerate(rows):
        agent, count = _agent(row, f"agents[{i}]")
        agents.extend([agent] * count)
    if agents:
        pop = Population(tuple(agents), kind) if (kind == "meanfield" or len(agents) >= 2) else None
        for i, agent in enumerate(agents):
            result = validate_agent(agent, pop)
            if not result.ok:
                _fail(f"agents[{i}]", str(result))

    figures, figure_params = (), {}
    if "figures" in raw:
        ftab = raw["figures"]
        _check_keys(ftab, FIGURES_KEYS, "figures")
        ids = ftab.get("ids", [])
        if not isinstance(ids, list) or not all(isinstance(s, str) for s in ids):
            _fail("figures.ids", "expected an array of figure id strings")
        for fid in ids:
            if fid not in FIGURE_IDS:
                _fail("figures.ids", f"unknown figure id {fid!r} "
                      f"(known: {', '.join(FIGURE_IDS)})")
        figures = tuple(ids)
        params = ftab.get("params", {})
        if not isinstance(params, dict):
            _fail("figures.params", "expected a table")
        figure_params = dict(params)

    verification = {}
    if "verification" in raw:
        vtab = raw["verification"]
        if not isinstance(vtab, dict):
            _fail("verification", "expected a table")
        tasks = vtab.get("tasks", [])
        if not isinstance(tasks, list) or not all(isinstance(s, str) for s in tasks):
            _fail("verification.tasks", "expected an array of task name strings")
        for t in tasks:
            if t not in TASK_NAMES:
                _fail("verification.tasks", f"unknown task {t!r} "
                      f"(known: {', '.join(TASK_NAMES)})")
        for key in vtab:
            if key != "tasks" and key not in tasks:
                _fail(f"verification.{key}", "options table for a task not in verification.tasks")
        verification = {t: dict(vtab.get(t, {})) for t in tasks}

    sha = hashlib.sha256(text.encode()).hexdigest()
    return ScenarioConfig(name, kind, tuple(agents), grid, n_paths, seed,
                          figures, figure_params, verification, sha, path)


def load_scenario(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read scenario file ({exc})") from exc
    return parse_scenario(text, p)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    p = Path(__file__).parent / "scenarios" / f"{name}.toml"
    if not p.exists():
        raise ConfigError(f"no bundled scenario named {name!r}")
    return p
