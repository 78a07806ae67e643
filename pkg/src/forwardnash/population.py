"""Agent types, market parameters, populations, and time grids.

Agents hold CRRA preferences (risk aversion alpha, competition weight theta),
utility-factor volatility schedules, and an optional coupling between the
consumption and wealth utility factors. Populations are either finite ordered
player lists or finite i.i.d. ensembles standing in for a type distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

ALPHA_ONE_TOL = 1e-9
MAX_SAMPLE_RETRIES = 1000

TimeFn = Union[float, Callable[[float], float]]


class DegenerateEquilibriumError(RuntimeError):
    """Aggregate fixed point has no solution (psi = 1)."""


class RegimeError(ValueError):
    """Parameters fall outside a supported admissibility regime."""


class ZeroUtilityVolatilityError(ValueError):
    """Operation requires non-vanishing utility volatility."""


def eval_time_fn(f: TimeFn, t: float) -> float:
    return float(f(t)) if callable(f) else float(f)


@dataclass(frozen=True)
class StockParams:
    """Single risky asset: drift mu, idiosyncratic vol nu, common-noise vol sigma."""

    mu: float
    nu: float
    sigma: float

    def __post_init__(self):
        if self.nu < 0 or self.sigma < 0:
            raise ValueError("volatilities must be nonnegative")

    @property
    def total_var(self) -> float:
        return self.nu**2 + self.sigma**2


@dataclass(frozen=True)
class VolSchedule:
    """Two-channel volatility schedule (idiosyncratic W, common B).

    Each channel is a constant or a function of time; evaluated pointwise on
    the simulation grid, so piecewise-constant inputs are represented by the
    caller's function.
    """

    w: TimeFn = 0.0
    b: TimeFn = 0.0

    def w_at(self, t: float) -> float:
        return eval_time_fn(self.w, t)

    def b_at(self, t: float) -> float:
        return eval_time_fn(self.b, t)

    def norm_sq(self, t: float) -> float:
        return self.w_at(t) ** 2 + self.b_at(t) ** 2


@dataclass(frozen=True)
class Free:
    pass


@dataclass(frozen=True)
class Proportional:
    """Consumption utility factor proportional to the wealth one, phi = K Z."""

    K: float

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("proportional factor must be positive")


@dataclass(frozen=True)
class Power:
    """Power link phi = Z^(1-kappa) with nonpositive kappa."""

    kappa: float


Coupling = Union[Free, Proportional, Power]


@dataclass(frozen=True)
class AgentType:
    alpha: float
    theta: float
    stock: StockParams
    x0: float = 1.0
    z0: float = 1.0
    phi0: float = 1.0
    deltaZ: VolSchedule = field(default_factory=VolSchedule)
    deltaPhi: VolSchedule = field(default_factory=VolSchedule)
    bPhiBar: TimeFn = 0.0
    lam: float = 1.0
    coupling: Coupling = field(default_factory=Free)

    @property
    def ratio0(self) -> float:
        """Initial consumption-to-wealth utility factor ratio phi0/z0."""
        return self.phi0 / self.z0


def _check(violations, cond, msg):
    if not cond:
        violations.append(msg)


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "; ".join(self.violations)


def validate_agent(agent: AgentType, context: Optional["Population"] = None) -> ValidationResult:
    """Diagnostic constraint check for one agent, optionally in a game context.

    Returns the list of violated constraints instead of raising, so callers
    can aggregate reports over a population.
    """
    v: list = []
    _check(v, agent.alpha > 0, f"alpha={agent.alpha} must be positive")
    _check(v, abs(agent.alpha - 1.0) >= ALPHA_ONE_TOL,
           "alpha within 1e-9 of 1 is unsupported (log utility excluded)")
    _check(v, 0.0 <= agent.theta <= 1.0, f"theta={agent.theta} must lie in [0, 1]")
    _check(v, agent.x0 > 0, "x0 must be positive")
    _check(v, agent.z0 > 0, "z0 must be positive")
    _check(v, agent.phi0 > 0, "phi0 must be positive")
    _check(v, agent.stock.total_var > 0, "sigma^2 + nu^2 must be positive")
    if isinstance(agent.coupling, Power):
        _check(v, agent.coupling.kappa <= 0, "power coupling requires kappa <= 0")
        if agent.z0 > 0:
            implied = agent.z0 ** (1.0 - agent.coupling.kappa)
            _check(v, abs(agent.phi0 - implied) <= 1e-12 * max(1.0, implied),
                   "power coupling requires phi0 = z0^(1-kappa)")
    if context is not None and context.kind == "nplayer":
        n = len(context.agents)
        bound = agent.theta / (n - 1 + agent.theta) if (n - 1 + agent.theta) > 0 else 0.0
        _check(v, agent.alpha > bound,
               f"alpha={agent.alpha} must exceed theta/(n-1+theta)={bound:.6g}")
        if agent.alpha < 1.0:
            _check(v, agent.lam == 1.0,
                   "equilibrium simulation with alpha < 1 requires lambda = 1")
        elif agent.alpha > 1.0:
            _check(v, agent.lam >= 1.0,
                   "equilibrium simulation with alpha > 1 requires lambda >= 1")
    return ValidationResult(tuple(v))


@dataclass(frozen=True)
class Population:
    """Ordered player list (nplayer) or sampled type ensemble (meanfield)."""

    agents: tuple
    kind: str  # "nplayer" | "meanfield"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("nplayer", "meanfield"):
            raise ValueError(f"unknown population kind {self.kind!r}")
        if self.kind == "nplayer" and len(self.agents) < 2:
            raise ValueError("nplayer population needs at least 2 agents")
        if self.kind == "meanfield" and len(self.agents) < 1:
            raise ValueError("meanfield ensemble must be nonempty")

    @property
    def n(self) -> int:
        return len(self.agents)


def nplayer_population(agents: Sequence[AgentType]) -> Population:
    return Population(tuple(agents), "nplayer")


def meanfield_population(agents: Sequence[AgentType], seed: Optional[int] = None) -> Population:
    return Population(tuple(agents), "meanfield", seed)


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.t_end <= 0 or self.n_steps < 1:
            raise ValueError("grid needs t_end > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)


class AgentSampler:
    """Draws AgentType instances from per-field distributions.

    Each entry in `draws` maps a constructor field to a callable rng -> value;
    missing fields come from `base`. Used to represent the mean-field type
    distribution by finite i.i.d. ensembles.
    """

    def __init__(self, base: AgentType, **draws):
        self.base = base
        self.draws = draws

    def draw(self, rng: np.random.Generator) -> AgentType:
        kwargs = {name: fn(rng) for name, fn in self.draws.items()}
        return _replace_agent(self.base, **kwargs)


def _replace_agent(agent: AgentType, **kwargs) -> AgentType:
    import dataclasses

    stock_fields = {k: kwargs.pop(k) for k in ("mu", "nu", "sigma") if k in kwargs}
    if stock_fields:
        kwargs["stock"] = dataclasses.replace(agent.stock, **stock_fields)
    return dataclasses.replace(agent, **kwargs)


def point_mass(agent: AgentType) -> AgentSampler:
    return AgentSampler(agent)


def uniform_alpha(low: float, high: float, exclusion: float = 0.05):
    """Uniform risk aversion avoiding a band around 1 by resampling."""

    def draw(rng):
        while True:
            a = rng.uniform(low, high)
            if abs(a - 1.0) >= exclusion:
                return a

    return draw


def sample_population(sampler: AgentSampler, ensemble_size: int, seed: int) -> Population:
    """Draw an i.i.d. type ensemble; deterministic given the seed.

    Invalid draws are rejected and resampled; persistent rejection raises.
    """
    if ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    agents = []
    retries = 0
    while len(agents) < ensemble_size:
        agent = sampler.draw(rng)
        if validate_agent(agent).ok:
            agents.append(agent)
        else:
            retries += 1
            if retries > MAX_SAMPLE_RETRIES * ensemble_size:
                raise RuntimeError("sampler keeps producing invalid agents")
    return Population(tuple(agents), "meanfield", seed)


def population_expectation(pop: Population, g: Callable[[AgentType, float], float],
                           t: float = 0.0) -> float:
    """Ensemble average (1/M) sum g(agent, t), the estimator for E[g]."""
    if pop.n == 0:
        raise ValueError("empty ensemble")
    return float(sum(g(agent, t) for agent in pop.agents) / pop.n)
