"""Mean-field Nash equilibrium: coefficients, consumption laws, asymptotics.

Population interaction enters through expectations over the type ensemble
and through conditional geometric means given the common noise. Includes the
proportional and power couplings between the two utility factors, the
explicit logistic representation of equilibrium consumption, and the long-run
Gamma/extinction regime classification.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from . import kernels
from .crra import CompetitorAggregates, zbar_drift
from .population import (AgentType, DegenerateEquilibriumError, Population, Power,
                         Proportional, RegimeError, ZeroUtilityVolatilityError,
                         eval_time_fn)
from .sde import PathBundle, ProcessPath, make_rng

PSI_DEGENERATE_TOL = 1e-10
Q_BOUNDARY_TOL = 1e-12
TERMINAL_CHUNK = 250


def _m_exp(agent: AgentType) -> float:
    return agent.theta * (1.0 - agent.alpha) / agent.alpha


def _e_m(pop: Population) -> float:
    return float(np.mean([_m_exp(a) for a in pop.agents]))


def k_alpha_theta(agent: AgentType, pop: Population) -> float:
    """Competitive correction exponent K = -m/(1 + E[m]), m = theta(1-alpha)/alpha."""
    em = _e_m(pop)
    if abs(1.0 + em) < 1e-12:
        raise DegenerateEquilibriumError("1 + E[theta(1-alpha)/alpha] = 0")
    return -_m_exp(agent) / (1.0 + em)


def _excess_return(agent: AgentType, t: float) -> float:
    st = agent.stock
    return agent.deltaZ.w_at(t) * st.nu + agent.deltaZ.b_at(t) * st.sigma + st.mu


def psi_varphi_sigma(pop: Population, t: float = 0.0) -> Tuple[float, float]:
    psi = float(np.mean([a.theta * (1.0 - 1.0 / a.alpha) * a.stock.sigma**2
                         / a.stock.total_var for a in pop.agents]))
    varphi = float(np.mean([a.stock.sigma / a.alpha * _excess_return(a, t)
                            / a.stock.total_var for a in pop.agents]))
    return psi, varphi


@dataclass(frozen=True)
class MeanFieldCoefficients:
    psi_sigma: float
    varphi_sigma: float
    sigma_pi_bar: float
    lam: float


def mf_sigma_pi_bar(pop: Population, t: float = 0.0) -> float:
    psi, varphi = psi_varphi_sigma(pop, t)
    if abs(1.0 - psi) < PSI_DEGENERATE_TOL:
        raise DegenerateEquilibriumError(f"psi_sigma = {psi!r}: fixed point degenerate")
    return varphi / (1.0 - psi)


def mf_coefficients(pop: Population, t: float = 0.0) -> MeanFieldCoefficients:
    psi, varphi = psi_varphi_sigma(pop, t)
    return MeanFieldCoefficients(psi, varphi, mf_sigma_pi_bar(pop, t), pop.agents[0].lam)


def mf_portfolio(agent: AgentType, pop: Population, t: float = 0.0) -> Tuple[float, float, float]:
    """Equilibrium portfolio and its (competition, standalone) decomposition.

    pi1 tracks the population volatility average, pi2 is the noncompetitive
    part; pi* = pi1 + pi2.
    """
    spb = mf_sigma_pi_bar(pop, t)
    st = agent.stock
    pi1 = agent.theta * st.sigma * (1.0 - 1.0 / agent.alpha) * spb / st.total_var
    pi2 = _excess_return(agent, t) / (agent.alpha * st.total_var)
    return pi1 + pi2, pi1, pi2


def mf_aggregates(pop: Population, t: float = 0.0, c_bar=0.0) -> CompetitorAggregates:
    """Population portfolio aggregates at equilibrium, mean-field convention."""
    spb = mf_sigma_pi_bar(pop, t)
    pis = [mf_portfolio(a, pop, t)[0] for a in pop.agents]
    mupb = float(np.mean([a.stock.mu * p for a, p in zip(pop.agents, pis)]))
    spi2 = float(np.mean([a.stock.total_var * p**2 for a, p in zip(pop.agents, pis)]))
    nupi2 = float(np.mean([a.stock.nu**2 * p**2 for a, p in zip(pop.agents, pis)]))
    return CompetitorAggregates(sigma_pi_bar=spb, c_bar=c_bar, c_tilde=1.0,
                                mu_pi_bar=mupb, Sigma_pi_sq_bar=spi2,
                                nu_pi_sq_bar=nupi2, n_players=None)


def mf_zbar_zero_consumption(agent: AgentType, pop: Population, t: float = 0.0) -> float:
    """Wealth-factor drift coefficient along the equilibrium, consumption at zero."""
    agg = mf_aggregates(pop, t, c_bar=0.0)
    pi_own = mf_portfolio(agent, pop, t)[0]
    return zbar_drift(agent, agg, pi_own, t)


def mf_consumption_initial(agent: AgentType, pop: Population) -> float:
    """c0* from the initial factor ratios across the population."""
    if agent.z0 <= 0 or agent.phi0 <= 0:
        raise ValueError("initial factors must be positive")
    K = k_alpha_theta(agent, pop)
    e_log = float(np.mean([np.log(a.ratio0) / a.alpha for a in pop.agents]))
    return float(np.exp(K * e_log) * agent.ratio0 ** (1.0 / agent.alpha))


def _require_common_lambda(pop: Population) -> float:
    lams = {a.lam for a in pop.agents}
    if len(lams) > 1:
        raise RegimeError("heterogeneous lambda across the population is not supported")
    lam = lams.pop()
    if lam < 1.0:
        raise RegimeError("lambda < 1 is outside the admissible regime")
    return lam


def mf_a_coefficients(agent: AgentType, pop: Population, t: float = 0.0,
                      zbar_fn: Optional[Callable] = None) -> Tuple[float, float, float]:
    """Linear drift a_t and ratio volatilities (deltaYW, deltaYB) of log c*.

    Implemented exactly as displayed in the consumption dynamics, with the
    vol quadratic unscaled; used only by the paired simulate/explicit routes,
    which are self-consistent by construction.
    """
    if zbar_fn is None:
        zbar_fn = lambda a, s: mf_zbar_zero_consumption(a, pop, s)
    al = agent.alpha
    dzw, dzb = agent.deltaZ.w_at(t), agent.deltaZ.b_at(t)
    dfw, dfb = agent.deltaPhi.w_at(t), agent.deltaPhi.b_at(t)
    a_t = (eval_time_fn(agent.bPhiBar, t) - zbar_fn(agent, t)) / al \
        - 0.5 * (dfw**2 + dfb**2 - dzw**2 - dzb**2)
    return a_t, (dfw - dzw) / al, (dfb - dzb) / al


@dataclass(frozen=True)
class MfConsumptionResult:
    times: np.ndarray
    c: np.ndarray
    log_y: np.ndarray
    cbar: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.c.shape[0]


def _mf_display_inputs(pop, times, zbar_fn):
    M = pop.n
    a_disp = np.empty((M, len(times)))
    dyw = np.empty((M, len(times)))
    dyb = np.empty((M, len(times)))
    for m, ag in enumerate(pop.agents):
        for s, t in enumerate(times):
            a_disp[m, s], dyw[m, s], dyb[m, s] = mf_a_coefficients(ag, pop, t, zbar_fn)
    abar = a_disp.mean(axis=0)
    dyb_bar = dyb.mean(axis=0)
    kvec = np.array([k_alpha_theta(ag, pop) for ag in pop.agents])
    return a_disp, dyw, dyb, abar, dyb_bar, kvec


def mf_consumption_simulate(pop: Population, bundle: PathBundle,
                            zbar_fn: Optional[Callable] = None) -> MfConsumptionResult:
    """Integrate the per-type equilibrium consumption dynamics on shared common noise.

    d log c* = (a + K abar - (lam-1) c*) dt + deltaYW dW + (deltaYB + K deltaYB_bar) dB
    for each ensemble member, one idiosyncratic path per member. The factor
    ratio log Y is tracked alongside for the mean-consumption identity.
    """
    lam = _require_common_lambda(pop)
    M = pop.n
    if bundle.n_idio < M:
        raise ValueError(f"bundle provides {bundle.n_idio} idiosyncratic paths, need {M}")
    times = bundle.grid.times()
    dt = bundle.grid.dt
    a_disp, dyw, dyb, abar, dyb_bar, kvec = _mf_display_inputs(pop, times, zbar_fn)
    em = _e_m(pop)
    mvec = np.array([_m_exp(ag) for ag in pop.agents])
    dW = bundle.idio_increments()[:M]
    dB = bundle.common_increments()
    logc = np.empty((M, len(times)))
    logy = np.empty((M, len(times)))
    c0 = np.array([mf_consumption_initial(ag, pop) for ag in pop.agents])
    logc[:, 0] = np.log(c0)
    logy[:, 0] = np.array([np.log(ag.ratio0) / ag.alpha for ag in pop.agents])
    # the displayed drifts are already on log scale, so no Ito correction here;
    # the explicit factor representation then matches pathwise at lam = 1
    for s in range(len(times) - 1):
        c = np.exp(logc[:, s])
        cbar = c.mean()
        vol_b = dyb[:, s] + kvec * dyb_bar[s]
        drift = a_disp[:, s] + kvec * abar[s] - (lam - 1.0) * c
        logc[:, s + 1] = logc[:, s] + drift * dt \
            + dyw[:, s] * dW[:, s] + vol_b * dB[s]
        # ratio dynamics share the linear part; consumption feedback differs
        ydrift = a_disp[:, s] - (lam - 1.0) * (mvec * cbar + c)
        logy[:, s + 1] = logy[:, s] + ydrift * dt \
            + dyw[:, s] * dW[:, s] + dyb[:, s] * dB[s]
    cpaths = np.exp(logc)
    return MfConsumptionResult(times, cpaths, logy, cpaths.mean(axis=0))


def mf_consumption_explicit(pop: Population, bundle: PathBundle,
                            zbar_fn: Optional[Callable] = None) -> MfConsumptionResult:
    """Explicit logistic representation c* = c0 G / (1 + (lam-1) c0 int G).

    G is the inverse of the exponential factor of the linear part, built from
    the same display coefficients and the same Brownian increments as
    mf_consumption_simulate; the pair forms a strong-convergence test.
    """
    lam = _require_common_lambda(pop)
    M = pop.n
    if bundle.n_idio < M:
        raise ValueError(f"bundle provides {bundle.n_idio} idiosyncratic paths, need {M}")
    times = bundle.grid.times()
    dt = bundle.grid.dt
    a_disp, dyw, dyb, abar, dyb_bar, kvec = _mf_display_inputs(pop, times, zbar_fn)
    dW = bundle.idio_increments()[:M]
    dB = bundle.common_increments()
    c0 = np.array([mf_consumption_initial(ag, pop) for ag in pop.agents])
    logG = np.zeros((M, len(times)))
    drift = a_disp + kvec[:, None] * abar[None, :]
    vol_b = dyb + kvec[:, None] * dyb_bar[None, :]
    dlogG = drift[:, :-1] * dt + dyw[:, :-1] * dW + vol_b[:, :-1] * dB[None, :]
    logG[:, 1:] = np.cumsum(dlogG, axis=1)
    G = np.exp(logG)
    integ = np.concatenate([np.zeros((M, 1)),
                            np.cumsum(0.5 * (G[:, 1:] + G[:, :-1]) * dt, axis=1)], axis=1)
    c = c0[:, None] * G / (1.0 + (lam - 1.0) * c0[:, None] * integ)
    logy = np.full_like(c, np.nan)
    return MfConsumptionResult(times, c, logy, c.mean(axis=0))


def mf_mean_consumption(pop: Population, inner_log_c: np.ndarray,
                        inner_log_y: Optional[np.ndarray] = None):
    """Geometric mean consumption given the common noise, with identity check.

    inner_log_c: (M, nodes) log consumption over the inner ensemble for one
    common path. Returns (Cbar path, residual): Cbar = exp(inner mean). When
    inner_log_y is provided, the closed-form normalizer
    exp(E[log Y | common]/(1 + E[m])) is compared and the max-over-time
    relative residual returned. The exponent algebra: each type consumes
    c* = Y Cbar^(theta(1-1/alpha)), i.e. per-type weight Y_t and mean-field
    exponent p = -theta/alpha relative to the hat-normalized strategy, so
    log Cbar = E[log Y | common]/(1 + E[theta(1-alpha)/alpha]).
    """
    vals = np.asarray(inner_log_c, dtype=float)
    if vals.ndim != 2 or vals.shape[0] < 2:
        raise ValueError("need a 2d inner ensemble with at least 2 members")
    em = _e_m(pop)
    if abs(1.0 + em) < 1e-12:
        raise DegenerateEquilibriumError("degenerate mean-consumption exponent")
    cbar = np.exp(vals.mean(axis=0))
    if inner_log_y is None:
        return cbar, None
    closed = np.exp(np.asarray(inner_log_y).mean(axis=0) / (1.0 + em))
    resid = float(np.max(np.abs(cbar / closed - 1.0)))
    return cbar, resid


def proportional_consumption(agent: AgentType, pop: Population, t: float = 0.0) -> float:
    """Strong equilibrium consumption under phi = K Z, a function of types only."""
    if not isinstance(agent.coupling, Proportional):
        raise ValueError("agent coupling must be Proportional")
    for k, a in enumerate(pop.agents):
        if not isinstance(a.coupling, Proportional):
            raise ValueError(f"population member {k} lacks a Proportional coupling")
    K = k_alpha_theta(agent, pop)
    e_logk = float(np.mean([np.log(a.coupling.K) / a.alpha for a in pop.agents]))
    return float(np.exp(np.log(agent.coupling.K) / agent.alpha + K * e_logk))


@dataclass(frozen=True)
class KappaCoefficients:
    bA: float
    deltaA_W: float
    deltaA_B: float
    q: float
    gammaShape: float
    gammaScale: float
    kappa: float
    constant_coefficients: bool = True

    @property
    def vol_sq(self) -> float:
        return self.deltaA_W**2 + self.deltaA_B**2


def _common_kappa(agent: AgentType, pop: Population) -> float:
    if not isinstance(agent.coupling, Power):
        raise ValueError("agent coupling must be Power")
    kappas = set()
    for k, a in enumerate(pop.agents):
        if not isinstance(a.coupling, Power):
            raise ValueError(f"population member {k} lacks a Power coupling")
        kappas.add(a.coupling.kappa)
    if len(kappas) > 1:
        raise RegimeError("heterogeneous kappa across the population is not supported")
    kap = kappas.pop()
    if kap > 0:
        raise RegimeError("power coupling requires kappa <= 0")
    if agent.coupling.kappa != kap:
        raise RegimeError("agent kappa differs from the population value")
    return kap


def _schedules_constant(pop: Population) -> bool:
    return all(not callable(a.deltaZ.w) and not callable(a.deltaZ.b)
               for a in pop.agents)


def kappa_coefficients(agent: AgentType, pop: Population, t: float = 0.0,
                       zbar_fn: Optional[Callable] = None) -> KappaCoefficients:
    """Drift and volatilities of the log consumption factor under phi = Z^(1-kappa).

    zbar_fn(agent, t) supplies the wealth-factor drift coefficient; the
    default is the consumption-free equilibrium value from the portfolio
    chain. The regime parameter q = -bA/|deltaA|^2 and the Gamma parameters
    are only meaningful for constant coefficients.
    """
    kap = _common_kappa(agent, pop)
    if zbar_fn is None:
        zbar_fn = lambda a, s: mf_zbar_zero_consumption(a, pop, s)
    K = k_alpha_theta(agent, pop)
    al = agent.alpha
    dzw, dzb = agent.deltaZ.w_at(t), agent.deltaZ.b_at(t)
    dz2 = dzw**2 + dzb**2
    e_inv_alpha = float(np.mean([1.0 / a.alpha for a in pop.agents]))
    e_dz2 = float(np.mean([a.deltaZ.norm_sq(t) for a in pop.agents]))
    e_dzb = float(np.mean([a.deltaZ.b_at(t) for a in pop.agents]))
    e_zbar_over_alpha = float(np.mean([zbar_fn(a, t) / a.alpha for a in pop.agents]))
    bA = (kap / (2.0 * al)) * (2.0 * al - 1.0 - kap * (al - 1.0)) * dz2 \
        - (kap / al) * zbar_fn(agent, t) \
        + K * ((kap**2 / 2.0) * e_inv_alpha * e_dz2 - kap * e_zbar_over_alpha)
    dAW = -(kap / al) * dzw
    dAB = -(kap / al) * dzb - kap * K * e_inv_alpha * e_dzb
    const = _schedules_constant(pop)
    nrm2 = dAW**2 + dAB**2
    if const and nrm2 > 0.0 and kap < 0.0:
        q = -bA / nrm2
        shape = -2.0 * q
        scale = nrm2 / (2.0 * abs(kap))
    else:
        q = np.nan
        shape = np.nan
        scale = np.nan
    return KappaCoefficients(bA, dAW, dAB, q, shape, scale, kap, const)


@dataclass(frozen=True)
class GammaAsymptotics:
    regime: str
    shape: Optional[float] = None
    scale: Optional[float] = None
    mean: Optional[float] = None


def gamma_asymptotics(kc: KappaCoefficients) -> GammaAsymptotics:
    """Long-run regime of the consumption diffusion from the sign of q."""
    if not kc.constant_coefficients:
        return GammaAsymptotics("Undefined")
    if kc.vol_sq == 0.0:
        raise ZeroUtilityVolatilityError(
            "deltaA = 0: no diffusion; use deterministic_benchmark for this regime")
    if kc.kappa >= 0.0:
        raise ValueError("asymptotics require kappa < 0")
    if abs(kc.q) < Q_BOUNDARY_TOL:
        return GammaAsymptotics("Boundary")
    if kc.q < 0.0:
        return GammaAsymptotics("GammaLimit", kc.gammaShape, kc.gammaScale,
                                -kc.bA / kc.kappa)
    return GammaAsymptotics("ExtinctionToZero")


def simulate_kappa_terminal(kc: KappaCoefficients, c0: float, t_end: float,
                            n_paths: int, dt: float, seed) -> np.ndarray:
    """Terminal consumption samples from the explicit logistic representation.

    Paths are generated in fixed-size chunks from a single Philox stream, so
    the sample set is reproducible independent of threading.
    """
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    if kc.kappa >= 0:
        raise ValueError("need kappa < 0")
    n_steps = int(round(t_end / dt))
    rng = make_rng(seed)
    out = np.empty(n_paths)
    akap = abs(kc.kappa)
    for lo in range(0, n_paths, TERMINAL_CHUNK):
        hi = min(lo + TERMINAL_CHUNK, n_paths)
        m = hi - lo
        dW = rng.normal(0.0, np.sqrt(dt), (m, n_steps))
        dB = rng.normal(0.0, np.sqrt(dt), (m, n_steps))
        chunk_out = np.empty(m)
        kernels.logistic_terminal(dW, dB, dt, kc.bA, kc.deltaA_W, kc.deltaA_B,
                                  c0, akap, chunk_out)
        out[lo:hi] = chunk_out
    return out


def kappa_trajectory(kc: KappaCoefficients, c0: float, bundle: PathBundle,
                     idio_index: Optional[int] = 0) -> ProcessPath:
    """One path of equilibrium consumption under the power coupling."""
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    dt = bundle.grid.dt
    dB = bundle.common_increments()
    dW = np.zeros_like(dB) if idio_index is None else bundle.idio_increments()[idio_index]
    dlogG = kc.bA * dt + kc.deltaA_W * dW + kc.deltaA_B * dB
    logG = np.concatenate([[0.0], np.cumsum(dlogG)])
    G = np.exp(logG)
    integ = np.concatenate([[0.0], np.cumsum(0.5 * (G[1:] + G[:-1]) * dt)])
    c = c0 * G / (1.0 + abs(kc.kappa) * c0 * integ)
    return ProcessPath(bundle.grid, c)


def deterministic_benchmark(bA0: float, kappa: float, c0: float, times) -> np.ndarray:
    """Zero-volatility consumption flow c' = c (bA0 - |kappa| c), closed form."""
    if kappa >= 0:
        raise ValueError("need kappa < 0")
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    t = np.asarray(times, dtype=float)
    a = abs(kappa)
    if bA0 == 0.0:
        return c0 / (1.0 + a * c0 * t)
    inv = np.exp(-bA0 * t) / c0 + a * (1.0 - np.exp(-bA0 * t)) / bA0
    return 1.0 / inv


def kappa_c0(agent: AgentType, pop: Population) -> float:
    """Initial consumption for the power coupling, phi0/z0 = z0^(-kappa)."""
    _common_kappa(agent, pop)
    return mf_consumption_initial(agent, pop)
