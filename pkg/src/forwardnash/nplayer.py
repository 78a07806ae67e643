"""Finite-population Nash equilibrium: fixed points, closed forms, simulation.

Portfolio side: the volatility-average fixed point and per-agent equilibrium
portfolios. Consumption side: the exponent matrix linking equilibrium
consumption to the utility-factor ratios, the geometric aggregate, and
simulation of the coupled factor system under the drift restrictions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .crra import CompetitorAggregates, zbar_drift
from .population import (AgentType, DegenerateEquilibriumError, Population,
                         RegimeError, eval_time_fn, validate_agent)
from .sde import PathBundle

PSI_DEGENERATE_TOL = 1e-10
XI_DEGENERATE_TOL = 1e-12


def _stock_arrays(pop: Population):
    mu = np.array([a.stock.mu for a in pop.agents])
    nu = np.array([a.stock.nu for a in pop.agents])
    sig = np.array([a.stock.sigma for a in pop.agents])
    return mu, nu, sig


def _w_vec(pop: Population) -> np.ndarray:
    return np.array([a.theta * (1.0 - 1.0 / a.alpha) for a in pop.agents])


def _btilde(pop: Population) -> np.ndarray:
    """Per-agent portfolio denominators with the finite-population correction."""
    n = pop.n
    _, nu, sig = _stock_arrays(pop)
    return nu**2 + sig**2 * (1.0 + _w_vec(pop) / (n - 1.0))


def _excess_return(agent: AgentType, t: float) -> float:
    st = agent.stock
    return agent.deltaZ.w_at(t) * st.nu + agent.deltaZ.b_at(t) * st.sigma + st.mu


def psi_varphi_n(pop: Population, t: float = 0.0) -> Tuple[float, float]:
    """Coefficients of the volatility-average fixed point sigma_pi_bar = psi sigma_pi_bar + varphi.

    Averaging sigma_i pi_i* over the population and collecting the
    sigma_pi_bar terms gives psi with an n/(n-1) weight on each agent's
    competition load; this bookkeeping makes the homogeneous finite game
    aggregate agree with the mean-field one at every n.
    """
    if pop.n < 2:
        raise ValueError("need at least 2 players")
    n = pop.n
    _, nu, sig = _stock_arrays(pop)
    w = _w_vec(pop)
    bt = _btilde(pop)
    alpha = np.array([a.alpha for a in pop.agents])
    x = np.array([_excess_return(a, t) for a in pop.agents])
    psi = (n / (n - 1.0)) * float(np.mean(sig**2 * w / bt))
    varphi = float(np.mean(sig / alpha * x / bt))
    return psi, varphi


def equilibrium_sigma_pi(pop: Population, t: float = 0.0) -> float:
    """Solve the aggregate fixed point; residual is checked to 1e-12."""
    psi, varphi = psi_varphi_n(pop, t)
    if abs(1.0 - psi) < PSI_DEGENERATE_TOL:
        raise DegenerateEquilibriumError(f"psi_n = {psi!r}: fixed point degenerate")
    spb = varphi / (1.0 - psi)
    resid = abs(spb - (psi * spb + varphi))
    if resid >= 1e-12:
        raise FloatingPointError(f"fixed point residual {resid!r}")
    return spb


def sigma_pi_residual(pop: Population, t: float = 0.0) -> float:
    psi, varphi = psi_varphi_n(pop, t)
    spb = varphi / (1.0 - psi)
    return abs(spb - (psi * spb + varphi))


def nash_portfolio(agent: AgentType, sigma_pi_bar: float, n: int, t: float = 0.0) -> float:
    """Equilibrium portfolio of one agent given the population average sigma_pi_bar."""
    st = agent.stock
    w = agent.theta * (1.0 - 1.0 / agent.alpha)
    bt = st.nu**2 + st.sigma**2 * (1.0 + w / (n - 1.0))
    if bt == 0.0:
        raise ValueError("zero portfolio denominator")
    return (st.sigma * w * (n / (n - 1.0)) * sigma_pi_bar + _excess_return(agent, t) / agent.alpha) / bt


@dataclass(frozen=True)
class NashCoefficients:
    psi_n: float
    varphi_n: float
    xi_n: float
    eta: np.ndarray
    D: np.ndarray


def _consumption_exponents(pop: Population):
    n = pop.n
    alpha = np.array([a.alpha for a in pop.agents])
    theta = np.array([a.theta for a in pop.agents])
    D = alpha * (n - 1.0) - theta * (1.0 - alpha)
    for k, dk in enumerate(D):
        if dk <= 0:
            raise RegimeError(f"agent {k}: D = alpha(n-1) - theta(1-alpha) = {dk!r} <= 0")
    xi = float(np.sum(theta * (1.0 - alpha) / D))
    if abs(xi + 1.0) < XI_DEGENERATE_TOL:
        raise DegenerateEquilibriumError(f"xi_n + 1 = {xi + 1.0!r}: consumption system degenerate")
    return alpha, theta, D, xi


def eta_matrix(pop: Population) -> np.ndarray:
    """Exponent matrix: c_i* = prod_k R_k^(eta_ik)."""
    n = pop.n
    alpha, theta, D, xi = _consumption_exponents(pop)
    ti = theta * (1.0 - alpha)
    eta = -(n - 1.0) * np.outer(ti / ((xi + 1.0) * D), 1.0 / D)
    diag = (n - 1.0) / D * (1.0 - ti / ((xi + 1.0) * D))
    np.fill_diagonal(eta, diag)
    return eta


def nash_coefficients(pop: Population, t: float = 0.0) -> NashCoefficients:
    psi, varphi = psi_varphi_n(pop, t)
    alpha, theta, D, xi = _consumption_exponents(pop)
    return NashCoefficients(psi, varphi, xi, eta_matrix(pop), D)


def nash_consumption_closed_form(pop: Population, R):
    """Equilibrium consumption from the utility-factor ratios R_k = phi_k/Z_k.

    Returns (c_tilde, c) where c_tilde is the geometric population average
    and c the per-agent consumption. R has shape (n,) or (n, m) for paths.
    """
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ValueError("ratios must be positive")
    n = pop.n
    alpha, theta, D, xi = _consumption_exponents(pop)
    logR = np.log(R)
    shape_tail = (1,) * (logR.ndim - 1)
    invD = (1.0 / D).reshape((n,) + shape_tail)
    log_ctil = ((n - 1.0) / n) / (xi + 1.0) * np.sum(invD * logR, axis=0)
    w_i = (-n * theta * (1.0 - alpha) / D).reshape((n,) + shape_tail)
    r_i = ((n - 1.0) / D).reshape((n,) + shape_tail)
    logc = w_i * log_ctil[None, ...] + r_i * logR
    return np.exp(log_ctil), np.exp(logc)


@dataclass(frozen=True)
class NashSimulation:
    times: np.ndarray
    c: np.ndarray
    c_tilde: np.ndarray
    Z: np.ndarray
    phi: np.ndarray
    interaction: np.ndarray
    positivity_ok: bool
    coefficients: NashCoefficients

    @property
    def interaction_max(self) -> float:
        return float(np.max(self.interaction))


def _check_regime(pop: Population):
    alphas = np.array([a.alpha for a in pop.agents])
    lams = np.array([a.lam for a in pop.agents])
    if np.any(alphas < 1.0) and np.any(alphas > 1.0):
        raise RegimeError("mixed risk-aversion regimes are not supported")
    if np.all(alphas < 1.0) and np.any(lams != 1.0):
        raise RegimeError("alpha < 1 regime requires lambda = 1 for every agent")
    if np.all(alphas > 1.0) and np.any(lams < 1.0):
        raise RegimeError("alpha > 1 regime requires lambda >= 1 for every agent")
    for k, agent in enumerate(pop.agents):
        res = validate_agent(agent, context=pop)
        if not res.ok:
            raise RegimeError(f"agent {k}: {res}")


def simulate_nash_consumption(pop: Population, bundle: PathBundle) -> NashSimulation:
    """Simulate the coupled equilibrium utility-factor system for all players.

    Each (Z_i, phi_i) follows its drift restriction, with consumption closed
    nodewise through the exponent matrix; the consumption feedback couples the
    players through the leave-one-out arithmetic mean and the geometric
    aggregate. Reports the dissipativity inner-product interaction term
    -sum_{i,k} c_i^2 (lam_k - 1) eta_ik alpha_k c_k along the path.
    """
    if pop.kind != "nplayer":
        raise ValueError("expected an nplayer population")
    _check_regime(pop)
    n = pop.n
    if bundle.n_idio < n:
        raise ValueError(f"bundle provides {bundle.n_idio} idiosyncratic paths, need {n}")
    coeffs = nash_coefficients(pop)
    grid = bundle.grid
    times = grid.times()
    dt = grid.dt
    n_steps = grid.n_steps

    alpha = np.array([a.alpha for a in pop.agents])
    theta = np.array([a.theta for a in pop.agents])
    lam = np.array([a.lam for a in pop.agents])
    mu, nu, sig = _stock_arrays(pop)

    # deterministic portfolio chain, evaluated on the grid
    pi = np.empty((n, n_steps + 1))
    zbar_noc = np.empty((n, n_steps + 1))
    dzw = np.empty((n, n_steps + 1))
    dzb = np.empty((n, n_steps + 1))
    dfw = np.empty((n, n_steps + 1))
    dfb = np.empty((n, n_steps + 1))
    bpb = np.empty((n, n_steps + 1))
    for s, t in enumerate(times):
        spb_full = equilibrium_sigma_pi(pop, t)
        pi[:, s] = [nash_portfolio(a, spb_full, n, t) for a in pop.agents]
        mupi = mu * pi[:, s]
        spi2 = (nu**2 + sig**2) * pi[:, s] ** 2
        sigpi = sig * pi[:, s]
        nupi2 = nu**2 * pi[:, s] ** 2
        for i, a in enumerate(pop.agents):
            agg = CompetitorAggregates(
                sigma_pi_bar=(np.sum(sigpi) - sigpi[i]) / (n - 1.0),
                c_bar=0.0,
                mu_pi_bar=(np.sum(mupi) - mupi[i]) / (n - 1.0),
                Sigma_pi_sq_bar=(np.sum(spi2) - spi2[i]) / (n - 1.0),
                nu_pi_sq_bar=(np.sum(nupi2) - nupi2[i]) / (n - 1.0),
                n_players=n,
            )
            zbar_noc[i, s] = zbar_drift(a, agg, pi[i, s], t)
            dzw[i, s] = a.deltaZ.w_at(t)
            dzb[i, s] = a.deltaZ.b_at(t)
            dfw[i, s] = a.deltaPhi.w_at(t)
            dfb[i, s] = a.deltaPhi.b_at(t)
            bpb[i, s] = eval_time_fn(a.bPhiBar, t)

    dW = bundle.idio_increments()[:n]
    dB = bundle.common_increments()
    lz = np.log(np.array([a.z0 for a in pop.agents]))
    lp = np.log(np.array([a.phi0 for a in pop.agents]))
    Z = np.empty((n, n_steps + 1))
    phi = np.empty((n, n_steps + 1))
    c = np.empty((n, n_steps + 1))
    ctil = np.empty(n_steps + 1)
    inter = np.empty(n_steps + 1)
    eta = coeffs.eta
    for s in range(n_steps + 1):
        Z[:, s] = np.exp(lz)
        phi[:, s] = np.exp(lp)
        ctil[s], cs = nash_consumption_closed_form(pop, np.exp(lp - lz))
        c[:, s] = cs
        # q_i = -sum_k (lam_k-1) eta_ik alpha_k c_k; inner product with c_i^2
        qvec = -(eta @ ((lam - 1.0) * alpha * cs))
        inter[s] = float(np.sum(cs**2 * qvec))
        if s == n_steps:
            break
        cbar_minus = (np.sum(cs) - cs) / (n - 1.0)
        bz = zbar_noc[:, s] - (1.0 - alpha) * theta * cbar_minus - alpha * cs
        bp = bpb[:, s] - lam * alpha * cs
        lz = lz + (bz - 0.5 * (dzw[:, s] ** 2 + dzb[:, s] ** 2)) * dt \
            + dzw[:, s] * dW[:, s] + dzb[:, s] * dB[s]
        lp = lp + (bp - 0.5 * (dfw[:, s] ** 2 + dfb[:, s] ** 2)) * dt \
            + dfw[:, s] * dW[:, s] + dfb[:, s] * dB[s]
    ok = bool(np.all(np.isfinite(c)) and np.all(c > 0))
    return NashSimulation(times, c, ctil, Z, phi, inter, ok, coeffs)
