"""CRRA utility-factor machinery shared by the finite game and its limit.

Covers the drift restriction tying the wealth utility factor Z to optimal
consumption, single-agent best responses against competitor aggregates, the
ratio process Y = (phi/Z)^(1/alpha) with its logistic dynamics and explicit
solution, and reconstruction of Z from the associated linear equation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .population import AgentType, RegimeError, TimeFn, eval_time_fn
from .sde import PathBundle, ProcessPath


@dataclass(frozen=True)
class CrraUtilityPair:
    """Simulated wealth/consumption utility factors and their ratio."""

    agent: AgentType
    Zpath: ProcessPath
    PhiPath: ProcessPath
    Ypath: ProcessPath

    def ratio_residual(self) -> float:
        y = (self.PhiPath.values / self.Zpath.values) ** (1.0 / self.agent.alpha)
        return float(np.max(np.abs(y / self.Ypath.values - 1.0)))


@dataclass(frozen=True)
class CompetitorAggregates:
    """Leave-one-out population averages seen by a single agent.

    sigma_pi_bar, c_bar, mu_pi_bar, Sigma_pi_sq_bar, nu_pi_sq_bar are
    arithmetic averages; c_tilde is the geometric consumption average.
    n_players sets the finite-game correction terms; None means the
    mean-field limit (the 1/(n-1) terms vanish).
    """

    sigma_pi_bar: TimeFn = 0.0
    c_bar: TimeFn = 0.0
    c_tilde: TimeFn = 1.0
    mu_pi_bar: TimeFn = 0.0
    Sigma_pi_sq_bar: TimeFn = 0.0
    nu_pi_sq_bar: TimeFn = 0.0
    n_players: Optional[int] = None

    def at(self, t: float):
        ct = eval_time_fn(self.c_tilde, t)
        if ct <= 0:
            raise ValueError("geometric consumption aggregate must stay positive")
        return (eval_time_fn(self.sigma_pi_bar, t), eval_time_fn(self.c_bar, t), ct,
                eval_time_fn(self.mu_pi_bar, t), eval_time_fn(self.Sigma_pi_sq_bar, t),
                eval_time_fn(self.nu_pi_sq_bar, t))


def f_g_terms(agent: AgentType, aggregates: CompetitorAggregates, t: float = 0.0) -> Tuple[float, float]:
    """Quadratic competition corrections entering the Z-factor drift.

    f = -theta mu_pi_bar + (theta/2) Sigma_pi_sq_bar
        + (theta^2/2)(sigma_pi_bar^2 + nu_pi_sq_bar/(n-1)),
    g = (theta^2/(n-1)) nu_pi_sq_bar + (theta sigma_pi_bar)^2.
    The 1/(n-1) pieces drop out in the mean-field limit (n_players None).
    """
    th = agent.theta
    spb, _, _, mupb, spi2b, nupi2b = aggregates.at(t)
    if aggregates.n_players is None:
        idio = 0.0
    else:
        idio = nupi2b / (aggregates.n_players - 1)
    f = -th * mupb + 0.5 * th * spi2b + 0.5 * th**2 * (spb**2 + idio)
    g = th**2 * idio + (th * spb) ** 2
    return f, g


def zbar_drift(agent: AgentType, aggregates: CompetitorAggregates, pi_star: float,
               t: float = 0.0, fg: Optional[Tuple[float, float]] = None) -> float:
    """Consumption-free part of the Z drift restriction.

    (1-alpha)(deltaZB theta sigma_pi_bar - f + alpha/2 (g - (nu^2+sigma^2) pi*^2)
              - theta c_bar).
    fg overrides the internally computed competition terms when the caller
    already has them.
    """
    a, th = agent.alpha, agent.theta
    spb, cbar, _, _, _, _ = aggregates.at(t)
    f, g = f_g_terms(agent, aggregates, t) if fg is None else fg
    dzb = agent.deltaZ.b_at(t)
    tv = agent.stock.total_var
    return (1.0 - a) * (dzb * th * spb - f + 0.5 * a * (g - tv * pi_star**2) - th * cbar)


def consistency_drift_Z(agent: AgentType, y_t: float, c_tilde_minus_i: float,
                        zbar_t: float) -> float:
    """Full Z drift: the free part minus alpha times optimal consumption."""
    if c_tilde_minus_i <= 0:
        raise ValueError("geometric consumption aggregate must be positive")
    a, th = agent.alpha, agent.theta
    ftil = np.exp(-th * (1.0 - a) / a * np.log(c_tilde_minus_i))
    return zbar_t - a * ftil * y_t


def best_response_portfolio(agent: AgentType, sigma_pi_bar: float, t: float = 0.0) -> float:
    """Optimal risky fraction against a fixed competitor volatility average."""
    st = agent.stock
    if st.total_var <= 0:
        raise ValueError("nu^2 + sigma^2 must be positive")
    dzw = agent.deltaZ.w_at(t)
    dzb = agent.deltaZ.b_at(t)
    th = agent.theta
    num = st.sigma * th * sigma_pi_bar + (dzw * st.nu + dzb * st.sigma + st.mu
                                          - th * st.sigma * sigma_pi_bar) / agent.alpha
    return num / st.total_var


def best_response_consumption(agent: AgentType, y_t: float, c_tilde_minus_i: float) -> float:
    """c* = c_tilde^(theta(1-1/alpha)) * Y_t."""
    if y_t <= 0 or c_tilde_minus_i <= 0:
        raise ValueError("Y and the consumption aggregate must be positive")
    expo = agent.theta * (1.0 - 1.0 / agent.alpha)
    return float(np.exp(expo * np.log(c_tilde_minus_i)) * y_t)


def y_linear_coefficients(agent: AgentType, zbar_t: float, t: float = 0.0) -> Tuple[float, float, float]:
    """Arithmetic drift rate and volatilities of the ratio process Y.

    Returns (bYbar, deltaYW, deltaYB) where the consumption-free part of the
    Y dynamics is dY = Y(bYbar dt + deltaY dWbar). Derived from the two
    factor drifts by Ito division; the consumption quadratic is added by the
    logistic integrators.
    """
    a = agent.alpha
    bphibar = eval_time_fn(agent.bPhiBar, t)
    dzw, dzb = agent.deltaZ.w_at(t), agent.deltaZ.b_at(t)
    dfw, dfb = agent.deltaPhi.w_at(t), agent.deltaPhi.b_at(t)
    dyw = (dfw - dzw) / a
    dyb = (dfb - dzb) / a
    a_lin = (bphibar - zbar_t - 0.5 * (dfw**2 + dfb**2) + 0.5 * (dzw**2 + dzb**2)) / a
    bybar = a_lin + 0.5 * (dyw**2 + dyb**2)
    return bybar, dyw, dyb


def _forcing_values(forcing, times):
    if callable(forcing):
        return np.array([float(forcing(t)) for t in times])
    arr = np.asarray(forcing, dtype=float)
    if arr.ndim == 0:
        return np.full(times.shape, float(arr))
    if arr.shape != times.shape:
        raise ValueError("forcing path must match the grid nodes")
    return arr


def _y_path_inputs(agent, bYbar, deltaY, forcing, bundle, idio_index):
    if agent.lam < 1.0:
        raise RegimeError("lambda < 1 is outside the admissible regime")
    grid = bundle.grid
    times = grid.times()
    b = np.array([eval_time_fn(bYbar, t) for t in times])
    if callable(deltaY):
        dv = np.array([deltaY(t) for t in times], dtype=float)
        dw, db = dv[:, 0], dv[:, 1]
    else:
        dw = np.array([eval_time_fn(deltaY[0], t) for t in times])
        db = np.array([eval_time_fn(deltaY[1], t) for t in times])
    frc = _forcing_values(forcing, times)
    if np.any(frc <= 0):
        raise ValueError("forcing path must be positive")
    dB = bundle.common_increments()
    dW = np.zeros_like(dB) if idio_index is None else bundle.idio_increments()[idio_index]
    return times, b, dw, db, frc, dW, dB


def logistic_explicit_Y(agent: AgentType, bYbar, deltaY, forcing, bundle: PathBundle,
                        y0: Optional[float] = None, idio_index: Optional[int] = 0) -> ProcessPath:
    """Explicit solution of the logistic ratio equation.

    Y_t = E_t^{-1} / (1/Y_0 + int_0^t E_s^{-1} (lam-1) alpha forcing_s ds)
    with log E_t = int (|deltaY|^2/2 - bYbar) ds - int deltaY dWbar and the
    time integral by the trapezoid rule on the grid.
    """
    times, b, dw, db, frc, dW, dB = _y_path_inputs(agent, bYbar, deltaY, forcing, bundle, idio_index)
    if y0 is None:
        y0 = agent.ratio0 ** (1.0 / agent.alpha)
    if y0 <= 0:
        raise ValueError("Y_0 must be positive")
    dt = bundle.grid.dt
    # log E on the grid, left-point drift sampling to match the Euler scheme
    dlogE = (0.5 * (dw[:-1] ** 2 + db[:-1] ** 2) - b[:-1]) * dt - dw[:-1] * dW - db[:-1] * dB
    logE = np.concatenate([[0.0], np.cumsum(dlogE)])
    Einv = np.exp(-logE)
    integrand = Einv * (agent.lam - 1.0) * agent.alpha * frc
    cumint = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * dt)])
    y = Einv / (1.0 / y0 + cumint)
    return ProcessPath(bundle.grid, y)


def simulate_Y_euler(agent: AgentType, bYbar, deltaY, forcing, bundle: PathBundle,
                     y0: Optional[float] = None, idio_index: Optional[int] = 0) -> ProcessPath:
    """Log-Euler integration of dY = Y((bYbar - (lam-1) alpha forcing Y) dt + deltaY dWbar)."""
    times, b, dw, db, frc, dW, dB = _y_path_inputs(agent, bYbar, deltaY, forcing, bundle, idio_index)
    if y0 is None:
        y0 = agent.ratio0 ** (1.0 / agent.alpha)
    if y0 <= 0:
        raise ValueError("Y_0 must be positive")
    dt = bundle.grid.dt
    lam_a = (agent.lam - 1.0) * agent.alpha
    logy = np.empty(times.shape)
    logy[0] = np.log(y0)
    y = float(y0)
    for s in range(len(times) - 1):
        drift = b[s] - lam_a * frc[s] * y
        logy[s + 1] = logy[s] + (drift - 0.5 * (dw[s] ** 2 + db[s] ** 2)) * dt \
            + dw[s] * dW[s] + db[s] * dB[s]
        y = np.exp(logy[s + 1])
    return ProcessPath(bundle.grid, np.exp(logy))


def logistic_ode_inverse(y0: float, b: float, lam: float, alpha: float,
                         forcing: float, t) -> np.ndarray:
    """Closed form of the deterministic logistic flow, via 1/Y."""
    t = np.asarray(t, dtype=float)
    q = (lam - 1.0) * alpha * forcing
    if b == 0.0:
        inv = 1.0 / y0 + q * t
    else:
        inv = np.exp(-b * t) / y0 + q * (1.0 - np.exp(-b * t)) / b
    return 1.0 / inv


def reconstruct_Z_linear(agent: AgentType, zbar, forcing, phi_path: ProcessPath,
                         bundle: PathBundle, z0: Optional[float] = None,
                         idio_index: Optional[int] = 0) -> ProcessPath:
    """Rebuild Z from its linear representation in L = Z^(1/alpha).

    L solves an inhomogeneous linear equation with homogeneous factor
    log G = int (zbar/alpha - |deltaZ|^2/(2 alpha)) ds + int (deltaZ/alpha) dWbar
    and source forcing_s phi_s^(1/alpha); Z = L^alpha. Same bundle as the
    direct simulation gives a strong-error level comparison.
    """
    a = agent.alpha
    grid = bundle.grid
    times = grid.times()
    dt = grid.dt
    if z0 is None:
        z0 = agent.z0
    zb = np.array([eval_time_fn(zbar, t) for t in times])
    frc = _forcing_values(forcing, times)
    dzw = np.array([agent.deltaZ.w_at(t) for t in times])
    dzb = np.array([agent.deltaZ.b_at(t) for t in times])
    dB = bundle.common_increments()
    dW = np.zeros_like(dB) if idio_index is None else bundle.idio_increments()[idio_index]
    dlogG = (zb[:-1] / a - (dzw[:-1] ** 2 + dzb[:-1] ** 2) / (2.0 * a)) * dt \
        + dzw[:-1] / a * dW + dzb[:-1] / a * dB
    logG = np.concatenate([[0.0], np.cumsum(dlogG)])
    G = np.exp(logG)
    src = frc * phi_path.values ** (1.0 / a) / G
    cumsrc = np.concatenate([[0.0], np.cumsum(0.5 * (src[1:] + src[:-1]) * dt)])
    L = G * (z0 ** (1.0 / a) - cumsrc)
    if np.any(L <= 0):
        raise FloatingPointError("linear representation left the positive cone")
    return ProcessPath(grid, L**a)
