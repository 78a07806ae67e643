"""Hot simulation loops with a numba backend and a pure-numpy fallback.

Backend selection: environment variable FORWARDNASH_BACKEND in
{"auto", "numba", "numpy"} read at import time. "auto" takes numba when it
imports cleanly. Both backends implement identical arithmetic per path; the
numba side parallelizes over paths with one output slot per path and no
shared accumulators, so results never depend on the thread count.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

_ENV = os.environ.get("FORWARDNASH_BACKEND", "auto").strip().lower()
if _ENV not in ("auto", "numba", "numpy"):
    raise ValueError(f"FORWARDNASH_BACKEND={_ENV!r}, expected auto, numba or numpy")

try:
    warnings.filterwarnings("ignore", message=".*TBB.*")
    import numba
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False
    prange = range

if _ENV == "numba" and not _HAVE_NUMBA:  # pragma: no cover
    raise ImportError("FORWARDNASH_BACKEND=numba but numba is not importable")

USE_NUMBA = _HAVE_NUMBA if _ENV == "auto" else _ENV == "numba"


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> None:
    """Cap the numba thread pool. Wall-time only; results are unaffected."""
    if USE_NUMBA and n >= 1:
        try:
            numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
        except ValueError:  # pragma: no cover
            pass


# ---------------------------------------------------------------------------
# forward-criterion process Q along a strategy, one agent vs fixed aggregates
# ---------------------------------------------------------------------------

def _q_joint_loops(dW, dB, dt, alpha, theta, lam, ftil, log_ctil,
                   zbar, bpb, dzw, dzb, dfw, dfb,
                   mu, nu, sig, pi, cmult,
                   mupibar, spi2bar, sigpibar, cbar,
                   lz0, lp0, lx0, out):
    n_paths, n_steps = dW.shape
    one_m_a = 1.0 - alpha
    pvar = 0.5 * (nu * nu + sig * sig) * pi * pi
    volx_w = nu * pi
    volx_b = sig * pi - theta * sigpibar
    comp = theta * (mupibar - 0.5 * spi2bar - cbar)
    for p in prange(n_paths):
        lz = lz0
        lp = lp0
        lx = lx0
        cstar = ftil * np.exp((lp - lz) / alpha)
        ig_prev = np.exp(lp + one_m_a * (np.log(cmult * cstar) - theta * log_ctil + lx))
        integ = 0.0
        for s in range(n_steps):
            bz = zbar[s] - alpha * cstar
            bp = bpb[s] - lam * alpha * cstar
            xdrift = mu * pi - pvar - cmult * cstar - comp
            lz = lz + (bz - 0.5 * (dzw[s] * dzw[s] + dzb[s] * dzb[s])) * dt \
                + dzw[s] * dW[p, s] + dzb[s] * dB[p, s]
            lp = lp + (bp - 0.5 * (dfw[s] * dfw[s] + dfb[s] * dfb[s])) * dt \
                + dfw[s] * dW[p, s] + dfb[s] * dB[p, s]
            lx = lx + xdrift * dt + volx_w * dW[p, s] + volx_b * dB[p, s]
            cstar = ftil * np.exp((lp - lz) / alpha)
            ig = np.exp(lp + one_m_a * (np.log(cmult * cstar) - theta * log_ctil + lx))
            integ += 0.5 * (ig_prev + ig) * dt
            ig_prev = ig
        out[p] = (np.exp(lz + one_m_a * lx) + integ) / one_m_a


def _q_joint_numpy(dW, dB, dt, alpha, theta, lam, ftil, log_ctil,
                   zbar, bpb, dzw, dzb, dfw, dfb,
                   mu, nu, sig, pi, cmult,
                   mupibar, spi2bar, sigpibar, cbar,
                   lz0, lp0, lx0, out):
    n_paths, n_steps = dW.shape
    one_m_a = 1.0 - alpha
    pvar = 0.5 * (nu * nu + sig * sig) * pi * pi
    volx_w = nu * pi
    volx_b = sig * pi - theta * sigpibar
    comp = theta * (mupibar - 0.5 * spi2bar - cbar)
    lz = np.full(n_paths, lz0)
    lp = np.full(n_paths, lp0)
    lx = np.full(n_paths, lx0)
    cstar = ftil * np.exp((lp - lz) / alpha)
    ig_prev = np.exp(lp + one_m_a * (np.log(cmult * cstar) - theta * log_ctil + lx))
    integ = np.zeros(n_paths)
    for s in range(n_steps):
        bz = zbar[s] - alpha * cstar
        bp = bpb[s] - lam * alpha * cstar
        xdrift = mu * pi - pvar - cmult * cstar - comp
        lz = lz + (bz - 0.5 * (dzw[s] ** 2 + dzb[s] ** 2)) * dt \
            + dzw[s] * dW[:, s] + dzb[s] * dB[:, s]
        lp = lp + (bp - 0.5 * (dfw[s] ** 2 + dfb[s] ** 2)) * dt \
            + dfw[s] * dW[:, s] + dfb[s] * dB[:, s]
        lx = lx + xdrift * dt + volx_w * dW[:, s] + volx_b * dB[:, s]
        cstar = ftil * np.exp((lp - lz) / alpha)
        ig = np.exp(lp + one_m_a * (np.log(cmult * cstar) - theta * log_ctil + lx))
        integ += 0.5 * (ig_prev + ig) * dt
        ig_prev = ig
    out[:] = (np.exp(lz + one_m_a * lx) + integ) / one_m_a


# ---------------------------------------------------------------------------
# mean-field inner particle system sharing one common path
# ---------------------------------------------------------------------------

def _mf_inner_loops(dW, dB, dt, alpha, theta, m_exp, kcoef, lam,
                    zbar_noc, bpb, dzw, dzb, dfw, dfb,
                    mu, nu, sig, pi, em_pop,
                    mupibar, spi2bar, sigpibar,
                    lz, lp, lx, lxbar0,
                    log_cbar_closed, cbar_est, log_xbar_closed,
                    mean_logc, mean_logx):
    n_part, n_steps = dW.shape
    lxbar = lxbar0
    logy = np.empty(n_part)
    c = np.empty(n_part)
    for s in range(n_steps + 1):
        e_logy = 0.0
        for m in range(n_part):
            logy[m] = (lp[m] - lz[m]) / alpha[m]
            e_logy += logy[m]
        e_logy /= n_part
        cbar = 0.0
        sum_logc = 0.0
        sum_lx = 0.0
        for m in range(n_part):
            logc = logy[m] + kcoef[m] * e_logy
            c[m] = np.exp(logc)
            cbar += c[m]
            sum_logc += logc
            sum_lx += lx[m]
        cbar /= n_part
        log_cbar_closed[s] = e_logy / (1.0 + em_pop)
        cbar_est[s] = cbar
        log_xbar_closed[s] = lxbar
        mean_logc[s] = sum_logc / n_part
        mean_logx[s] = sum_lx / n_part
        if s == n_steps:
            break
        for m in range(n_part):
            bz = zbar_noc[m] - (1.0 - alpha[m]) * theta[m] * cbar - alpha[m] * c[m]
            bp = bpb[m] - lam * ((1.0 - alpha[m]) * theta[m] * cbar + alpha[m] * c[m])
            lz[m] = lz[m] + (bz - 0.5 * (dzw[m] * dzw[m] + dzb[m] * dzb[m])) * dt \
                + dzw[m] * dW[m, s] + dzb[m] * dB[s]
            lp[m] = lp[m] + (bp - 0.5 * (dfw[m] * dfw[m] + dfb[m] * dfb[m])) * dt \
                + dfw[m] * dW[m, s] + dfb[m] * dB[s]
            xdrift = mu[m] * pi[m] - 0.5 * (nu[m] * nu[m] + sig[m] * sig[m]) * pi[m] * pi[m] - c[m]
            lx[m] = lx[m] + xdrift * dt + nu[m] * pi[m] * dW[m, s] + sig[m] * pi[m] * dB[s]
        lxbar = lxbar + (mupibar - 0.5 * spi2bar - cbar) * dt + sigpibar * dB[s]


def _mf_inner_numpy(dW, dB, dt, alpha, theta, m_exp, kcoef, lam,
                    zbar_noc, bpb, dzw, dzb, dfw, dfb,
                    mu, nu, sig, pi, em_pop,
                    mupibar, spi2bar, sigpibar,
                    lz, lp, lx, lxbar0,
                    log_cbar_closed, cbar_est, log_xbar_closed,
                    mean_logc, mean_logx):
    n_part, n_steps = dW.shape
    lxbar = lxbar0
    pvar = 0.5 * (nu**2 + sig**2) * pi**2
    for s in range(n_steps + 1):
        logy = (lp - lz) / alpha
        e_logy = logy.mean()
        logc = logy + kcoef * e_logy
        c = np.exp(logc)
        cbar = c.mean()
        log_cbar_closed[s] = e_logy / (1.0 + em_pop)
        cbar_est[s] = cbar
        log_xbar_closed[s] = lxbar
        mean_logc[s] = logc.mean()
        mean_logx[s] = lx.mean()
        if s == n_steps:
            break
        bz = zbar_noc - (1.0 - alpha) * theta * cbar - alpha * c
        bp = bpb - lam * ((1.0 - alpha) * theta * cbar + alpha * c)
        lz += (bz - 0.5 * (dzw**2 + dzb**2)) * dt + dzw * dW[:, s] + dzb * dB[s]
        lp += (bp - 0.5 * (dfw**2 + dfb**2)) * dt + dfw * dW[:, s] + dfb * dB[s]
        lx += (mu * pi - pvar - c) * dt + nu * pi * dW[:, s] + sig * pi * dB[s]
        lxbar = lxbar + (mupibar - 0.5 * spi2bar - cbar) * dt + sigpibar * dB[s]


# ---------------------------------------------------------------------------
# logistic terminal draw for geometric forcing, c_T = c0 G / (1 + a c0 int G)
# ---------------------------------------------------------------------------

def _logistic_terminal_loops(dW, dB, dt, b_drift, vol_w, vol_b, c0, a_coef, out):
    n_paths, n_steps = dW.shape
    for p in prange(n_paths):
        lg = 0.0
        g_prev = 1.0
        integ = 0.0
        for s in range(n_steps):
            lg += b_drift * dt + vol_w * dW[p, s] + vol_b * dB[p, s]
            g = np.exp(lg)
            integ += 0.5 * (g_prev + g) * dt
            g_prev = g
        out[p] = c0 * g_prev / (1.0 + a_coef * c0 * integ)


def _logistic_terminal_numpy(dW, dB, dt, b_drift, vol_w, vol_b, c0, a_coef, out):
    lg = np.cumsum(b_drift * dt + vol_w * dW + vol_b * dB, axis=1)
    g = np.concatenate([np.ones((dW.shape[0], 1)), np.exp(lg)], axis=1)
    integ = np.trapezoid(g, dx=dt, axis=1)
    out[:] = c0 * g[:, -1] / (1.0 + a_coef * c0 * integ)


if USE_NUMBA:
    q_joint_paths = njit(cache=True, parallel=True)(_q_joint_loops)
    mf_inner_particles = njit(cache=True)(_mf_inner_loops)
    logistic_terminal = njit(cache=True, parallel=True)(_logistic_terminal_loops)
else:
    q_joint_paths = _q_joint_numpy
    mf_inner_particles = _mf_inner_numpy
    logistic_terminal = _logistic_terminal_numpy

# numpy reference implementations, kept importable under any backend for
# cross-backend agreement tests and the benchmark script
NUMPY_IMPLS = {
    "q_joint_paths": _q_joint_numpy,
    "mf_inner_particles": _mf_inner_numpy,
    "logistic_terminal": _logistic_terminal_numpy,
}
ACTIVE_IMPLS = {
    "q_joint_paths": q_joint_paths,
    "mf_inner_particles": mf_inner_particles,
    "logistic_terminal": logistic_terminal,
}
