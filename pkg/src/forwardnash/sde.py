"""Brownian path bundles and log-Euler integration.

All randomness flows through numpy Philox streams keyed by explicit seeds, so
every simulation in the package is reproducible bit for bit from its seed and
independent of how work is batched.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .population import TimeGrid


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def child_seeds(seed, n: int):
    """Independent child seed sequences for substream-per-task designs."""
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class PathBundle:
    """One common Brownian path plus n_idio idiosyncratic ones on a grid.

    Paths are stored at grid knots (length n_steps + 1, starting at 0);
    increments are first differences.
    """

    grid: TimeGrid
    common: np.ndarray
    idio: np.ndarray
    seed: Optional[int] = None

    @property
    def n_idio(self) -> int:
        return self.idio.shape[0]

    def common_increments(self) -> np.ndarray:
        return np.diff(self.common)

    def idio_increments(self) -> np.ndarray:
        return np.diff(self.idio, axis=1)


def generate_bundle(grid: TimeGrid, n_idio: int, seed) -> PathBundle:
    """Sample a path bundle. Deterministic in (grid, n_idio, seed).

    All increments are drawn from a single Philox stream in a fixed order,
    so results do not depend on worker counts or chunking downstream.
    """
    if n_idio < 0:
        raise ValueError("n_idio must be >= 0")
    rng = make_rng(seed)
    scale = np.sqrt(grid.dt)
    z = rng.standard_normal((n_idio + 1, grid.n_steps)) * scale
    paths = np.concatenate([np.zeros((n_idio + 1, 1)), np.cumsum(z, axis=1)], axis=1)
    return PathBundle(grid, paths[0], paths[1:], seed)


@dataclass(frozen=True)
class ProcessPath:
    grid: TimeGrid
    values: np.ndarray

    def terminal(self) -> float:
        return float(self.values[-1])


def integrate_log_euler(x0: float, drift: Callable[[float, float], float],
                        volW, volB, bundle: PathBundle,
                        idio_index: Optional[int] = 0) -> ProcessPath:
    """Euler scheme on log X for a positive scalar diffusion.

    d log X = (drift(t, X) - vol^2/2) dt + volW dW + volB dB, where drift is
    the arithmetic drift rate of X itself and may depend on the current state.
    volW, volB are constants or functions of time. idio_index selects the
    idiosyncratic path; None drops the W channel.
    """
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    grid = bundle.grid
    dt = grid.dt
    dB = bundle.common_increments()
    if idio_index is None:
        dW = np.zeros_like(dB)
    else:
        dW = bundle.idio_increments()[idio_index]
    logx = np.empty(grid.n_steps + 1)
    logx[0] = np.log(x0)
    t = 0.0
    x = float(x0)
    for s in range(grid.n_steps):
        vw = volW(t) if callable(volW) else volW
        vb = volB(t) if callable(volB) else volB
        b = drift(t, x)
        if not np.isfinite(b):
            raise FloatingPointError(f"non-finite drift {b!r} at step {s} (t={t:.6g})")
        logx[s + 1] = logx[s] + (b - 0.5 * (vw * vw + vb * vb)) * dt + vw * dW[s] + vb * dB[s]
        x = np.exp(logx[s + 1])
        t += dt
    return ProcessPath(grid, np.exp(logx))


def nested_conditional_mean(inner_values: np.ndarray):
    """Row-wise means and standard errors for nested Monte Carlo.

    inner_values has shape (n_outer, n_inner): for each outer (conditioning)
    scenario, the inner samples of the functional being averaged. Returns
    (means, standard_errors), one entry per outer scenario.
    """
    vals = np.asarray(inner_values, dtype=float)
    if vals.ndim != 2:
        raise ValueError("expected a 2d array (n_outer, n_inner)")
    n_inner = vals.shape[1]
    if n_inner < 2:
        raise ValueError("need at least 2 inner samples per outer scenario")
    means = vals.mean(axis=1)
    se = vals.std(axis=1, ddof=1) / np.sqrt(n_inner)
    return means, se
