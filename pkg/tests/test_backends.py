"""Numba and numpy kernel backends must agree to rounding error."""
import os
import subprocess
import sys

import numpy as np

from forwardnash import backend_name, make_rng, set_threads
from forwardnash.kernels import ACTIVE_IMPLS, NUMPY_IMPLS


def q_joint_inputs(n_paths=64, n_steps=50, seed=7):
    rng = make_rng(seed)
    dt = 0.02
    dW = rng.normal(0.0, np.sqrt(dt), (n_paths, n_steps))
    dB = rng.normal(0.0, np.sqrt(dt), (n_paths, n_steps))
    const = lambda v: np.full(n_steps + 1, v)
    args = dict(dW=dW, dB=dB, dt=dt, alpha=2.0, theta=0.6, lam=2.0,
                ftil=0.9, log_ctil=np.log(0.25),
                zbar=const(0.19), bpb=const(0.365),
                dzw=const(0.05), dzb=const(0.25),
                dfw=const(0.10), dfb=const(0.15),
                mu=0.3, nu=0.2, sig=1.0, pi=0.38, cmult=1.0,
                mupibar=0.12, spi2bar=0.16, sigpibar=0.4, cbar=0.25,
                lz0=0.0, lp0=np.log(0.8), lx0=0.0)
    return args, n_paths


def test_q_joint_backends_agree():
    args, n_paths = q_joint_inputs()
    out_a = np.empty(n_paths)
    out_n = np.empty(n_paths)
    ACTIVE_IMPLS["q_joint_paths"](*args.values(), out_a)
    NUMPY_IMPLS["q_joint_paths"](*args.values(), out_n)
    assert np.max(np.abs(out_a / out_n - 1.0)) < 1e-12


def mf_inner_inputs(M=12, n_steps=40, seed=3):
    rng = make_rng(seed)
    dt = 0.01
    alpha = rng.uniform(1.2, 2.5, M)
    theta = np.full(M, 0.6)
    m_exp = theta * (1 - alpha) / alpha
    em = m_exp.mean()
    kcoef = -m_exp / (1 + em)
    state = dict(lz=np.zeros(M), lp=np.full(M, np.log(0.8)), lx=np.zeros(M))
    args = dict(dW=rng.normal(0, np.sqrt(dt), (M, n_steps)),
                dB=rng.normal(0, np.sqrt(dt), n_steps), dt=dt,
                alpha=alpha, theta=theta, m_exp=m_exp, kcoef=kcoef, lam=2.0,
                zbar_noc=rng.uniform(0.1, 0.3, M), bpb=np.full(M, 0.3),
                dzw=np.full(M, 0.05), dzb=np.full(M, 0.25),
                dfw=np.full(M, 0.10), dfb=np.full(M, 0.15),
                mu=np.full(M, 0.3), nu=np.full(M, 0.2), sig=np.ones(M),
                pi=rng.uniform(0.2, 0.5, M), em_pop=em,
                mupibar=0.12, spi2bar=0.16, sigpibar=0.4)
    return args, state, n_steps


def run_mf_inner(impl, args, state, n_steps):
    outs = [np.empty(n_steps + 1) for _ in range(5)]
    st = {k: v.copy() for k, v in state.items()}  # the kernel mutates state
    impl(*args.values(), st["lz"], st["lp"], st["lx"], 0.0, *outs)
    return outs


def test_mf_inner_backends_agree():
    args, state, n_steps = mf_inner_inputs()
    outs_a = run_mf_inner(ACTIVE_IMPLS["mf_inner_particles"], args, state, n_steps)
    outs_n = run_mf_inner(NUMPY_IMPLS["mf_inner_particles"], args, state, n_steps)
    for a, n in zip(outs_a, outs_n):
        assert np.max(np.abs(a - n)) < 1e-12


def test_logistic_backends_agree():
    rng = make_rng(11)
    dt = 0.02
    dW = rng.normal(0, np.sqrt(dt), (80, 60))
    dB = rng.normal(0, np.sqrt(dt), (80, 60))
    out_a = np.empty(80)
    out_n = np.empty(80)
    ACTIVE_IMPLS["logistic_terminal"](dW, dB, dt, 0.5, 0.0, 0.5, 0.5, 1.0, out_a)
    NUMPY_IMPLS["logistic_terminal"](dW, dB, dt, 0.5, 0.0, 0.5, 0.5, 1.0, out_n)
    assert np.max(np.abs(out_a / out_n - 1.0)) < 1e-12


def _backend_in_subprocess(value):
    env = dict(os.environ)
    if value is None:
        env.pop("FORWARDNASH_BACKEND", None)
    else:
        env["FORWARDNASH_BACKEND"] = value
    return subprocess.run(
        [sys.executable, "-c", "import forwardnash; print(forwardnash.backend_name())"],
        capture_output=True, text=True, env=env)


def test_env_flag_selects_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0 and proc.stdout.strip() == "numpy"
    proc = _backend_in_subprocess("numba")
    assert proc.returncode == 0 and proc.stdout.strip() == "numba"


def test_env_flag_rejects_garbage():
    proc = _backend_in_subprocess("fortran")
    assert proc.returncode != 0
    assert "FORWARDNASH_BACKEND" in proc.stderr


def test_current_backend_known():
    assert backend_name() in ("numba", "numpy")


def test_thread_cap_does_not_change_results():
    args, n_paths = q_joint_inputs(seed=8)
    set_threads(1)
    out1 = np.empty(n_paths)
    ACTIVE_IMPLS["q_joint_paths"](*args.values(), out1)
    set_threads(4)
    out4 = np.empty(n_paths)
    ACTIVE_IMPLS["q_joint_paths"](*args.values(), out4)
    assert np.array_equal(out1, out4)
