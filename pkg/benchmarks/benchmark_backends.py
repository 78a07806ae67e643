"""Wall-time comparison of the numba kernels against the numpy fallback.

Run from the repository root after installing the package:

    python3 benchmarks/benchmark_backends.py [--paths 20000] [--steps 1000] [--repeats 5]

The first numba call per kernel compiles and is excluded from timing. Both
backends run inside one process, so FORWARDNASH_BACKEND should be left at
"auto" (the active backend is reported; with "numpy" the comparison is
numpy vs numpy and tells you nothing).
"""
import argparse
import time

import numpy as np

from forwardnash import backend_name, make_rng
from forwardnash.kernels import ACTIVE_IMPLS, NUMPY_IMPLS


def q_joint_args(n_paths, n_steps, rng):
    dt = 1.0 / n_steps
    const = lambda v: np.full(n_steps + 1, v)
    return (rng.normal(0, np.sqrt(dt), (n_paths, n_steps)),
            rng.normal(0, np.sqrt(dt), (n_paths, n_steps)),
            dt, 2.0, 0.6, 2.0, 0.9, np.log(0.25),
            const(0.19), const(0.365), const(0.05), const(0.25),
            const(0.10), const(0.15),
            0.3, 0.2, 1.0, 0.38, 1.0,
            0.12, 0.16, 0.4, 0.25,
            0.0, np.log(0.8), 0.0), np.empty(n_paths)


def mf_inner_args(n_part, n_steps, rng):
    dt = 1.0 / n_steps
    alpha = rng.uniform(1.2, 2.5, n_part)
    theta = np.full(n_part, 0.6)
    m_exp = theta * (1 - alpha) / alpha
    kcoef = -m_exp / (1 + m_exp.mean())
    head = (rng.normal(0, np.sqrt(dt), (n_part, n_steps)),
            rng.normal(0, np.sqrt(dt), n_steps), dt,
            alpha, theta, m_exp, kcoef, 2.0,
            rng.uniform(0.1, 0.3, n_part), np.full(n_part, 0.3),
            np.full(n_part, 0.05), np.full(n_part, 0.25),
            np.full(n_part, 0.10), np.full(n_part, 0.15),
            np.full(n_part, 0.3), np.full(n_part, 0.2), np.ones(n_part),
            rng.uniform(0.2, 0.5, n_part), float(m_exp.mean()),
            0.12, 0.16, 0.4)
    return head, None


def mf_inner_call(impl, head, n_part, n_steps):
    state = (np.zeros(n_part), np.full(n_part, np.log(0.8)), np.zeros(n_part))
    outs = [np.empty(n_steps + 1) for _ in range(5)]
    impl(*head, *state, 0.0, *outs)
    return outs[1][-1]


def logistic_args(n_paths, n_steps, rng):
    dt = 50.0 / n_steps
    return (rng.normal(0, np.sqrt(dt), (n_paths, n_steps)),
            rng.normal(0, np.sqrt(dt), (n_paths, n_steps)),
            dt, 0.5, 0.0, 0.5, 0.5, 1.0), np.empty(n_paths)


def timeit(fn, repeats):
    fn()  # warmup / JIT compile
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = make_rng(0)
    print(f"active backend: {backend_name()}  "
          f"(paths={args.paths}, steps={args.steps}, best of {args.repeats})")
    print(f"{'kernel':<22}{'active [s]':>12}{'numpy [s]':>12}{'speedup':>9}")

    qa, qout = q_joint_args(args.paths, args.steps, rng)
    mh, _ = mf_inner_args(200, args.steps, rng)
    la, lout = logistic_args(args.paths, args.steps, rng)
    cases = {
        "q_joint_paths": lambda impl: impl(*qa, qout),
        "mf_inner_particles": lambda impl: mf_inner_call(impl, mh, 200, args.steps),
        "logistic_terminal": lambda impl: impl(*la, lout),
    }
    for name, call in cases.items():
        t_active = timeit(lambda: call(ACTIVE_IMPLS[name]), args.repeats)
        t_numpy = timeit(lambda: call(NUMPY_IMPLS[name]), args.repeats)
        print(f"{name:<22}{t_active:>12.4f}{t_numpy:>12.4f}{t_numpy / t_active:>8.1f}x")


if __name__ == "__main__":
    main()
