import numpy as np
import pytest

from forwardnash import (PathBundle, TimeGrid, child_seeds, generate_bundle,
                         integrate_log_euler, make_rng, nested_conditional_mean)

GRID = TimeGrid(1.0, 200)


def test_make_rng_reproducible():
    a = make_rng(42).standard_normal(8)
    b = make_rng(42).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(43).standard_normal(8))


def test_child_seeds_distinct():
    seeds = child_seeds(7, 4)
    draws = [np.random.Generator(np.random.Philox(s)).standard_normal(4) for s in seeds]
    for i in range(4):
        for j in range(i + 1, 4):
            assert not np.array_equal(draws[i], draws[j])


def test_bundle_shapes_and_determinism():
    b1 = generate_bundle(GRID, 3, seed=11)
    b2 = generate_bundle(GRID, 3, seed=11)
    assert b1.common.shape == (201,)
    assert b1.idio.shape == (3, 201)
    assert b1.common[0] == 0.0 and np.all(b1.idio[:, 0] == 0.0)
    assert np.array_equal(b1.common, b2.common)
    assert np.array_equal(b1.idio, b2.idio)
    # increments have the right scale
    assert b1.common_increments().shape == (200,)
    assert np.std(b1.common_increments()) == pytest.approx(np.sqrt(GRID.dt), rel=0.2)


def test_bundle_prefix_stability():
    # the common path must not depend on how many idio paths are requested
    small = generate_bundle(GRID, 1, seed=5)
    big = generate_bundle(GRID, 6, seed=5)
    assert np.array_equal(small.common, big.common)
    assert np.array_equal(small.idio[0], big.idio[0])


def test_log_euler_gbm_exact():
    # constant-coefficient GBM: log-Euler is exact given the increments
    mu, vw, vb = 0.12, 0.3, 0.4
    bundle = generate_bundle(GRID, 1, seed=1)
    path = integrate_log_euler(2.0, lambda t, x: mu, vw, vb, bundle, idio_index=0)
    t = GRID.times()
    w = bundle.idio[0]
    b = bundle.common
    exact = 2.0 * np.exp((mu - 0.5 * (vw**2 + vb**2)) * t + vw * w + vb * b)
    assert np.max(np.abs(path.values / exact - 1.0)) < 1e-12
    assert path.terminal() == path.values[-1]


def test_log_euler_state_feedback():
    # drift reading the state must see the left endpoint
    bundle = generate_bundle(TimeGrid(1.0, 2), 0, seed=2)
    seen = []
    integrate_log_euler(1.0, lambda t, x: seen.append((t, x)) or 0.0, 0.0, 0.0,
                        bundle, idio_index=None)
    assert seen[0] == (0.0, 1.0)
    assert len(seen) == 2


def test_log_euler_nonfinite_drift():
    bundle = generate_bundle(GRID, 0, seed=3)
    with pytest.raises(FloatingPointError, match="step"):
        integrate_log_euler(1.0, lambda t, x: np.nan, 0.1, 0.1, bundle, idio_index=None)


def test_nested_conditional_mean():
    rng = make_rng(0)
    inner = rng.standard_normal((5, 400)) + np.arange(5)[:, None]
    means, se = nested_conditional_mean(inner)
    assert means.shape == (5,)
    assert np.allclose(means, np.arange(5), atol=0.2)
    assert np.all(se > 0) and np.all(se < 0.1)
    with pytest.raises(ValueError):
        nested_conditional_mean(np.zeros((3, 1)))
