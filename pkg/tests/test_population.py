import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forwardnash import (AgentSampler, AgentType, Free, Population, Power,
                         Proportional, StockParams, TimeGrid, VolSchedule,
                         eval_time_fn, meanfield_population, nplayer_population,
                         point_mass, population_expectation, sample_population,
                         uniform_alpha, validate_agent)


def base_agent(**kw):
    defaults = dict(alpha=2.0, theta=0.6, stock=StockParams(0.3, 0.2, 1.0))
    defaults.update(kw)
    return AgentType(**defaults)


def test_stock_total_var():
    st_ = StockParams(0.3, 0.2, 1.0)
    assert st_.total_var == pytest.approx(1.04, abs=0)


def test_vol_schedule_constant_and_callable():
    v = VolSchedule(0.1, 0.2)
    assert v.w_at(0.0) == 0.1 and v.b_at(3.0) == 0.2
    assert v.norm_sq(0.0) == pytest.approx(0.05)
    vt = VolSchedule(lambda t: 0.1 * t, 0.2)
    assert vt.w_at(2.0) == pytest.approx(0.2)


def test_eval_time_fn():
    assert eval_time_fn(0.5, 1.0) == 0.5
    assert eval_time_fn(lambda t: t * 2, 3.0) == 6.0


def test_agent_ratio0():
    ag = base_agent(z0=2.0, phi0=0.5)
    assert ag.ratio0 == pytest.approx(0.25)


def test_validate_agent_flags_bad_fields():
    bad = base_agent(alpha=-1.0, theta=1.5, z0=-2.0)
    res = validate_agent(bad)
    assert not res.ok
    msg = str(res)
    assert "alpha" in msg and "theta" in msg and "z0" in msg


def test_validate_agent_rejects_log_utility_band():
    res = validate_agent(base_agent(alpha=1.0 + 1e-12))
    assert not res.ok


def test_validate_agent_requires_risk():
    res = validate_agent(base_agent(stock=StockParams(0.1, 0.0, 0.0)))
    assert not res.ok


def test_power_coupling_initial_condition():
    # phi0 must equal z0^(1-kappa)
    z0 = 1.7
    good = base_agent(coupling=Power(-0.5), z0=z0, phi0=z0**1.5)
    assert validate_agent(good).ok
    bad = base_agent(coupling=Power(-0.5), z0=z0, phi0=z0**1.5 * 1.01)
    assert not validate_agent(bad).ok
    assert not validate_agent(base_agent(coupling=Power(0.3), z0=1.0, phi0=1.0)).ok


def test_proportional_coupling_positive():
    with pytest.raises(ValueError):
        Proportional(-1.0)
    ag = base_agent(coupling=Proportional(1.4), phi0=1.4)
    assert validate_agent(ag).ok


def test_nplayer_regime_checks():
    pop = nplayer_population([base_agent(alpha=0.5, theta=0.9, lam=1.0)] * 2)
    # alpha must exceed theta/(n-1+theta) and alpha<1 forces lam=1
    res = validate_agent(pop.agents[0], pop)
    assert res.ok
    res = validate_agent(base_agent(alpha=0.4, theta=0.9, lam=2.0), pop)
    assert not res.ok


def test_population_kinds():
    with pytest.raises(ValueError):
        Population((base_agent(),), "nplayer")
    with pytest.raises(ValueError):
        Population((base_agent(), base_agent()), "cluster")
    assert meanfield_population([base_agent()]).n == 1


def test_population_expectation():
    pop = meanfield_population([base_agent(alpha=2.0), base_agent(alpha=4.0)])
    got = population_expectation(pop, lambda a, t: 1.0 / a.alpha)
    assert got == pytest.approx(0.375)
    with pytest.raises(ValueError):
        population_expectation(Population((), "meanfield"), lambda a, t: 1.0)


def test_time_grid():
    g = TimeGrid(1.0, 4)
    assert g.dt == pytest.approx(0.25)
    assert np.allclose(g.times(), [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


def test_sampler_deterministic():
    sampler = AgentSampler(base_agent(), alpha=uniform_alpha(1.2, 2.5),
                           mu=lambda rng: rng.uniform(0.1, 0.4))
    p1 = sample_population(sampler, 16, seed=7)
    p2 = sample_population(sampler, 16, seed=7)
    assert [a.alpha for a in p1.agents] == [a.alpha for a in p2.agents]
    assert [a.stock.mu for a in p1.agents] == [a.stock.mu for a in p2.agents]
    p3 = sample_population(sampler, 16, seed=8)
    assert [a.alpha for a in p3.agents] != [a.alpha for a in p1.agents]


def test_sampler_respects_exclusion_band():
    sampler = AgentSampler(base_agent(lam=1.0, theta=0.2), alpha=uniform_alpha(0.5, 1.5))
    pop = sample_population(sampler, 200, seed=3)
    assert all(abs(a.alpha - 1.0) >= 0.05 for a in pop.agents)


def test_point_mass_sampler():
    pop = sample_population(point_mass(base_agent()), 5, seed=0)
    assert len({a.alpha for a in pop.agents}) == 1


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.1, 3.0), theta=st.floats(0.0, 1.0))
def test_valid_agents_roundtrip(alpha, theta):
    # anything the validator accepts must expose finite derived quantities
    ag = base_agent(alpha=alpha, theta=theta, lam=1.0)
    res = validate_agent(ag)
    if abs(alpha - 1.0) < 1e-9:
        assert not res.ok
        return
    assert res.ok
    assert np.isfinite(ag.ratio0)
    rep = dataclasses.replace(ag, theta=min(theta, 1.0))
    assert validate_agent(rep).ok == res.ok
