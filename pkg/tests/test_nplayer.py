"""Finite-game equilibrium coefficients and coupled simulation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forwardnash import (AgentType, CompetitorAggregates,
                         DegenerateEquilibriumError, Population, RegimeError,
                         StockParams, TimeGrid, VolSchedule,
                         best_response_consumption, equilibrium_sigma_pi,
                         eta_matrix, generate_bundle, mf_sigma_pi_bar,
                         nash_coefficients, nash_consumption_closed_form,
                         nash_portfolio, psi_varphi_n, sigma_pi_residual,
                         simulate_nash_consumption)

WORKED = AgentType(alpha=2.0, theta=0.6, stock=StockParams(0.3, 0.0, 1.0),
                   deltaZ=VolSchedule(0.0, 0.5), lam=1.0)


def homog(n, agent=WORKED, kind="nplayer"):
    return Population(agents=(agent,) * n, kind=kind)


def hetero_pop(n, seed):
    rng = np.random.default_rng(seed)
    agents = []
    for _ in range(n):
        agents.append(AgentType(
            alpha=float(rng.uniform(1.1, 3.0)),
            theta=float(rng.uniform(0.05, 0.95)),
            stock=StockParams(float(rng.uniform(0.05, 0.5)),
                              float(rng.uniform(0.0, 0.4)),
                              float(rng.uniform(0.5, 1.5))),
            deltaZ=VolSchedule(float(rng.uniform(-0.2, 0.2)),
                               float(rng.uniform(-0.4, 0.6))),
            lam=float(rng.uniform(1.0, 2.0)),
        ))
    return Population(agents=tuple(agents), kind="nplayer")


def test_psi_varphi_worked_case():
    # independently evaluated constants for the symmetric 2-player game
    psi, varphi = psi_varphi_n(homog(2))
    assert psi == pytest.approx(0.4615384615384615, abs=1e-16)
    assert varphi == pytest.approx(0.3076923076923077, abs=1e-16)
    assert equilibrium_sigma_pi(homog(2)) == pytest.approx(4.0 / 7.0, rel=1e-15)


def test_homogeneous_matches_meanfield_at_every_n():
    target = mf_sigma_pi_bar(homog(2, kind="meanfield"))
    assert target == pytest.approx(4.0 / 7.0, rel=1e-15)
    for n in range(2, 12):
        assert equilibrium_sigma_pi(homog(n)) == pytest.approx(target, rel=1e-13)


def test_fixed_point_residual_heterogeneous():
    for seed in range(30):
        pop = hetero_pop(2 + seed % 7, seed)
        assert sigma_pi_residual(pop) < 1e-12
        spb = equilibrium_sigma_pi(pop)
        pis = [nash_portfolio(a, spb, pop.n) for a in pop.agents]
        recon = float(np.mean([a.stock.sigma * p for a, p in zip(pop.agents, pis)]))
        assert recon == pytest.approx(spb, abs=1e-13)


def test_single_player_rejected():
    with pytest.raises(ValueError):
        psi_varphi_n(homog(1))


def test_degenerate_fixed_point():
    # with nu=0 and n=2 the fixed-point slope is 2w/(1+w), w = theta(1-1/alpha),
    # so theta=1 with enormous alpha pins psi at 1
    ag = AgentType(alpha=1e12, theta=1.0, stock=StockParams(0.3, 0.0, 1.0), lam=1.0)
    pop = homog(2, ag)
    psi, _ = psi_varphi_n(pop)
    assert abs(1.0 - psi) < 1e-10
    with pytest.raises(DegenerateEquilibriumError):
        equilibrium_sigma_pi(pop)


def test_consumption_coefficients_worked_case():
    co = nash_coefficients(homog(2))
    assert np.allclose(co.D, 2.6, atol=1e-15)
    assert co.xi_n == pytest.approx(-0.4615384615384615, abs=1e-15)
    eta = co.eta
    assert eta[0, 0] == pytest.approx(0.5494505494505493, abs=1e-15)
    assert eta[0, 1] == pytest.approx(0.16483516483516478, abs=1e-15)
    assert np.allclose(eta, eta.T)


def test_closed_form_consumption_worked_case():
    ctil, c = nash_consumption_closed_form(homog(2), np.array([0.5, 2.0]))
    assert ctil == pytest.approx(1.0, abs=1e-15)
    assert c[0] == pytest.approx(0.7659831786679869, abs=1e-15)
    assert c[1] == pytest.approx(1.3055116977098096, abs=1e-15)
    with pytest.raises(ValueError):
        nash_consumption_closed_form(homog(2), np.array([0.5, -2.0]))


def test_closed_form_broadcasts_paths():
    pop = homog(3)
    R = np.abs(np.random.default_rng(5).normal(1.0, 0.2, size=(3, 17))) + 0.1
    ctil, c = nash_consumption_closed_form(pop, R)
    assert ctil.shape == (17,) and c.shape == (3, 17)
    c0til, c0 = nash_consumption_closed_form(pop, R[:, 3])
    assert c0til == pytest.approx(ctil[3], rel=1e-14)
    assert np.allclose(c0, c[:, 3], rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=6))
def test_exponent_matrix_is_best_response_fixed_point(seed, n):
    """The closed form solves the simultaneous best-response system."""
    pop = hetero_pop(n, seed)
    rng = np.random.default_rng(seed + 1)
    R = rng.uniform(0.3, 3.0, size=n)
    _, c = nash_consumption_closed_form(pop, R)
    logc = np.log(c)
    for i, a in enumerate(pop.agents):
        ctil_minus = float(np.exp((np.sum(logc) - logc[i]) / (n - 1)))
        direct = best_response_consumption(a, R[i] ** (1.0 / a.alpha), ctil_minus)
        assert direct == pytest.approx(c[i], rel=1e-10)


def test_eta_matrix_exponent_identity():
    # rows of eta reproduce c_i = prod R_k^{eta_ik}
    pop = hetero_pop(4, 77)
    eta = eta_matrix(pop)
    R = np.array([0.7, 1.3, 0.9, 2.1])
    _, c = nash_consumption_closed_form(pop, R)
    assert np.allclose(c, np.exp(eta @ np.log(R)), rtol=1e-12)


def test_regime_rejections():
    mixed = Population(agents=(WORKED,
                               AgentType(alpha=0.5, theta=0.3,
                                         stock=StockParams(0.3, 0.0, 1.0), lam=1.0)),
                       kind="nplayer")
    grid = TimeGrid(0.2, 20)
    bundle = generate_bundle(grid, 2, seed=0)
    with pytest.raises(RegimeError):
        simulate_nash_consumption(mixed, bundle)
    low = AgentType(alpha=0.5, theta=0.3, stock=StockParams(0.3, 0.0, 1.0), lam=1.5)
    with pytest.raises(RegimeError):
        simulate_nash_consumption(homog(2, low), bundle)
    decay = AgentType(alpha=2.0, theta=0.6, stock=StockParams(0.3, 0.0, 1.0), lam=0.8)
    with pytest.raises(RegimeError):
        simulate_nash_consumption(homog(2, decay), bundle)


def test_simulation_shapes_positivity_dissipativity():
    rich = AgentType(alpha=2.0, theta=0.6, stock=StockParams(0.3, 0.1, 1.0),
                     deltaZ=VolSchedule(0.05, 0.25), deltaPhi=VolSchedule(0.1, 0.15),
                     bPhiBar=0.3, lam=2.0, z0=1.2, phi0=0.8)
    pop = homog(3, rich)
    grid = TimeGrid(1.0, 400)
    bundle = generate_bundle(grid, 3, seed=21)
    sim = simulate_nash_consumption(pop, bundle)
    assert sim.c.shape == (3, 401) and sim.c_tilde.shape == (401,)
    assert sim.positivity_ok
    assert np.all(sim.Z > 0) and np.all(sim.phi > 0) and np.all(sim.c > 0)
    # the deviation inner product stays nonpositive for lam >= 1
    assert sim.interaction_max <= 1e-12
    # geometric aggregate identity holds nodewise
    assert np.allclose(np.exp(np.mean(np.log(sim.c), axis=0)), sim.c_tilde, rtol=1e-12)


def test_simulation_is_deterministic_given_bundle():
    pop = homog(2)
    bundle = generate_bundle(TimeGrid(0.5, 100), 2, seed=3)
    a = simulate_nash_consumption(pop, bundle)
    b = simulate_nash_consumption(pop, bundle)
    assert np.array_equal(a.c, b.c) and np.array_equal(a.Z, b.Z)


def test_simulation_needs_enough_idio_paths():
    pop = homog(3)
    bundle = generate_bundle(TimeGrid(0.5, 10), 2, seed=3)
    with pytest.raises(ValueError):
        simulate_nash_consumption(pop, bundle)
    with pytest.raises(ValueError):
        simulate_nash_consumption(homog(2, kind="meanfield"),
                                  generate_bundle(TimeGrid(0.5, 10), 2, seed=3))


def test_lam_one_freezes_interaction():
    pop = homog(2)
    bundle = generate_bundle(TimeGrid(0.5, 50), 2, seed=8)
    sim = simulate_nash_consumption(pop, bundle)
    assert np.max(np.abs(sim.interaction)) == 0.0
