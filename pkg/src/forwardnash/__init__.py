"""Numerical equilibria for forward relative performance with CRRA utilities.

Closed-form n-player and mean-field Nash strategies under competitive
consumption/investment preferences, coupled SDE simulation of the utility
factor processes, and Monte Carlo verification of the martingale-optimality
and mean-field compatibility claims.
"""

__version__ = "0.1.0"

from .population import (AgentSampler, AgentType, DegenerateEquilibriumError,
                         Free, Population, Power, Proportional, RegimeError,
                         StockParams, TimeGrid, ValidationResult, VolSchedule,
                         ZeroUtilityVolatilityError, eval_time_fn,
                         meanfield_population, nplayer_population, point_mass,
                         population_expectation, sample_population,
                         uniform_alpha, validate_agent)
from .sde import (PathBundle, ProcessPath, child_seeds, generate_bundle,
                  integrate_log_euler, make_rng, nested_conditional_mean)
from .kernels import backend_name, set_threads
from .crra import (CompetitorAggregates, CrraUtilityPair, best_response_consumption,
                   best_response_portfolio, consistency_drift_Z, f_g_terms,
                   logistic_explicit_Y, logistic_ode_inverse, reconstruct_Z_linear,
                   simulate_Y_euler, y_linear_coefficients, zbar_drift)
from .nplayer import (NashCoefficients, NashSimulation, equilibrium_sigma_pi,
                      eta_matrix, nash_coefficients, nash_consumption_closed_form,
                      nash_portfolio, psi_varphi_n, sigma_pi_residual,
                      simulate_nash_consumption)
from .meanfield import (GammaAsymptotics, KappaCoefficients, MeanFieldCoefficients,
                        MfConsumptionResult, deterministic_benchmark,
                        gamma_asymptotics, k_alpha_theta, kappa_c0,
                        kappa_coefficients, kappa_trajectory, mf_a_coefficients,
                        mf_aggregates, mf_coefficients, mf_consumption_explicit,
                        mf_consumption_initial, mf_consumption_simulate,
                        mf_mean_consumption, mf_portfolio, mf_sigma_pi_bar,
                        mf_zbar_zero_consumption, proportional_consumption,
                        psi_varphi_sigma, simulate_kappa_terminal)
from .verify import (ConvergenceTable, KsResult, MartingaleScenario, Optimal,
                     Perturbed, ResidualReport, compatibility_residual,
                     explicit_vs_euler, extinction_probe, gamma_cdf,
                     ks_gamma_test, martingale_residual)
from .config import ConfigError, ScenarioConfig, bundled_scenario_path, load_scenario, parse_scenario
from .figures import FIGURE_IDS, FigureSpec, default_figure_specs, emit_figure
from .runner import RunResult, run_scenario
