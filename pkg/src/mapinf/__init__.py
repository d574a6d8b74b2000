"""Infinite-server queues with Markov arrivals in a random environment.

Analytic transforms, moments and count distributions for multi-type
MAP-driven infinite-server systems whose environment switches by a
semi-Markov process, destroying all work in service at each switch and
pausing arrivals during repairs; plus a discrete-event simulator used
to cross-check every analytic result.
"""

from .errors import (DomainError, HorizonError, InsufficientDataError, MapinfError,
                     ModelValidationError, NumericalFailure, RefinementError,
                     UnsupportedFeatureError)
from .laws import (Law, ResourceVectorLaw, SubDistribution, deterministic, erlang,
                   exponential, hyperexponential, uniform)
from .mapproc import (MarkedMap, SingleMap, ThinningProfile, arrival_rates,
                      counting_pgf, generator_pgf, poisson_map,
                      stationary_vector, superpose, thin)
from .gridding import TimeGrid
from .model import (GridAlignmentWarning, Model, StateModel, choose_grid,
                    single_state_model)
from .transient import (CountMoments, TransientTransform, count_moments,
                        mean_in_system, resource_mean, second_factorial_moment,
                        solve_pgf, transform_curve)
from .environment import (EnvironmentSolution, HorizonWarning, build_kernel,
                          renewal_matrix, solve_environment,
                          stationary_quadrature, stationary_weights)
from .catastrophe import (CatastropheTransform, PoissonCatastropheResult,
                          composition_residual, exponential_environment_lt,
                          poisson_catastrophe, stationary_with_catastrophes,
                          transient_with_catastrophes)
from .poisson import (count_probability_curve, stationary_count_probability,
                      stationary_count_table)
from .metrics import MetricsReport, compute_report
from .simulate import (CountHistogram, EnvironmentOccupancy, TransientSimulation,
                       simulate_cycle_losses, simulate_environment_only,
                       simulate_stationary_counts, simulate_transient)
from .modelio import (AnalysisConfig, ModelDocument, SimulationConfig,
                      canonical_test_models, load_model, parse_model, save_model,
                      serialize_model)
from .version import __version__

__all__ = [
    "AnalysisConfig", "CatastropheTransform", "CountHistogram", "CountMoments",
    "DomainError", "EnvironmentOccupancy", "EnvironmentSolution",
    "GridAlignmentWarning", "HorizonError", "HorizonWarning",
    "InsufficientDataError", "Law", "MapinfError", "MarkedMap", "MetricsReport",
    "Model", "ModelDocument", "ModelValidationError", "NumericalFailure",
    "PoissonCatastropheResult", "RefinementError", "ResourceVectorLaw",
    "SimulationConfig", "SingleMap", "StateModel", "SubDistribution",
    "ThinningProfile", "TimeGrid",
    "TransientSimulation", "TransientTransform", "UnsupportedFeatureError",
    "__version__", "arrival_rates", "build_kernel", "canonical_test_models",
    "choose_grid", "composition_residual", "compute_report", "count_moments",
    "count_probability_curve",
    "counting_pgf", "deterministic", "erlang", "exponential",
    "exponential_environment_lt", "generator_pgf", "hyperexponential", "load_model",
    "mean_in_system", "parse_model", "poisson_catastrophe", "poisson_map",
    "renewal_matrix", "resource_mean", "save_model", "second_factorial_moment",
    "serialize_model", "simulate_cycle_losses", "simulate_environment_only",
    "simulate_stationary_counts", "simulate_transient", "single_state_model",
    "solve_environment", "solve_pgf",
    "stationary_count_probability", "stationary_count_table",
    "stationary_quadrature", "stationary_vector", "stationary_weights",
    "stationary_with_catastrophes", "superpose", "thin", "transform_curve",
    "transient_with_catastrophes", "uniform",
]
