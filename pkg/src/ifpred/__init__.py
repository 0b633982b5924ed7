"""Interference prediction from analytic autocorrelation.

Analytic correlation -> ARMA fit -> steady-state Kalman predictor, plus a
Poisson-network simulator and an NMSE evaluation harness.
"""
from .arma import (ArmaModel, FitError, FitReport, approximation_mse, compute_psi,
                   decimate_correlation, fit_arma, model_autocorr, rescale_model,
                   select_order, solve_ma_wilson, solve_yule_walker)
from .correlation import (CorrelationCurve, SpatialConfig, SystemParams, bessel_j0,
                          channel_only_autocorr, channel_product_moment, eta_from_speed,
                          interference_autocorr, jakes_channel_autocorr,
                          spatial_mobility_factor, traffic_product_moment)
from .evaluation import (EvaluationResult, PredictorKind, TechScenario, build_tech_scenario,
                         doppler_normalized, emit_results, evaluate_scenario, nmse,
                         run_baselines)
from .kalman import (DecimatedPredictor, SteadyStatePredictor, StateSpaceModel,
                     steady_state_gain, to_state_space)
from .simulation import InterferenceTrace, ScenarioConfig, run_realization, simulate

__version__ = "0.1.0"
