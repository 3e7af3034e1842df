"""Community-alpha generalized network autoregressive (GNAR) models.

Simulation, least-squares estimation, stationarity checks, error bounds,
network autocorrelation diagnostics and forecasting for time series observed
on the nodes of a graph whose nodes are split into communities.
"""

from .acf import corbit_data, cross_correlation, nacf, pnacf, render_corbit_svg, white_noise_band
from .dataio import Panel, election_pipeline, load_election, read_panel_csv, write_panel_csv
from .fit import (BoundReport, DesignSystem, EstimationError, FitResult, asymptotic_covariance,
                  build_design, error_bound, fit_community, fit_gls, fit_ols)
from .forecast import (difference, fit_var_baseline, forecast_one_step, naive_forecast, rmspe,
                       standardize, unstandardize)
from .network import (CommunityPartition, Network, NetworkError, StageAdjacency, apply_missing,
                      build_network, community_mask, distance_matrix, equal_weights,
                      interaction_mask, max_stage, stage_adjacency)
from .order import (ModelOrder, OrderError, check_stationary_companion, check_stationary_sufficient,
                    coefficient_scales, companion_matrix, make_community_order, make_global_order,
                    make_local_order, make_var_order, model_from_json, model_to_json, var_matrices)
from .simulate import (NoiseSpec, Realization, SimulationError, neighborhood_regression,
                       sample_stationary_params, simulate)
from .weights import PeriodicWeights, StaticWeights, periodic_weights_preset

__version__ = "0.1.0"
