"""Time-dependent stochastic block models for bicycle-sharing trip networks."""
from .analysis import (adjusted_rand_index, aic, compare_models, degree_identity_residual,
                       label_blocks, param_count, sample_network)
from .discrete import (BlockState, DiscreteModel, KlConfig, delta_objective, fit_discrete,
                       fit_static, log_likelihood_discrete, mle_given_labels, profile_objective)
from .ingest import CleaningPolicy, CleaningReport, TripRecord, build_network, clean_trips, parse_trips
from .mixed import (GdConfig, MixedModel, c_totals, fit, gradient, init_params, log_likelihood,
                    normalize, rates)
from .network import (BlockCounts, DegreeSummary, MultilayerNetwork, aggregate, block_counts,
                      degree_hour_matrix, degree_summary, hourly_totals)
from .diagnostics import in_out_degree_correlation, top2_svd
from .report import FitReport

__version__ = "0.1.0"
