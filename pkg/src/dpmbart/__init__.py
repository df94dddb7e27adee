"""Tree-ensemble regression with a Dirichlet process mixture error model.

The library fits a sum of regression trees whose additive error is either a
single normal (plain_bart mode) or a mixture of normals with a Dirichlet
process prior over per-observation error parameters (dpmbart mode). All
priors are calibrated from the data; see priors.calibrate_priors.
"""

from .bart import (BackfitState, LeafSuffStats, backfit_sweep,
                   birth_death_step, draw_leaf_means, draw_sigma_bart,
                   leaf_log_marginal)
from .data import (CutpointGrid, DataError, Dataset, LinearFit,
                   PerObsErrorParams, build_cutpoints, least_squares_fit,
                   load_csv)
from .dpm import (ClusterState, draw_alpha, draw_g0_posterior, ew_draw_a,
                  ew_draw_b, g0_posterior_params, marginal_g0_density,
                  marginal_g0_logpdf)
from .harness import fit_and_write, reproduce
from .priors import (AlphaPrior, BaselineG0, CalibrationError, MuPrior,
                     Priors, SigmaPrior, TreePrior, calibrate_alpha_prior,
                     calibrate_g0, calibrate_lambda, calibrate_priors,
                     calibrate_sigma_prior, calibrate_tau,
                     cluster_count_mode, default_i_max,
                     log_p_clusters_given_alpha, marginal_mu_quantile,
                     stirling_log_row)
from .sampler import (ChainConfig, ChainResult, DensitySummary, DrawRecord,
                      bart_error_density, default_density_grid, l1_distance,
                      mean_interval_width, predictive_error_density, rmse,
                      run_chain, steady_state_stats, summarize_fit)
from .simulate import SCENARIO_KINDS, SimulatedData, simulate, true_f
from .trees import (Ensemble, Node, Tree, TreeError, dump_ensemble,
                    dump_tree, ensemble_predict, eval_ensemble, eval_tree,
                    leaf_assignment, parse_ensemble, parse_tree,
                    tree_predict)

__version__ = "0.1.0"

__all__ = [
    "AlphaPrior", "BackfitState", "BaselineG0", "CalibrationError",
    "ChainConfig", "ChainResult", "ClusterState", "CutpointGrid",
    "DataError", "Dataset", "DensitySummary", "DrawRecord", "Ensemble",
    "LeafSuffStats", "LinearFit", "MuPrior", "Node", "PerObsErrorParams",
    "Priors", "SCENARIO_KINDS", "SigmaPrior", "SimulatedData", "Tree",
    "TreeError", "TreePrior", "backfit_sweep", "bart_error_density",
    "birth_death_step", "build_cutpoints", "calibrate_alpha_prior",
    "calibrate_g0", "calibrate_lambda", "calibrate_priors",
    "calibrate_sigma_prior", "calibrate_tau", "cluster_count_mode",
    "default_density_grid", "default_i_max", "draw_alpha",
    "draw_g0_posterior", "draw_leaf_means", "draw_sigma_bart",
    "dump_ensemble", "dump_tree", "ensemble_predict", "eval_ensemble",
    "eval_tree", "ew_draw_a", "ew_draw_b", "fit_and_write",
    "g0_posterior_params", "l1_distance", "leaf_assignment",
    "leaf_log_marginal", "least_squares_fit", "load_csv",
    "log_p_clusters_given_alpha", "marginal_g0_density",
    "marginal_g0_logpdf", "marginal_mu_quantile", "mean_interval_width",
    "parse_ensemble", "parse_tree", "predictive_error_density",
    "reproduce", "rmse", "run_chain", "simulate", "steady_state_stats",
    "stirling_log_row", "summarize_fit", "tree_predict", "true_f",
]
