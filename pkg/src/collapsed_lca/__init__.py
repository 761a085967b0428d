"""Bayesian latent class analysis with a collapsed sampler over the number
of classes, memberships and clustering variables."""

from .dataset import (CategoricalDataset, ConfigError, DatasetError, DegenerateVariableError,
                      ParseError, Priors, RangeError, RunConfig, load_dataset, save_dataset,
                      validate_config)
from .posterior import (gibbs_membership_logweights, log_collapsed_posterior, log_prior_g,
                        log_variable_move_ratio)
from .posthoc import ParameterEstimates, estimate, fit_fixed, modal_clustering
from .relabel import RunningCounts, build_cost, relabel_stream, solve_assignment
from .sampler import MoveParams, SamplerState, Trace, run
from .simulate import GenerativeSpec, LabeledDataset, builtin_spec, generate
from .suffstats import SuffStats, build
from .rjmcmc import run_fixed_g
from .summaries import (agreement, autocorr_ess, coincidence, group_posterior, modal_model,
                        rand_index)

__version__ = "0.1.0"
