"""Bayesian optimization with user beliefs over function properties.

Prior sample paths (random Fourier features) are reweighted or filtered by
a user belief about the location or value of the maximum, then conditioned
on data by pathwise (Matheron) updates. Monte Carlo acquisition functions
average over the weighted paths.
"""
from ._backend import BACKEND, COMPILED
from .acquisition import (MES, Incumbent, LogEI, acq_logei, acq_mes, analytic_logei, greedy_batch, incumbent,
                          optimize_acq, thompson_next)
from .beliefs import (ArgmaxConfig, McBudget, OptimalValue, OptimumLocation, Uniform, UserBelief,
                      WeightedEnsemble, belief_weight, build_ensemble, locate_argmax, vanilla_ensemble)
from .benchmarks import (BENCHMARKS, BenchmarkSpec, NoisyObjective, PriorSpec, build_maxvalue_prior, build_prior,
                         evaluate, get_benchmark, simple_regret)
from .engine import BoConfig, RunRecord, initial_design, run, step
from .gp import (Dataset, GpHyperparams, SearchSpace, analytic_posterior, fit_map, kernel_eval, kernel_matrix,
                 log_evidence)
from .pathwise import DrawSet, FunctionDraw, condition_on, draw_prior, fantasize, matheron_condition, sample_basis

__version__ = "0.1.0"
