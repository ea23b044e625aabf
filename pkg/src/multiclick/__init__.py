"""Multi-click model for sponsored search: estimation, baselines, simulation and evaluation."""

from .estimation import Hyperparams, SufficientStats, accumulate_stats, fit_priors
from .model import ModelParams, enumerate_sequences, fit, perplexity, sequence_probability
from .session_log import Session, parse_log, read_sessions

__version__ = "0.1.0"
