"""Bayesian variable selection for additive survival and probit models
under right-censoring, with local and non-local coefficient priors."""

from .design import DesignBundle, GramCache, SurvivalDataset, build_design
from .inference import FitResult, ModelFitter
from .likelihoods import ModelIndex, ParamVector
from .priors import PriorSpec, elicit_dispersion
from .search import AugmentedState, ModelSearch, PosteriorSummary
from .sim import ScenarioSpec, concordance_index, gen_scenario, permute_response
from .specfun import ApproxProfile

__all__ = [
    "ApproxProfile",
    "AugmentedState",
    "DesignBundle",
    "FitResult",
    "GramCache",
    "ModelFitter",
    "ModelIndex",
    "ModelSearch",
    "ParamVector",
    "PosteriorSummary",
    "PriorSpec",
    "ScenarioSpec",
    "SurvivalDataset",
    "build_design",
    "concordance_index",
    "elicit_dispersion",
    "gen_scenario",
    "permute_response",
]

__version__ = "0.1.0"
