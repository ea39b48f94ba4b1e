from . import error as error
from .acquisition import AcquisitionKind, AggregationKind, acquisition_scores, rank_pool
from .balds_config import ExperimentConfig, load_config, resolve_config
from .bayes import PosteriorSamples, mc_forward, mc_forward_sequence, posterior_mean
from .dataset import Dataset, OracleReplay, load_dataset, save_dataset
from .harness import Comparison, RunResult, compare_to_random, run_active_learning
from .network import NetworkSpec, ParameterStore, forward, init_params
from .pool import Pool, select_next
from .stats import SignificanceReport, wilcoxon_signed_rank

__all__ = [
    "AcquisitionKind",
    "AggregationKind",
    "Comparison",
    "Dataset",
    "ExperimentConfig",
    "NetworkSpec",
    "OracleReplay",
    "ParameterStore",
    "Pool",
    "PosteriorSamples",
    "RunResult",
    "SignificanceReport",
    "acquisition_scores",
    "compare_to_random",
    "error",
    "forward",
    "init_params",
    "load_config",
    "load_dataset",
    "mc_forward",
    "mc_forward_sequence",
    "posterior_mean",
    "rank_pool",
    "resolve_config",
    "run_active_learning",
    "save_dataset",
    "select_next",
    "wilcoxon_signed_rank",
]
