from .config import ARMS, ConfigError, ExperimentConfig, config_from_mapping, read_config_file
from .report import censored_steps_to_90, mean_curve, report, summarize
from .runlog import EvalRecord, RunLog, steps_to_convergence, steps_to_threshold, transition_drop
from .runner import RunAborted, evaluate, run_experiment

__all__ = ["ARMS", "ConfigError", "EvalRecord", "ExperimentConfig", "RunAborted", "RunLog",
           "censored_steps_to_90", "config_from_mapping", "evaluate", "mean_curve",
           "read_config_file", "report", "run_experiment", "steps_to_convergence",
           "steps_to_threshold", "summarize", "transition_drop"]
