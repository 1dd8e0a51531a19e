"""Benchmark problems, the experiment protocol, reports and the command line."""

from .experiment import (ConfigError, ExperimentConfig, NumericalFailure, TrialReport, TrialRow,
                         config_from_dict, load_config, render_report, run_experiment)
from .problems import (PROBLEMS, Problem, RiskEstimate, RiskEvaluator, TestSample,
                       register_problem, sample_dataset, sigma_hat, target_function, test_risk)
