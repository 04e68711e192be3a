"""Populations, datasets and experiment configuration."""

from .config import ExperimentConfig, load_config, loads_config, parse_config, rrm_config
from .credit import TabularDataset, bootstrap_augment, fit_outcome_simulator, load_credit, parse_credit
from .synthetic import gen_noharm_population, gen_synthetic_population, synthetic_outcome
from .tables import format_table, read_table, write_table, write_text

__all__ = [
    "ExperimentConfig",
    "TabularDataset",
    "bootstrap_augment",
    "fit_outcome_simulator",
    "format_table",
    "gen_noharm_population",
    "gen_synthetic_population",
    "load_config",
    "load_credit",
    "loads_config",
    "parse_config",
    "parse_credit",
    "read_table",
    "rrm_config",
    "synthetic_outcome",
    "write_table",
    "write_text",
]
