"""Experiment harness: configuration, datasets, scenario runners and CLI."""
from .config import ConfigError, ExperimentConfig, build_config, read_config_file
from .data import Clusters, DataError, Uniform, load_locations_csv, synth_locations, write_locations_csv
from .experiments import (
    CSV_HEADER,
    MetricRow,
    rows_to_csv,
    run_amplify,
    run_crowdsourcing,
    run_incentive,
    run_protocol_demo,
    run_rates,
    run_single_report,
    run_social,
    theoretical_rates,
)
