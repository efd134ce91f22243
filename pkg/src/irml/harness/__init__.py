"""Experiment configuration, pipelines, charts and the command line."""
from .config import EXPERIMENTS, ExperimentConfig, parse_text, validate_config
from .experiments import ResultBundle, run_experiment
from .svg import ChartSpec, emit_svg
