"""Configuration, scenarios, experiment runs, trace files and rate fitting."""

from ncnum.harness.config import (
    ExperimentConfig,
    StepSizeConfig,
    dumps_config,
    load_config,
    loads_config,
    write_config,
)
from ncnum.harness.experiment import ExperimentResult, resolve_step_sizes, run_experiment, validate_experiment
from ncnum.harness.fitting import fit_rate, fit_rate_arrays
from ncnum.harness.scenarios import (
    builtin_fig2_scenario,
    fig2_network_spec,
    random_network_spec,
    single_link_spec,
    toy_network_spec,
    toy_scenario,
)
from ncnum.harness.traceio import TraceTable, read_trace, replay_residuals, write_trace

__all__ = [
    "ExperimentConfig",
    "StepSizeConfig",
    "dumps_config",
    "load_config",
    "loads_config",
    "write_config",
    "ExperimentResult",
    "resolve_step_sizes",
    "run_experiment",
    "validate_experiment",
    "fit_rate",
    "fit_rate_arrays",
    "builtin_fig2_scenario",
    "fig2_network_spec",
    "random_network_spec",
    "single_link_spec",
    "toy_network_spec",
    "toy_scenario",
    "TraceTable",
    "read_trace",
    "replay_residuals",
    "write_trace",
]
