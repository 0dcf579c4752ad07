"""Thermometry and absorption analysis for levitated NV nanodiamonds."""

import json

from ._core import (
    FitFailure,
    GasConditions,
    ParseError,
    PipelineError,
    beta_from_sigma,
    bulk_absorption_coefficient,
    damping_rate,
    esr_sensitivity,
    eval_zfs,
    fit_esr,
    fit_heating,
    fit_power_law,
    invert_zfs,
    radius_from_damping,
    run_cli,
    sigma_from_beta_radius,
    synthesize_esr,
    zfs_slope,
)
from ._core import _ensemble_report_json

__all__ = [
    "FitFailure",
    "GasConditions",
    "ParseError",
    "PipelineError",
    "beta_from_sigma",
    "bulk_absorption_coefficient",
    "damping_rate",
    "esr_sensitivity",
    "eval_zfs",
    "fit_esr",
    "fit_heating",
    "fit_power_law",
    "invert_zfs",
    "radius_from_damping",
    "run_cli",
    "run_ensemble",
    "sigma_from_beta_radius",
    "synthesize_esr",
    "zfs_slope",
]


def run_ensemble(config_text="", seed=None, threads=0):
    """Run the synthetic ensemble and return the report as a dict.

    ``config_text`` uses the same ``key = value`` format as the CLI config files.
    """
    return json.loads(_ensemble_report_json(config_text, seed, threads))
