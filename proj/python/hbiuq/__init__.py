"""Hierarchical Bayesian inverse uncertainty quantification."""

from ._hbiuq import (
    ConfigError,
    Error,
    GpSurrogate,
    IoError,
    NumericalError,
    PolySurrogate,
    ZeroVarianceError,
    __version__,
    bulk_ess,
    fit_gp,
    fit_poly,
    lhs_sample,
    oat_screen,
    run_cli,
    sobol_indices,
    split_rhat,
    toy_calibration,
)

__all__ = [
    "ConfigError",
    "Error",
    "GpSurrogate",
    "IoError",
    "NumericalError",
    "PolySurrogate",
    "ZeroVarianceError",
    "__version__",
    "bulk_ess",
    "fit_gp",
    "fit_poly",
    "lhs_sample",
    "oat_screen",
    "run_cli",
    "sobol_indices",
    "split_rhat",
    "toy_calibration",
]
