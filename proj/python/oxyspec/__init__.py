"""Tissue oxygenation from multispectral reflectance."""

from ._core import (
    Model,
    OxyspecError,
    auc_normalize,
    default_wavelengths,
    extinction,
    fit_lactate,
    generate_dataset,
    load_dataset,
    save_dataset,
    simulate_spectrum,
    unmix,
)

__all__ = [
    "Model",
    "OxyspecError",
    "auc_normalize",
    "default_wavelengths",
    "extinction",
    "fit_lactate",
    "generate_dataset",
    "load_dataset",
    "save_dataset",
    "simulate_spectrum",
    "unmix",
]
