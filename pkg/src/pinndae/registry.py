"""Lookup of reference processes and PINN variants by model id."""
from __future__ import annotations

from . import counterexamples, cstr, separator
from .dae import DaeSystem
from .datagen import ProcessModel
from .errors import ArgumentError

MODEL_IDS = ("cstr", "separator", "counterexample-sm5", "counterexample-sm6")
VARIANTS = {
    "cstr": ("vanilla", "pinn-a", "pinn-b", "pinn-c"),
    "separator": ("vanilla", "pinn-base", "pinn-d32", "pinn-d32-rv"),
    "counterexample-sm5": ("pinn",),
    "counterexample-sm6": ("pinn",),
}


def process_model(model_id: str, n_segments: int | None = None) -> ProcessModel:
    if model_id == "cstr":
        return cstr.process_model()
    if model_id == "separator":
        params = separator.DEFAULT_PARAMS
        if n_segments is not None:
            params = separator.with_segments(params, n_segments)
        return separator.process_model(params)
    if model_id == "counterexample-sm5":
        return counterexamples.sm5_process()
    if model_id == "counterexample-sm6":
        return counterexamples.sm6_process()
    raise ArgumentError(f"unknown model id {model_id!r}; choose from {MODEL_IDS}")


def system(model_id: str, variant: str, setting: int = 0) -> DaeSystem:
    if model_id not in VARIANTS:
        raise ArgumentError(f"unknown model id {model_id!r}; choose from {MODEL_IDS}")
    if variant not in VARIANTS[model_id]:
        raise ArgumentError(f"variant {variant!r} is not defined for {model_id}")
    if setting and not (model_id == "cstr" and variant == "pinn-c"):
        raise ArgumentError("a differential-state setting applies to cstr pinn-c only")
    if model_id == "cstr":
        return cstr.make_system(variant, setting)
    if model_id == "separator":
        return separator.make_system(variant)
    if model_id == "counterexample-sm5":
        return counterexamples.sm5_system()
    return counterexamples.sm6_system()
