"""Pulse-program language: syntax tree, parser, serializer and interpreter."""

from importlib import resources

from .ast import Laser, Mw, Quantity, Readout, Repeat, Sequence, Variable, Wait, expand
from .interpreter import RunRecord, execute, resolve_bindings
from .parser import MAX_DEPTH, parse_quantity, parse_sequence, serialize_sequence

PRESETS = ("fid", "dnp_fid", "dnp_laser_fid", "dnp_wait_fid", "rabi")


def preset_text(name):
    """Text of a shipped preset, by name with or without the ``.seq`` suffix."""
    stem = name[:-4] if name.endswith(".seq") else name
    if stem not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    path = resources.files("nvdnp").joinpath("pulsedsl").joinpath("presets").joinpath(stem + ".seq")
    return path.read_text(encoding="utf-8")


def load_preset(name):
    return parse_sequence(preset_text(name))


__all__ = [
    "Laser",
    "MAX_DEPTH",
    "Mw",
    "PRESETS",
    "Quantity",
    "Readout",
    "Repeat",
    "RunRecord",
    "Sequence",
    "Variable",
    "Wait",
    "execute",
    "expand",
    "load_preset",
    "parse_quantity",
    "parse_sequence",
    "preset_text",
    "resolve_bindings",
    "serialize_sequence",
]
