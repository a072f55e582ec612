"""Run configuration: INI-style files, ``key=value`` overrides and unit handling.

Values at the boundary use laboratory units (Gauss, us, kHz, uW, nm). A value
may carry an explicit unit (``12us``, ``0.5MHz``, ``1mW``); a bare number is
read in the key's boundary unit. All conversions to SI happen here.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
import hashlib
import io
import json
import math
import os
import re

from .errors import ConfigError

__all__ = ["SCHEMA", "RunConfig", "load_config", "parse_value", "to_si"]

# unit kind -> {suffix: factor to the boundary unit}
_UNITS = {
    "time": {"ns": 1e-3, "us": 1.0, "ms": 1e3, "s": 1e6},
    "frequency": {"Hz": 1e-3, "kHz": 1.0, "MHz": 1e3},
    "power": {"uW": 1.0, "mW": 1e3, "W": 1e6},
    "field": {"G": 1.0, "mT": 10.0, "T": 1e4},
    "length": {"pm": 1e-3, "nm": 1.0},
}
# boundary unit -> SI factor
_SI = {"time": 1e-6, "frequency": 2.0 * math.pi * 1e3, "power": 1e-6, "field": 1e-4, "length": 1e-9}

# key: (section, kind, default); kind is a unit kind or int/float/bool/str
SCHEMA = {
    # bath
    "bath_source": ("bath", "str", "preset"),  # preset | sample | file
    "bath_preset": ("bath", "str", "acceptance"),
    "bath_file": ("bath", "str", ""),
    "bath_seed": ("bath", "int", 1),
    "abundance": ("bath", "float", 0.011),
    "r_min": ("bath", "length", 0.25),
    "r_max": ("bath", "length", 1.5),
    "max_spins": ("bath", "int", 8),
    "b_field": ("bath", "field", 0.0),  # 0 keeps the field stored with the bath
    "pure_dephasing": ("bath", "bool", False),
    # engine
    "backend": ("engine", "str", "density"),
    "n_trajectories": ("engine", "int", 1000),
    "krylov_tolerance": ("engine", "float", 1e-10),
    "cache_size": ("engine", "int", 32),
    "dipolar": ("engine", "bool", False),
    "p_init": ("engine", "float", 0.95),
    "kappa": ("engine", "float", -1.0),  # W^-1 s^-1; negative selects the default
    "n_shots": ("engine", "int", 0),
    "chunk_size": ("engine", "int", 64),
    # experiment
    "t_max": ("experiment", "time", 12.0),
    "n_points": ("experiment", "int", 240),
    "rabi_t_max": ("experiment", "time", 20.0),
    "rabi_points": ("experiment", "int", 200),
    "rabi_min": ("experiment", "frequency", 100.0),
    "rabi_max": ("experiment", "frequency", 1500.0),
    "n_rabi": ("experiment", "int", 25),
    "polarization": ("experiment", "float", 0.0),
    "n_cycles": ("experiment", "int", 10),
    "lock_time": ("experiment", "time", 2.0),
    "lock_rabi": ("experiment", "frequency", 0.0),  # 0 matches the Larmor frequency
    "laser_time": ("experiment", "time", 3.0),
    "laser_power": ("experiment", "power", 50.0),
    "probe_rabi": ("experiment", "frequency", 10000.0),  # 0 applies ideal rotations
    "n_components": ("experiment", "int", 1),
    "variants": ("experiment", "str", "no_dnp,extra_laser:100us:1mW,extra_wait:100us,none"),
    "wait_dipolar": ("experiment", "bool", True),
    # run
    "seed": ("run", "int", 0),
    "workers": ("run", "int", 1),
    "out": ("run", "str", "out"),
}

# keys that affect wall time or file placement only
_NO_HASH = ("out", "workers")

_NUMBER = re.compile(r"\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([A-Za-z]*)\s*\Z")


def parse_value(key, text, source=None, line=None):
    """Convert the text of ``key`` to its boundary-unit Python value."""
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}", source, line)
    _, kind, _ = SCHEMA[key]
    text = str(text).strip()
    try:
        if kind == "str":
            return text
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", source, line) from None
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(f"{key}: cannot read {text!r} as a {kind}", source, line)
    number, unit = m.groups()
    factors = _UNITS[kind]
    if unit and unit not in factors:
        raise ConfigError(
            f"{key}: unit {unit!r} is not a {kind} unit ({', '.join(factors)})", source, line
        )
    return float(number) * (factors[unit] if unit else 1.0)


def to_si(key, value):
    """Boundary-unit value of ``key`` in SI (frequencies in rad/s)."""
    kind = SCHEMA[key][1]
    return value * _SI[kind] if kind in _SI else value


def _line_of(path, section, key):
    """Best-effort line number of ``key`` inside ``[section]`` of a config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            current = None
            for n, raw in enumerate(fh, start=1):
                s = raw.strip()
                if s.startswith("[") and s.endswith("]"):
                    current = s[1:-1].strip()
                elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
                    return n
    except OSError:
        pass
    return None


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[2] for k, v in SCHEMA.items()})
    source: str | None = None

    def __getitem__(self, key):
        return self.values[key]

    def si(self, key):
        return to_si(key, self.values[key])

    def set(self, key, text, source=None, line=None):
        if "." in key:
            section, key = key.split(".", 1)
            if key in SCHEMA and SCHEMA[key][0] != section:
                raise ConfigError(f"key {key!r} belongs to [{SCHEMA[key][0]}]", source, line)
        self.values[key] = parse_value(key, text, source, line)

    def validate(self):
        v = self.values
        checks = [
            ("bath_source", v["bath_source"] in ("preset", "sample", "file"), "preset, sample or file"),
            ("backend", v["backend"] in ("density", "trajectory", "density_matrix", "trajectory_ensemble"), "density or trajectory"),
            ("n_points", v["n_points"] >= 10, ">= 10"),
            ("rabi_points", v["rabi_points"] >= 8, ">= 8"),
            ("n_rabi", v["n_rabi"] >= 1, ">= 1"),
            ("t_max", v["t_max"] > 0, "> 0"),
            ("rabi_t_max", v["rabi_t_max"] > 0, "> 0"),
            ("rabi_min", 0 < v["rabi_min"] <= v["rabi_max"], "0 < rabi_min <= rabi_max"),
            ("n_trajectories", v["n_trajectories"] >= 1, ">= 1"),
            ("workers", v["workers"] >= 1, ">= 1"),
            ("p_init", 0 <= v["p_init"] <= 1, "in [0, 1]"),
            ("polarization", -1 <= v["polarization"] <= 1, "in [-1, 1]"),
            ("n_cycles", v["n_cycles"] >= 0, ">= 0"),
            ("lock_time", v["lock_time"] >= 0, ">= 0"),
            ("n_components", v["n_components"] in (1, 2, 3), "1, 2 or 3"),
            ("b_field", v["b_field"] >= 0, ">= 0"),
            ("abundance", 0 <= v["abundance"] <= 1, "in [0, 1]"),
            ("r_min", 0 < v["r_min"] < v["r_max"], "0 < r_min < r_max"),
        ]
        for key, ok, reason in checks:
            if not ok:
                section = SCHEMA[key][0]
                line = _line_of(self.source, section, key) if self.source else None
                raise ConfigError(f"{key}: must be {reason}, got {v[key]!r}", self.source, line)
        if v["bath_source"] == "file":
            path = v["bath_file"]
            if not path or not os.path.isfile(path):
                line = _line_of(self.source, "bath", "bath_file") if self.source else None
                raise ConfigError(f"bath_file {path!r} does not exist", self.source, line)
        return self

    def effective(self):
        """Sectioned mapping of every value, in boundary units."""
        out = {}
        for key, (section, _, _) in SCHEMA.items():
            out.setdefault(section, {})[key] = self.values[key]
        return out

    def to_text(self):
        parser = configparser.ConfigParser(interpolation=None)
        for section, items in self.effective().items():
            parser[section] = {k: _format(v) for k, v in items.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def digest(self):
        """Hash of every value that can change results (not ``out`` or ``workers``)."""
        eff = self.effective()
        eff["run"] = {k: v for k, v in eff["run"].items() if k not in _NO_HASH}
        blob = json.dumps(eff, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path=None, overrides=(), text=None):
    """Build a validated :class:`RunConfig` from a file and ``key=value`` overrides."""
    cfg = RunConfig(source=path)
    if path is not None or text is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            if text is None:
                if not os.path.isfile(path):
                    raise ConfigError("config file not found", path)
                with open(path, encoding="utf-8") as fh:
                    text = fh.read()
            parser.read_string(text, source=path or "<string>")
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(str(exc).splitlines()[0], path, line) from None
        for section in parser.sections():
            for key, value in parser.items(section):
                if key not in SCHEMA or SCHEMA[key][0] != section:
                    raise ConfigError(
                        f"unknown key {key!r} in [{section}]", path, _line_of(path, section, key) if path else None
                    )
                cfg.set(key, value, path, _line_of(path, section, key) if path else None)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    return cfg.validate()
