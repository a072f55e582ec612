"""Syntax tree of pulse programs.

Literal values keep the number and unit exactly as written so that
serialization reproduces them; ``.si`` gives the converted value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

__all__ = [
    "UNITS",
    "Quantity",
    "Variable",
    "Laser",
    "Mw",
    "Wait",
    "Readout",
    "Repeat",
    "Sequence",
    "KEY_KINDS",
    "expand",
]

# unit -> (kind, multiplier to SI); frequencies are cycles/s turned into rad/s
UNITS = {
    "ns": ("time", 1e-9),
    "us": ("time", 1e-6),
    "ms": ("time", 1e-3),
    "kHz": ("frequency", 2.0 * math.pi * 1e3),
    "MHz": ("frequency", 2.0 * math.pi * 1e6),
    "deg": ("angle", math.pi / 180.0),
    "": ("angle", math.pi / 180.0),  # bare phase/angle numbers are degrees
    "uW": ("power", 1e-6),
    "mW": ("power", 1e-3),
}

KEY_KINDS = {
    "dur": "time",
    "power": "power",
    "rabi": "frequency",
    "phase": "angle",
    "angle": "angle",
}


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str

    @property
    def si(self):
        return self.value * UNITS[self.unit][1]

    def text(self):
        return f"{self.value!r}{self.unit}"


@dataclass(frozen=True)
class Variable:
    name: str

    def text(self):
        return f"${self.name}"


@dataclass(frozen=True)
class Laser:
    dur: Quantity | Variable
    power: Quantity | None = None
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Mw:
    """Microwave segment given either a duration or a rotation angle."""

    rabi: Quantity | None = None
    phase: Quantity | None = None
    dur: Quantity | Variable | None = None
    angle: Quantity | None = None
    ideal: bool = False
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Wait:
    dur: Quantity | Variable
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Readout:
    label: str = ""
    span: tuple = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple
    span: tuple = field(default=(0, 0), compare=False)


def _collect(ops, names):
    for op in ops:
        if isinstance(op, Repeat):
            _collect(op.body, names)
        elif isinstance(getattr(op, "dur", None), Variable):
            names.add(op.dur.name)
    return names


@dataclass(frozen=True)
class Sequence:
    ops: tuple
    variables: frozenset = frozenset()

    @classmethod
    def from_ops(cls, ops):
        ops = tuple(ops)
        return cls(ops, frozenset(_collect(ops, set())))

    def spans(self):
        """``(op, (line, column))`` pairs for every op, depth first."""
        out = []

        def walk(ops):
            for op in ops:
                out.append((op, op.span))
                if isinstance(op, Repeat):
                    walk(op.body)

        walk(self.ops)
        return out

    def __len__(self):
        return len(self.ops)


def expand(ops):
    """Flatten repeats into the executed op order (generator)."""
    for op in ops:
        if isinstance(op, Repeat):
            for _ in range(op.count):
                yield from expand(op.body)
        else:
            yield op
