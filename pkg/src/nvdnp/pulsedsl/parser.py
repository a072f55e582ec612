"""Parser and canonical serializer for the pulse-program language.

Programs are line oriented::

    # comment
    laser dur=3us power=50uW
    mw rabi=10MHz phase=0 angle=90
    repeat 10 {
        mw rabi=545kHz phase=90 dur=$tau
    }
    wait dur=$t
    readout fid

Braces may share a line with ``repeat`` and with other ops.
"""

from __future__ import annotations

import math
import re

from ..errors import RangeError, SequenceSyntaxError, UnitError
from .ast import KEY_KINDS, UNITS, Laser, Mw, Quantity, Readout, Repeat, Sequence, Variable, Wait

__all__ = ["parse_sequence", "serialize_sequence", "parse_quantity", "MAX_DEPTH"]

MAX_DEPTH = 16
KEYWORDS = {"laser", "mw", "wait", "readout", "repeat"}

_TOKEN = re.compile(r"[{}]|[^\s{}]+")
_NUMBER = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_INT = re.compile(r"\d+\Z")

_ALLOWED = {
    "laser": {"dur", "power"},
    "mw": {"rabi", "phase", "dur", "angle"},
    "wait": {"dur"},
}


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text, line, col):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text):
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        for m in _TOKEN.finditer(line):
            tokens.append(_Token(m.group(), lineno, m.start() + 1))
    return tokens


def _split_number(text):
    m = _NUMBER.match(text)
    if not m:
        return None, text
    return m.group(), text[m.end():]


def parse_quantity(text, key="dur", line=1, col=1):
    """Parse ``NUMBER unit`` for ``key``; returns a :class:`Quantity`."""
    number, unit = _split_number(text)
    if number is None:
        raise SequenceSyntaxError(line, col, f"expected a number for {key}", text)
    if unit not in UNITS:
        raise UnitError(line, col + len(number), f"unknown unit {unit!r}", text)
    kind = UNITS[unit][0]
    if kind != KEY_KINDS[key]:
        raise UnitError(
            line, col + len(number), f"{key} needs a {KEY_KINDS[key]} unit, got {unit or 'none'}", text
        )
    value = float(number)
    if not math.isfinite(value):
        raise RangeError(line, col, f"{key} is not finite", text)
    if key != "phase" and value < 0:
        raise RangeError(line, col, f"negative {key}", text)
    return Quantity(value, unit)


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, tok, reason):
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            return SequenceSyntaxError(last.line, last.col + len(last.text), reason, "<end of input>")
        return SequenceSyntaxError(tok.line, tok.col, reason, tok.text)

    def block(self, depth):
        ops = []
        while True:
            tok = self.peek()
            if tok is None:
                if depth > 0:
                    raise self.error(None, "missing '}'")
                return ops
            if tok.text == "}":
                if depth == 0:
                    raise self.error(tok, "unmatched '}'")
                return ops
            ops.append(self.op(depth))

    def op(self, depth):
        tok = self.take()
        word = tok.text
        span = (tok.line, tok.col)
        if word == "repeat":
            return self.repeat(tok, depth)
        if word == "readout":
            nxt = self.peek()
            label = ""
            if nxt is not None and nxt.line == tok.line and _IDENT.match(nxt.text) and nxt.text not in KEYWORDS:
                label = self.take().text
            return Readout(label, span)
        if word not in _ALLOWED:
            raise self.error(tok, f"unknown operation {word!r}")
        values, ideal = self.keyvalues(tok, word)
        if word == "wait":
            if "dur" not in values:
                raise self.error(tok, "wait needs dur=")
            return Wait(values["dur"], span)
        if word == "laser":
            if "dur" not in values:
                raise self.error(tok, "laser needs dur=")
            return Laser(values["dur"], values.get("power"), span)
        has_dur = "dur" in values
        has_angle = "angle" in values
        if has_dur == has_angle:
            raise self.error(tok, "mw needs exactly one of dur= or angle=")
        if ideal and not has_angle:
            raise self.error(tok, "ideal mw pulses take angle=, not dur=")
        if not ideal and "rabi" not in values:
            raise self.error(tok, "mw needs rabi=")
        return Mw(
            values.get("rabi"),
            values.get("phase"),
            values.get("dur"),
            values.get("angle"),
            ideal,
            span,
        )

    def keyvalues(self, head, word):
        values = {}
        ideal = False
        while True:
            tok = self.peek()
            if tok is None or tok.line != head.line or tok.text in "{}":
                break
            if word == "mw" and tok.text == "ideal":
                if ideal:
                    raise self.error(tok, "repeated 'ideal'")
                ideal = True
                self.take()
                continue
            if "=" not in tok.text:
                if tok.text in KEYWORDS:
                    raise self.error(tok, "one operation per line")
                raise self.error(tok, "expected key=value")
            self.take()
            key, _, value = tok.text.partition("=")
            if key not in _ALLOWED[word]:
                raise self.error(tok, f"{word} does not take {key!r}")
            if key in values:
                raise self.error(tok, f"duplicate key {key!r}")
            vcol = tok.col + len(key) + 1
            if value.startswith("$"):
                if key != "dur":
                    raise SequenceSyntaxError(tok.line, vcol, "variables are only allowed in dur", value)
                if not _IDENT.match(value[1:]):
                    raise SequenceSyntaxError(tok.line, vcol, "bad variable name", value)
                values[key] = Variable(value[1:])
            else:
                if not value:
                    raise SequenceSyntaxError(tok.line, vcol, f"missing value for {key}", tok.text)
                values[key] = parse_quantity(value, key, tok.line, vcol)
        return values, ideal

    def repeat(self, head, depth):
        if depth + 1 > MAX_DEPTH:
            raise self.error(head, f"repeat nesting deeper than {MAX_DEPTH}")
        count_tok = self.take()
        if count_tok is None or not _INT.match(count_tok.text):
            raise self.error(count_tok, "repeat needs a non-negative integer count")
        brace = self.take()
        if brace is None or brace.text != "{":
            raise self.error(brace, "expected '{'")
        body = self.block(depth + 1)
        self.take()  # closing brace
        return Repeat(int(count_tok.text), tuple(body), (head.line, head.col))


def parse_sequence(text):
    """Parse program text into a :class:`Sequence`.

    Raises
    ------
    SequenceSyntaxError, UnitError, RangeError
        With 1-based line and column of the offending token.
    """
    parser = _Parser(text)
    return Sequence.from_ops(parser.block(0))


def _kv(key, value):
    return f"{key}={value.text()}"


def _op_lines(op, indent):
    pad = "    " * indent
    if isinstance(op, Repeat):
        lines = [f"{pad}repeat {op.count} {{"]
        for child in op.body:
            lines += _op_lines(child, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(op, Readout):
        return [f"{pad}readout {op.label}".rstrip()]
    if isinstance(op, Wait):
        return [f"{pad}wait {_kv('dur', op.dur)}"]
    if isinstance(op, Laser):
        parts = ["laser", _kv("dur", op.dur)]
        if op.power is not None:
            parts.append(_kv("power", op.power))
        return [pad + " ".join(parts)]
    parts = ["mw"]
    for key in ("rabi", "phase", "dur", "angle"):
        value = getattr(op, key)
        if value is not None:
            parts.append(_kv(key, value))
    if op.ideal:
        parts.append("ideal")
    return [pad + " ".join(parts)]


def serialize_sequence(seq):
    """Canonical text; parsing it back gives a structurally equal sequence."""
    lines = []
    for op in seq.ops:
        lines += _op_lines(op, 0)
    return "\n".join(lines) + ("\n" if lines else "")
