"""Describe experiments as text pulse programs and run them.

The pulse language has laser, microwave, wait, readout and repeat statements
with explicit units and $variables bound at run time. Programs round-trip
through the serializer, and syntax errors carry a line and column.
"""

import numpy as np

from nvdnp import initial_state, parse_sequence, preset_bath, serialize_sequence
from nvdnp.errors import SequenceError
from nvdnp.pulsedsl import execute, preset_text

program = """
# Ramsey with ideal pulses; the closing pulse undoes the first at t = 0
laser dur=3us power=50uW
mw ideal phase=0 angle=90
wait dur=$t
mw ideal phase=180 angle=90
readout ramsey
"""
seq = parse_sequence(program)
print(serialize_sequence(seq))
assert parse_sequence(serialize_sequence(seq)) == seq

bath = preset_bath("acceptance").pure_dephasing()
for t in ("0us", "1us", "2us", "4us"):
    _, record = execute(seq, {"t": t}, bath, initial_state(bath))
    label, obs = record.readouts[0]
    print(f"t = {t:>4s}: p0 = {obs.p0:.4f}")  # starts at p_init = 0.95, relaxes toward 0.5

print("\nshipped dnp_fid preset:\n" + preset_text("dnp_fid"))

for bad in ("wait dur=3", "mw rabi=1MHz phase=0 angle=90 dur=1us", "repeat 2 { wait dur=1us"):
    try:
        parse_sequence(bad)
    except SequenceError as exc:
        print(f"{bad!r}: {exc}")
