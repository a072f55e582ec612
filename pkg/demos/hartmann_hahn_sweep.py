"""Spin-locked Rabi decay versus drive strength.

When the electron Rabi frequency in the rotating frame matches the 13C Larmor
frequency, the dressed electron exchanges polarization with the nuclei and the
Rabi oscillation decays much faster. Sweeping the drive shows a dip in the
fitted decay time at the Hartmann-Hahn condition.
"""

import math

import numpy as np

from nvdnp import preset_bath, rabi_frequency_sweep

TWO_PI = 2 * math.pi

for gauss in (500, 330):
    bath = preset_bath("acceptance", b_field=gauss * 1e-4)
    rabi = TWO_PI * np.linspace(100e3, 1.5e6, 25)
    times = rabi_frequency_sweep(bath, rabi).decay_times()
    best = int(np.nanargmin(times))
    print(f"\n{gauss} G, Larmor {bath.larmor / TWO_PI / 1e3:.1f} kHz")
    for r, tau in zip(rabi, times):
        mark = "  <- dip" if r == rabi[best] else ""
        print(f"  {r / TWO_PI / 1e3:7.1f} kHz  T_rho1 = {tau * 1e6:6.2f} us{mark}")
