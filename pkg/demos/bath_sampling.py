"""Sample a 13C bath around an NV centre and look at its hyperfine couplings.

Sites come from the diamond lattice inside a shell around the vacancy; each is
occupied with the natural 13C abundance. The strongest couplings dominate the
electron's dephasing, so baths are truncated to the most strongly coupled spins.
"""

import math

import numpy as np

from nvdnp import preset_bath, sample_bath, save_bath, tstar_quasistatic

TWO_PI = 2 * math.pi

bath = sample_bath(seed=7, abundance=0.011, r_min=0.25e-9, r_max=1.5e-9, max_spins=8, b_field=0.066)
print(f"seed {bath.seed}: {bath.n_spins} spins at {bath.b_field * 1e4:.0f} G, "
      f"13C Larmor {bath.larmor / TWO_PI / 1e3:.1f} kHz")
for spin in bath.spins:
    r = np.linalg.norm(spin.position) * 1e9
    print(f"  r = {r:.3f} nm  a_par/2pi = {spin.a_par / TWO_PI / 1e3:8.2f} kHz  "
          f"a_perp/2pi = {spin.a_perp / TWO_PI / 1e3:8.2f} kHz")

# The quasistatic T2* follows from the secular couplings alone.
print(f"quasistatic T2* {tstar_quasistatic(bath) * 1e6:.2f} us")

# Different seeds give different baths, hence a spread of T2* values.
spread = [tstar_quasistatic(sample_bath(s, 0.011, 0.25e-9, 1.5e-9, 8, 0.066)) * 1e6 for s in range(20)]
print(f"T2* over 20 seeds: median {np.median(spread):.2f} us, range {min(spread):.2f}-{max(spread):.2f} us")

# Baths serialize to a plain-text format that round-trips exactly.
text = save_bath(bath)
print(text.splitlines()[0])
print("shipped presets:", ", ".join(f"{n} ({preset_bath(n).n_spins} spins)" for n in ("acceptance", "paper_like")))
