"""Ramsey FID of the electron and the quasistatic closed form.

With only secular couplings the FID is a product of cosines, one per nucleus,
and polarizing the bath narrows the distribution of the Overhauser field. The
simulated FID is compared with the closed form and fitted with a Gaussian.
"""

import numpy as np

from nvdnp import fid_experiment, fit_gaussian_fid, preset_bath, quasistatic_fid_oracle, tstar_quasistatic

bath = preset_bath("acceptance").pure_dephasing()
t = np.linspace(0, 12e-6, 240)

for p in (0.0, 0.5, 0.8):
    pol = [p] * bath.n_spins
    ts = fid_experiment(bath, pol, t, probe_rabi=None)
    gap = np.max(np.abs(ts.values - quasistatic_fid_oracle(bath, p, t)))
    fit = fit_gaussian_fid(ts)
    print(f"p = {p}: max |sim - closed form| = {gap:.1e}, fitted T2* {fit.decay_time * 1e6:.2f} us, "
          f"Gaussian law {tstar_quasistatic(bath, p) * 1e6:.2f} us")

# With the pseudo-secular couplings kept and finite 10 MHz probe pulses the
# closed form is only approximate; a strongly coupled spin adds oscillations.
full = preset_bath("paper_like")
ts = fid_experiment(full, None, t)
fit = fit_gaussian_fid(ts, n_components=2)
print(f"paper_like bath: T2* {fit.decay_time * 1e6:.2f} us, "
      f"components at {[round(f / 2 / np.pi / 1e6, 2) for f in fit.params['frequencies']]} MHz")
