"""Polarization transfer by repeated Hartmann-Hahn cycles and its effect on T2*.

Each cycle resets the electron optically, rotates it onto the y axis and spin
locks it at the 13C Larmor frequency. The nuclei pick up polarization cycle by
cycle, and the narrower Overhauser distribution lengthens the FID.
"""

from nvdnp import EngineOptions, dnp_protocol, fid_experiment, fit_gaussian_fid, preset_bath
from nvdnp.experiments import FID_GRID

bath = preset_bath("acceptance", b_field=0.066)
options = EngineOptions(kappa=0.0)

state, history = dnp_protocol(bath, n_cycles=10, lock_duration=2e-6, options=options)
for cycle, pz in enumerate(history, start=1):
    print(f"cycle {cycle:2d}: sum |pz| = {sum(abs(p) for p in pz):.3f}   "
          + " ".join(f"{p:+.2f}" for p in pz))

before = fit_gaussian_fid(fid_experiment(bath, None, FID_GRID, options))
after = fit_gaussian_fid(fid_experiment(bath, None, FID_GRID, options, initial=state))
print(f"T2* {before.decay_time * 1e6:.2f} us -> {after.decay_time * 1e6:.2f} us "
      f"(x{after.decay_time / before.decay_time:.2f})")
