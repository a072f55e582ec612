"""How extra laser exposure and waiting erode the pumped polarization.

Optical pumping of the electron also depolarizes nearby nuclei, with a
probability that grows with laser power and duration. An extra 1 mW, 100 us
pulse after pumping should shorten T2* more than a 100 us wait, during which
only slow flip-flops within the bath act.
"""

from nvdnp import laser_study, preset_bath
from nvdnp.engine import KAPPA_DEFAULT, depolarization_probability
from nvdnp.experiments import Variant

print(f"depolarization probability for 1 mW x 100 us: {depolarization_probability(100e-6, 1e-3, KAPPA_DEFAULT):.2f}")

bath = preset_bath("acceptance", b_field=0.066)
variants = [
    Variant("no_dnp"),
    Variant("extra_laser", 100e-6, 1e-3),
    Variant("extra_wait", 100e-6, dipolar=True),
    Variant("none"),
]
sweep = laser_study(bath, variants)
for label, fit in zip(sweep.parameters, sweep.fits):
    print(f"{label:>26s}: T2* = {fit.decay_time * 1e6:.2f} +/- {fit.decay_uncertainty * 1e6:.2f} us")
