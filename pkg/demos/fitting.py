"""Recover decay constants from noisy Rabi and FID signals.

The damped-cosine model serves Rabi decays, and the Gaussian FID model allows a
few oscillating components from strongly coupled nuclei. Initial guesses come
from a frequency scan, and the fit is Levenberg-Marquardt least squares.
"""

import numpy as np

from nvdnp.analysis import damped_cosine, fit_damped_cosine, fit_gaussian_fid, gaussian_fid

rng = np.random.default_rng(3)
t = np.linspace(0, 20e-6, 200)
y = damped_cosine(t, offset=0.5, amplitude=0.4, frequency=2 * np.pi * 1.2e6, phase=0.3, decay_time=6e-6)
fit = fit_damped_cosine((t, y + rng.normal(0, 0.004, t.size)))
print(f"Rabi decay: {fit.decay_time * 1e6:.3f} +/- {fit.decay_uncertainty * 1e6:.3f} us (true 6.000)")

t = np.linspace(0, 12e-6, 240)
for tau in (4.46e-6, 6.45e-6):
    y = gaussian_fid(
        t, offset=0.3, decay_time=tau, amplitudes=[0.4, 0.2],
        frequencies=[0.0, 2 * np.pi * 1.5e6], phases=[0.0, 0.0],
    )
    fit = fit_gaussian_fid((t, y + rng.normal(0, 0.006, t.size)), n_components=2)
    print(f"FID T2*: {fit.decay_time * 1e6:.3f} us (true {tau * 1e6:.2f}), converged {fit.converged}")
