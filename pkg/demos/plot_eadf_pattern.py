"""
Array pattern in the spectral domain
====================================

Build the synthetic 16-port cylindrical array, move it to the EADF
domain and check how compact the description is.
"""

import numpy as np

from fddextrap.array_model import CylindricalArraySpec, eadf_from_pattern, make_synthetic_pattern

geo = CylindricalArraySpec(columns=8, rows=2)
pattern = make_synthetic_pattern(geo)
eadf = eadf_from_pattern(pattern)
print("sampled pattern", pattern.gains.shape, "(port, azimuth, elevation, frequency)")

# energy per azimuth harmonic, summed over ports, frequencies and elevation
energy = np.sum(np.abs(eadf.coeffs) ** 2, axis=(0, 1, 3))
order = np.fft.fftfreq(energy.size, 1.0 / energy.size).astype(int)
top = np.argsort(energy)[::-1]
kept = np.cumsum(energy[top]) / energy.sum()
print("azimuth harmonics holding 99.9% of the energy:", int(np.searchsorted(kept, 0.999)) + 1,
      "of", energy.size)
print("dominant orders:", sorted(order[top[:8]].tolist()))

# off-grid queries interpolate smoothly between calibration nodes
phi = np.deg2rad(np.linspace(0, 360, 721))
g = eadf.response(phi, np.full(phi.size, np.pi / 2), [3.5e9])[:, 0, 0]
print("port 0 peak gain at azimuth %.1f deg" % np.rad2deg(phi[np.argmax(np.abs(g))]))
