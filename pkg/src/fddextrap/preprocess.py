"""Back-to-back compensation and training-band selection."""

from dataclasses import dataclass

import numpy as np

from .channel_synth import ChannelMatrix
from .errors import NumericalError, OutOfRangeError
from .grids import BandSelection, FrequencyGrid

__all__ = [
    "B2bResponse",
    "DEFAULT_GRID",
    "DEFAULT_TRAINING_BAND",
    "compensate_b2b",
    "apply_b2b",
    "select_band",
    "synthetic_b2b",
]

# 350 MHz multitone: 2801 subcarriers, 125 kHz apart, from 3.325 GHz
DEFAULT_GRID = FrequencyGrid(3.325e9, 0.125e6, 2801)
# first 35 MHz (281 subcarriers) used for training
DEFAULT_TRAINING_BAND = BandSelection(0, 281)

_MIN_B2B = 1e-12


@dataclass(frozen=True, eq=False)
class B2bResponse:
    """RF-chain frequency response measured back to back."""

    freqs: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.freqs.count:
            raise ValueError(f"b2b has {v.size} values for {self.freqs.count} subcarriers")
        if not np.all(np.isfinite(v)):
            raise ValueError("b2b values must be finite")
        object.__setattr__(self, "values", v)

    def as_channel(self):
        return ChannelMatrix(self.freqs, self.values[None, :], role="b2b")

    @classmethod
    def from_channel(cls, h):
        if h.num_ports != 1:
            raise ValueError("a back-to-back response has exactly one port")
        return cls(h.freqs, h.values[0])


def _check_grids(a, b):
    if a != b:
        raise ValueError(f"frequency grid mismatch: {a} vs {b}")


def compensate_b2b(h_meas, b2b):
    """Divide the RF-chain response out of every port: ``H_chan = H_meas / H_b2b``."""
    _check_grids(h_meas.freqs, b2b.freqs)
    if np.any(np.abs(b2b.values) < _MIN_B2B):
        raise NumericalError("back-to-back response is not invertible (|H_b2b| < 1e-12)")
    return ChannelMatrix(h_meas.freqs, h_meas.values / b2b.values[None, :], role="chan")


def apply_b2b(h_chan, b2b):
    """Inverse of :func:`compensate_b2b`; used to fake measured data."""
    _check_grids(h_chan.freqs, b2b.freqs)
    return ChannelMatrix(h_chan.freqs, h_chan.values * b2b.values[None, :], role="measured")


def select_band(h, sel):
    """Sub-matrix over ``sel`` with its frequency grid re-anchored."""
    if sel.stop_index > h.freqs.count:
        raise OutOfRangeError(
            f"band [{sel.start_index}, {sel.stop_index}) exceeds grid of {h.freqs.count} points")
    sub = h.freqs.sub_grid(sel.start_index, sel.count)
    return ChannelMatrix(sub, h.values[:, sel.slice()], h.role)


def synthetic_b2b(freqs, seed, order=5, ripple_db=3.0):
    """
    Smooth random RF-chain response: complex polynomial of the given order
    in normalized frequency, with magnitude ripple held within ``ripple_db``
    and a random bulk delay-like phase slope.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, freqs.count)
    mag_poly = np.polynomial.Polynomial(rng.standard_normal(order + 1))
    mag = mag_poly(x)
    span = np.ptp(mag)
    mag_db = (mag - mag.min()) / span * ripple_db if span > 0 else np.zeros_like(x)
    phase_poly = np.polynomial.Polynomial(rng.standard_normal(order + 1) * np.r_[1.0, 20.0, np.ones(order - 1)])
    gain = rng.uniform(0.5, 2.0)
    return B2bResponse(freqs, gain * 10.0 ** (mag_db / 20.0) * np.exp(1j * phase_poly(x)))
