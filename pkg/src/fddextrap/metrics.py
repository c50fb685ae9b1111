"""
Per-subcarrier figures of merit for an extrapolated channel.

``mse_at`` is the port-averaged squared error; ``rbg_at`` is the loss of
matched-filter beamforming gain when the beamformer is built from the
estimate instead of the true channel (>= 1 by Cauchy-Schwarz).
"""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .grids import BandSelection, FrequencyGrid

__all__ = [
    "DB_FLOOR",
    "MetricSeries",
    "mse_at",
    "rbg_at",
    "array_gain",
    "sweep",
    "to_db",
    "from_db",
    "series_to_csv",
    "offset_indices",
]

DB_FLOOR = -200.0
DB_CEIL = 200.0


def _columns(h_chan, h_sage, f_index):
    if h_chan.values.shape != h_sage.values.shape or h_chan.freqs != h_sage.freqs:
        raise ValueError("channel matrices must share ports and frequency grid")
    return h_chan.values[:, f_index], h_sage.values[:, f_index]


def mse_at(h_chan, h_sage, f_index):
    """``(1/M) sum_m |H_chan(m, f) - H_sage(m, f)|^2``."""
    c, s = _columns(h_chan, h_sage, f_index)
    return float(np.mean(np.abs(c - s) ** 2))


def _rbg(c, s):
    pc = np.vdot(c, c).real
    ps = np.vdot(s, s).real
    if pc == 0.0 or ps == 0.0:
        raise NumericalError("RBG undefined for a zero-norm channel vector")
    cross = abs(np.vdot(s, c)) ** 2
    if cross == 0.0:
        return np.inf
    return float(ps * pc / cross)


def rbg_at(h_chan, h_sage, f_index):
    """Reduction of beamforming gain; ``inf`` when the estimate is orthogonal."""
    c, s = _columns(h_chan, h_sage, f_index)
    return _rbg(c, s)


def array_gain(h_sage, h_chan, f_index):
    """Matched-filter gain over the mean single-port power:
    ``|sum h_sage^* h_chan|^2 / (sum |h_sage|^2 * mean |h_chan|^2)``."""
    c, s = _columns(h_chan, h_sage, f_index)
    ps = np.vdot(s, s).real
    pc = np.mean(np.abs(c) ** 2)
    if ps == 0.0 or pc == 0.0:
        raise NumericalError("array gain undefined for a zero-norm channel vector")
    return float(abs(np.vdot(s, c)) ** 2 / (ps * pc))


def to_db(x):
    """``10 log10(x)``; zero maps to -inf, inf to inf."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """MSE and RBG (dB) per subcarrier, with the training band marked."""

    freqs: FrequencyGrid
    mse_db: np.ndarray
    rbg_db: np.ndarray
    training_band: BandSelection

    def __post_init__(self):
        if len(self.mse_db) != self.freqs.count or len(self.rbg_db) != self.freqs.count:
            raise ValueError("metric vectors must match the frequency grid")

    @property
    def in_band(self):
        return self.training_band.mask(self.freqs.count)

    def mean_in_band_mse_db(self):
        """Mean of the linear in-band MSE, in dB."""
        return float(to_db(np.mean(from_db(self.mse_db[self.in_band]))))

    def offsets_hz(self):
        """Distance of each subcarrier beyond the upper training-band edge
        (zero or negative inside/below the band)."""
        edge = self.freqs.frequency(self.training_band.stop_index - 1)
        return self.freqs.values - edge

    def mse_at_offset_db(self, offset_hz):
        i = offset_indices(self, [offset_hz])[0]
        return float(self.mse_db[i])

    def mean_mse_beyond_db(self, offset_hz):
        sel = self.offsets_hz() >= offset_hz - 1e-3
        if not np.any(sel):
            raise ValueError(f"grid does not extend {offset_hz / 1e6:g} MHz beyond the training band")
        return float(to_db(np.mean(from_db(self.mse_db[sel]))))


def offset_indices(series, offsets_hz):
    """Subcarrier indices closest to the given offsets above the band edge."""
    off = series.offsets_hz()
    out = []
    for o in offsets_hz:
        i = int(np.argmin(np.abs(off - o)))
        if abs(off[i] - o) > series.freqs.step_hz:
            raise ValueError(f"grid does not reach {o / 1e6:g} MHz beyond the training band")
        out.append(i)
    return out


def sweep(h_chan, h_sage, training_band):
    """MSE and RBG in dB at every subcarrier.

    Exact reconstructions give ``-inf`` MSE; orthogonal estimates give
    ``+inf`` RBG. Serialization clips these to +-200 dB.
    """
    if h_chan.values.shape != h_sage.values.shape or h_chan.freqs != h_sage.freqs:
        raise ValueError("channel matrices must share ports and frequency grid")
    training_band.check_within(h_chan.freqs)
    c, s = h_chan.values, h_sage.values
    mse = np.mean(np.abs(c - s) ** 2, axis=0)
    pc = np.sum(np.abs(c) ** 2, axis=0)
    ps = np.sum(np.abs(s) ** 2, axis=0)
    if np.any(pc == 0.0) or np.any(ps == 0.0):
        raise NumericalError("RBG undefined for a zero-norm channel vector")
    cross = np.abs(np.sum(s.conj() * c, axis=0)) ** 2
    with np.errstate(divide="ignore"):
        rbg = np.where(cross > 0.0, ps * pc / np.where(cross > 0.0, cross, 1.0), np.inf)
    return MetricSeries(h_chan.freqs, to_db(mse), to_db(rbg), training_band)


def series_to_csv(series):
    """CSV text: ``freq_hz,mse_db,rbg_db,in_training_band``, 9 significant digits."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["freq_hz", "mse_db", "rbg_db", "in_training_band"])
    mse = np.clip(series.mse_db, DB_FLOOR, DB_CEIL)
    rbg = np.clip(series.rbg_db, DB_FLOOR, DB_CEIL)
    for f, m, r, b in zip(series.freqs.values, mse, rbg, series.in_band):
        writer.writerow([f"{f:.9g}", f"{m:.9g}", f"{r:.9g}", int(b)])
    return buf.getvalue()
