"""Frequency and angle sampling grids, plus band selections on them."""

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRangeError

__all__ = ["FrequencyGrid", "AngleGrid", "BandSelection"]


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform subcarrier grid ``start_hz + k * step_hz`` for ``k < count``."""

    start_hz: float
    step_hz: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.start_hz):
            raise ValueError("start_hz must be finite")
        if not (self.step_hz > 0 and np.isfinite(self.step_hz)):
            raise ValueError(f"step_hz must be positive, got {self.step_hz}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count}")
        object.__setattr__(self, "start_hz", float(self.start_hz))
        object.__setattr__(self, "step_hz", float(self.step_hz))
        object.__setattr__(self, "count", int(self.count))

    def frequency(self, k):
        # computed from the index, never by accumulation
        return self.start_hz + np.asarray(k, dtype=float) * self.step_hz

    @property
    def values(self):
        return self.frequency(np.arange(self.count))

    @property
    def stop_hz(self):
        return self.frequency(self.count - 1)

    def sub_grid(self, start_index, count):
        return FrequencyGrid(float(self.frequency(start_index)), self.step_hz, count)

    def contains(self, f, rtol=1e-12):
        f = np.asarray(f, dtype=float)
        slack = rtol * max(abs(self.start_hz), abs(self.stop_hz), 1.0)
        return (f >= self.start_hz - slack) & (f <= self.stop_hz + slack)

    def index_of(self, f_hz):
        """Nearest grid index of frequency ``f_hz``."""
        return int(round((f_hz - self.start_hz) / self.step_hz))

    def __len__(self):
        return self.count


@dataclass(frozen=True)
class AngleGrid:
    """Azimuth grid over [0, 360) and elevation grid over [0, 180], degrees.

    Both axes must be uniformly spaced. Azimuth is periodic, so its last
    node sits one step short of 360 degrees; elevation includes both poles.
    """

    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray

    def __post_init__(self):
        az = np.asarray(self.azimuth_deg, dtype=float)
        el = np.asarray(self.elevation_deg, dtype=float)
        if az.ndim != 1 or el.ndim != 1 or az.size < 1 or el.size < 2:
            raise ValueError("angle grids must be non-empty 1-D sequences")
        for name, ax in (("azimuth", az), ("elevation", el)):
            if ax.size > 1 and np.any(np.diff(ax) <= 0):
                raise ValueError(f"{name} grid must be strictly increasing")
        object.__setattr__(self, "azimuth_deg", az)
        object.__setattr__(self, "elevation_deg", el)

    @classmethod
    def uniform(cls, step_deg=5.0):
        """Full-sphere grid with the given spacing (72 x 37 for 5 degrees)."""
        n_az = 360.0 / step_deg
        n_el = 180.0 / step_deg
        if abs(n_az - round(n_az)) > 1e-9 or abs(n_el - round(n_el)) > 1e-9:
            raise ValueError("step_deg must divide 180 evenly")
        return cls(np.arange(int(round(n_az))) * step_deg,
                   np.arange(int(round(n_el)) + 1) * step_deg)

    @property
    def shape(self):
        return (self.azimuth_deg.size, self.elevation_deg.size)

    def is_uniform(self, tol=1e-9):
        """True when both axes are uniform and span the full sphere."""
        az, el = self.azimuth_deg, self.elevation_deg
        if az.size < 2:
            return False
        d_az = 360.0 / az.size
        if not np.allclose(az, az[0] + d_az * np.arange(az.size), atol=tol, rtol=0):
            return False
        if abs(az[0]) > tol:
            return False
        d_el = 180.0 / (el.size - 1)
        return bool(np.allclose(el, d_el * np.arange(el.size), atol=tol, rtol=0))

    def __eq__(self, other):
        if not isinstance(other, AngleGrid):
            return NotImplemented
        return (np.array_equal(self.azimuth_deg, other.azimuth_deg)
                and np.array_equal(self.elevation_deg, other.elevation_deg))

    __hash__ = None


@dataclass(frozen=True)
class BandSelection:
    """Contiguous run of ``count`` subcarriers starting at ``start_index``."""

    start_index: int
    count: int

    def __post_init__(self):
        if int(self.start_index) != self.start_index or self.start_index < 0:
            raise ValueError(f"start_index must be a non-negative integer, got {self.start_index}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"band count must be an integer >= 2, got {self.count}")
        object.__setattr__(self, "start_index", int(self.start_index))
        object.__setattr__(self, "count", int(self.count))

    @property
    def stop_index(self):
        """One past the last selected index."""
        return self.start_index + self.count

    def check_within(self, grid):
        if self.stop_index > grid.count:
            raise OutOfRangeError(
                f"band [{self.start_index}, {self.stop_index}) exceeds grid of {grid.count} points")

    def mask(self, count):
        out = np.zeros(count, dtype=bool)
        out[self.start_index:self.stop_index] = True
        return out

    def slice(self):
        return slice(self.start_index, self.stop_index)
