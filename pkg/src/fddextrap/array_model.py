"""
Complex array radiation patterns and their EADF representation.

A measured (or synthesized) pattern ``a(m, phi, theta, f)`` lives on a
discrete azimuth/elevation grid at a handful of calibration frequencies.
To evaluate it at arbitrary directions the pattern is periodified over
elevation and transformed with a 2-D DFT; the resulting spectral
coefficients (the effective aperture distribution function, EADF) give an
exact trigonometric interpolant in angle. Between calibration frequencies
the complex gains are interpolated linearly.

Angles: ``theta`` is the polar angle from zenith (90 deg is the horizon),
``phi`` is measured counterclockwise from the array x-axis. Public
functions take radians; grids and files use degrees.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import OutOfRangeError
from .grids import AngleGrid, FrequencyGrid

__all__ = [
    "SPEED_OF_LIGHT",
    "ElementSpec",
    "CylindricalArraySpec",
    "ExplicitArraySpec",
    "ArrayPattern",
    "EadfPattern",
    "default_calibration_grid",
    "make_synthetic_pattern",
    "eadf_from_pattern",
    "evaluate_pattern",
    "write_patx1",
    "read_patx1",
]

SPEED_OF_LIGHT = 299_792_458.0

CENTER_HZ = 3.5e9
_LAMBDA_CENTER = SPEED_OF_LIGHT / CENTER_HZ


def default_calibration_grid(step_hz=5e6):
    """Calibration frequencies covering 3.325 - 3.675 GHz."""
    count = int(round(350e6 / step_hz)) + 1
    return FrequencyGrid(3.325e9, step_hz, count)


# ---------------------------------------------------------------------------
# Geometry descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElementSpec:
    """Single patch element: cos-power lobe with FWHM beamwidths.

    Setting ``isotropic`` gives a unit gain element in every direction.
    """

    az_beamwidth_deg: float = 50.0
    el_beamwidth_deg: float = 100.0
    isotropic: bool = False
    floor_db: float = -40.0

    def __post_init__(self):
        for name in ("az_beamwidth_deg", "el_beamwidth_deg"):
            bw = getattr(self, name)
            if not (0.0 < bw <= 180.0):
                raise ValueError(f"{name} must lie in (0, 180], got {bw}")

    def exponents(self):
        """Field exponents (q_az, q_el) so that cos^(2q) halves at +-bw/2."""
        def solve(bw):
            c = np.cos(np.deg2rad(bw) / 2.0)
            if c <= 0.0:
                return 0.0
            return np.log(0.5) / (2.0 * np.log(c))
        return solve(self.az_beamwidth_deg), solve(self.el_beamwidth_deg)

    def gain(self, off_az, off_el):
        """Real field gain for azimuth offset ``off_az`` from boresight and
        elevation offset ``off_el`` from the horizon, both radians."""
        if self.isotropic:
            return np.ones(np.broadcast(off_az, off_el).shape)
        q_az, q_el = self.exponents()
        ca = np.clip(np.cos(off_az), 0.0, None)
        ce = np.clip(np.cos(off_el), 0.0, None)
        g = ca ** q_az * ce ** q_el
        return np.maximum(g, 10.0 ** (self.floor_db / 20.0))


@dataclass(frozen=True)
class CylindricalArraySpec:
    """Uniform cylindrical array: ``columns`` facets around the z-axis, each
    holding ``rows`` elements stacked vertically and facing outward.

    When ``radius_m`` is None it is chosen so adjacent columns sit half a
    wavelength (at 3.5 GHz) apart along the circumference.
    """

    columns: int = 16
    rows: int = 4
    radius_m: float = None
    row_spacing_m: float = 0.5 * _LAMBDA_CENTER
    element: ElementSpec = field(default_factory=ElementSpec)

    def __post_init__(self):
        if int(self.columns) != self.columns or self.columns < 1:
            raise ValueError(f"columns must be a positive integer, got {self.columns}")
        if int(self.rows) != self.rows or self.rows < 1:
            raise ValueError(f"rows must be a positive integer, got {self.rows}")
        if self.radius_m is not None and self.radius_m < 0:
            raise ValueError("radius_m must be non-negative")
        if self.row_spacing_m <= 0 and self.rows > 1:
            raise ValueError("row_spacing_m must be positive")

    @property
    def num_ports(self):
        return self.columns * self.rows

    @property
    def radius(self):
        if self.radius_m is not None:
            return float(self.radius_m)
        if self.columns == 1:
            return 0.0
        return self.columns * 0.5 * _LAMBDA_CENTER / (2 * np.pi)

    def port_rows(self):
        """Row index (0 = top) of each port; ports are column-major."""
        return np.tile(np.arange(self.rows), self.columns)

    def boresight_azimuths(self):
        cols = np.repeat(np.arange(self.columns), self.rows)
        return 2 * np.pi * cols / self.columns

    def element_positions(self):
        phi_c = self.boresight_azimuths()
        # row 0 on top
        z = ((self.rows - 1) / 2.0 - self.port_rows()) * self.row_spacing_m
        r = self.radius
        return np.stack([r * np.cos(phi_c), r * np.sin(phi_c), z], axis=1)


@dataclass(frozen=True)
class ExplicitArraySpec:
    """Arbitrary element positions (M x 3, metres) and boresight azimuths."""

    positions_m: tuple
    boresight_az_deg: tuple = None
    element: ElementSpec = field(default_factory=ElementSpec)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions_m, dtype=float))
        if pos.shape[0] < 1 or pos.shape[1] != 3:
            raise ValueError("positions_m must be an (M, 3) array with M >= 1")

    @property
    def num_ports(self):
        return np.atleast_2d(np.asarray(self.positions_m)).shape[0]

    def element_positions(self):
        return np.atleast_2d(np.asarray(self.positions_m, dtype=float))

    def boresight_azimuths(self):
        if self.boresight_az_deg is None:
            return np.zeros(self.num_ports)
        return np.deg2rad(np.asarray(self.boresight_az_deg, dtype=float))

    def port_rows(self):
        return np.zeros(self.num_ports, dtype=int)


def _direction(phi, theta):
    phi, theta = np.broadcast_arrays(phi, theta)
    return np.stack([np.sin(theta) * np.cos(phi),
                     np.sin(theta) * np.sin(phi),
                     np.cos(theta)], axis=-1)


def geometric_phase(positions, phi, theta, f):
    """Phase ``2 pi f <k, p> / c`` (radians) for unit direction k(phi, theta)."""
    proj = _direction(phi, theta) @ np.asarray(positions).T
    return 2 * np.pi * np.asarray(f)[..., None] * proj / SPEED_OF_LIGHT


# ---------------------------------------------------------------------------
# Pattern containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ArrayPattern:
    """Complex port gains on an angle/frequency grid.

    ``gains`` is indexed ``(port, azimuth, elevation, frequency)``.
    """

    angles: AngleGrid
    freqs: FrequencyGrid
    gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=complex)
        if g.ndim != 4:
            raise ValueError("gains must be a 4-D (port, az, el, freq) tensor")
        expect = (g.shape[0],) + self.angles.shape + (self.freqs.count,)
        if g.shape != expect or g.shape[0] < 1:
            raise ValueError(f"gains shape {g.shape} inconsistent with grids {expect}")
        if not np.all(np.isfinite(g)):
            raise ValueError("pattern gains must be finite")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @property
    def num_ports(self):
        return self.gains.shape[0]


def _harmonic_basis(n, x):
    """Trigonometric basis for an ``n``-point periodic DFT evaluated at ``x``.

    Columns follow numpy FFT ordering. For even ``n`` the Nyquist column is
    the cosine, which keeps real data real off-grid and is exact on-grid.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = np.fft.fftfreq(n, d=1.0 / n)
    basis = np.exp(1j * x[:, None] * k[None, :])
    if n % 2 == 0:
        basis[:, n // 2] = np.cos(0.5 * n * x)
    return basis


@dataclass(frozen=True, eq=False)
class EadfPattern:
    """Spectral (EADF) form of an :class:`ArrayPattern`.

    ``coeffs`` is indexed ``(port, calibration frequency, azimuth harmonic,
    elevation harmonic)`` in FFT order and already scaled by the inverse
    transform length, so synthesis is a plain sum over harmonics.
    """

    coeffs: np.ndarray
    freqs: FrequencyGrid
    az_step_rad: float
    el_step_rad: float
    periodification: str = "mirror-az-shift-180"

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 4 or c.shape[1] != self.freqs.count:
            raise ValueError("coeffs must be (port, freq, az_harm, el_harm)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def num_ports(self):
        return self.coeffs.shape[0]

    @property
    def harmonic_shape(self):
        return self.coeffs.shape[2:]

    def with_coeffs(self, coeffs):
        return EadfPattern(coeffs, self.freqs, self.az_step_rad, self.el_step_rad,
                           self.periodification)

    def angle_basis(self, phi, theta):
        """Basis matrices (K x P, K x Q) for direction arrays in radians."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta < -1e-12) or np.any(theta > np.pi + 1e-12) or not np.all(np.isfinite(phi)):
            raise OutOfRangeError("elevation must lie in [0, pi] and azimuth must be finite")
        n_az, n_el = self.harmonic_shape
        # grid origin is 0 on both axes, so node i sits at i * step
        b_az = _harmonic_basis(n_az, np.mod(phi, 2 * np.pi) * (2 * np.pi / (n_az * self.az_step_rad)))
        b_el = _harmonic_basis(n_el, theta * (2 * np.pi / (n_el * self.el_step_rad)))
        return b_az, b_el

    def frequency_weights(self, f):
        """Linear interpolation weights, shape ``(len(f), n_cal)``."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if not np.all(self.freqs.contains(f)):
            bad = f[~self.freqs.contains(f)]
            raise OutOfRangeError(
                f"frequency {bad[0]:.6g} Hz outside calibration span "
                f"[{self.freqs.start_hz:.6g}, {self.freqs.stop_hz:.6g}] Hz")
        n = self.freqs.count
        w = np.zeros((f.size, n))
        if n == 1:
            w[:, 0] = 1.0
            return w
        pos = np.clip((f - self.freqs.start_hz) / self.freqs.step_hz, 0.0, n - 1)
        lo = np.minimum(np.floor(pos).astype(int), n - 2)
        frac = pos - lo
        rows = np.arange(f.size)
        w[rows, lo] = 1.0 - frac
        w[rows, lo + 1] += frac
        return w

    def at_calibration(self, phi, theta, cal_index=None):
        """Gains at calibration frequencies, shape ``(K, M, C)``.

        ``cal_index`` restricts the calibration frequencies evaluated.
        """
        b_az, b_el = self.angle_basis(phi, theta)
        c = self.coeffs if cal_index is None else self.coeffs[:, cal_index]
        # contract elevation first, then azimuth per direction
        tmp = c @ b_el.T                                   # (M, C, P, K)
        return np.einsum("mcpk,kp->kmc", tmp, b_az, optimize=True)

    def grid_response(self, phi, theta, f):
        """Gains on the outer product of azimuths and elevations,
        shape ``(len(phi), len(theta), M, len(f))``."""
        w = self.frequency_weights(f)
        used = np.flatnonzero(np.any(w != 0.0, axis=0))
        b_az, _ = self.angle_basis(phi, np.zeros(1))
        _, b_el = self.angle_basis(np.zeros(1), theta)
        tmp = self.coeffs[:, used] @ b_el.T                  # (M, C, P, E)
        vals = np.einsum("mcpe,ap->aemc", tmp, b_az, optimize=True)
        return vals @ w[:, used].T

    def response(self, phi, theta, f):
        """Gains for K directions at frequencies ``f``, shape ``(K, M, len(f))``."""
        w = self.frequency_weights(f)
        used = np.flatnonzero(np.any(w != 0.0, axis=0))
        vals = self.at_calibration(phi, theta, used)
        return vals @ w[:, used].T


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def make_synthetic_pattern(geometry, angles=None, freqs=None):
    """
    Parametric stand-in for a chamber-calibrated array pattern.

    Each port gets a cos-power element lobe pointing radially out of its
    column, multiplied by the far-field geometric phase
    ``exp(+2j pi f <k(phi, theta), p_m> / c)``.

    Parameters
    ----------
    geometry : CylindricalArraySpec or ExplicitArraySpec
        Element placement and element lobe description.
    angles : AngleGrid, optional
        Calibration angle grid, 5 degree steps (72 x 37) by default.
    freqs : FrequencyGrid, optional
        Calibration frequencies, 3.325-3.675 GHz every 5 MHz by default.

    Returns
    -------
    ArrayPattern
    """
    angles = AngleGrid.uniform(5.0) if angles is None else angles
    freqs = default_calibration_grid() if freqs is None else freqs
    positions = geometry.element_positions()
    boresight = geometry.boresight_azimuths()
    element = geometry.element

    phi = np.deg2rad(angles.azimuth_deg)[:, None]
    theta = np.deg2rad(angles.elevation_deg)[None, :]
    f = freqs.values
    gains = np.empty((positions.shape[0],) + angles.shape + (f.size,), dtype=complex)
    k_hat = _direction(phi, theta)                         # (A, E, 3)
    for m, (p, b) in enumerate(zip(positions, boresight)):
        amp = element.gain(phi - b, theta - np.pi / 2)     # (A, E)
        proj = k_hat @ p                                   # (A, E)
        phase = 2 * np.pi / SPEED_OF_LIGHT * proj[..., None] * f
        gains[m] = amp[..., None] * np.exp(1j * phase)
    return ArrayPattern(angles, freqs, gains)


def _periodify(gains):
    """Mirror-extend (az, el, ...) data over elevation to a full torus.

    The extended node at elevation ``360 - theta`` takes the value at
    ``(phi + 180, theta)``, so the extended axis has ``2 (n_el - 1)`` nodes.
    """
    n_az, n_el = gains.shape[:2]
    if n_az % 2:
        raise ValueError("azimuth grid needs an even number of nodes for the 180 degree shift")
    src = np.arange(n_el - 2, 0, -1)
    mirrored = np.roll(gains, -n_az // 2, axis=0)[:, src]
    return np.concatenate([gains, mirrored], axis=1)


def eadf_from_pattern(p):
    """
    2-D DFT of the elevation-periodified pattern for each port and frequency.

    Parameters
    ----------
    p : ArrayPattern
        Must sit on a uniform full-sphere angle grid with an even number of
        azimuth nodes.

    Returns
    -------
    EadfPattern
    """
    if not p.angles.is_uniform():
        raise ValueError("EADF requires a uniform full-sphere angle grid")
    n_az, n_el = p.angles.shape
    n_ext = 2 * (n_el - 1)
    coeffs = np.empty((p.num_ports, p.freqs.count, n_az, n_ext), dtype=complex)
    for m in range(p.num_ports):
        ext = _periodify(p.gains[m])                       # (A, E_ext, F)
        spec = np.fft.fft2(ext, axes=(0, 1)) / (n_az * n_ext)
        coeffs[m] = np.moveaxis(spec, -1, 0)
    return EadfPattern(coeffs, p.freqs,
                       az_step_rad=np.deg2rad(360.0 / n_az),
                       el_step_rad=np.deg2rad(180.0 / (n_el - 1)))


def evaluate_pattern(e, port, phi, theta, f):
    """Complex gain of one port at azimuth ``phi``, elevation ``theta``
    (radians) and frequency ``f`` (Hz). Raises :class:`OutOfRangeError`
    when ``f`` lies outside the calibration span."""
    if not 0 <= port < e.num_ports:
        raise OutOfRangeError(f"port {port} out of range for {e.num_ports} ports")
    sub = e.with_coeffs(e.coeffs[port:port + 1])
    return complex(sub.response(phi, theta, [f])[0, 0, 0])


# ---------------------------------------------------------------------------
# PATX1 file format
# ---------------------------------------------------------------------------

def _data_path(header_path):
    header_path = Path(header_path)
    return header_path.with_name(header_path.name + ".bin")


def write_patx1(pattern, path):
    """Write a JSON header at ``path`` and gains to ``path + '.bin'``."""
    path = Path(path)
    header = {
        "magic": "PATX1",
        "ports": int(pattern.num_ports),
        "azimuth_deg": [float(a) for a in pattern.angles.azimuth_deg],
        "elevation_deg": [float(a) for a in pattern.angles.elevation_deg],
        "freq_start_hz": pattern.freqs.start_hz,
        "freq_step_hz": pattern.freqs.step_hz,
        "freq_count": pattern.freqs.count,
    }
    path.write_text(json.dumps(header, indent=1))
    # port outermost, frequency innermost, (re, im) pairs
    data = np.ascontiguousarray(pattern.gains, dtype="<c16").view("<f8")
    _data_path(path).write_bytes(data.tobytes())


def read_patx1(path):
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("magic") != "PATX1":
        raise ValueError(f"{path}: not a PATX1 header")
    angles = AngleGrid(header["azimuth_deg"], header["elevation_deg"])
    freqs = FrequencyGrid(header["freq_start_hz"], header["freq_step_hz"], header["freq_count"])
    shape = (header["ports"],) + angles.shape + (freqs.count,)
    raw = np.frombuffer(_data_path(path).read_bytes(), dtype="<f8")
    if raw.size != 2 * int(np.prod(shape)):
        raise ValueError(f"{path}: binary payload has {raw.size // 2} values, expected {np.prod(shape)}")
    gains = (raw[0::2] + 1j * raw[1::2]).reshape(shape)
    return ArrayPattern(angles, freqs, gains)
