"""
Ground-truth SIMO channels from discrete multipath components.

The channel at port ``m`` and frequency ``f`` is a sum of plane waves::

    H(m, f) = sum_l mask_l(m) * alpha_l * a(m, phi_l, theta_l, f) * exp(-2j pi f tau_l)

The same routine builds ground truth (with the true pattern) and
reconstructions from estimated paths (with the pattern the estimator
assumed). Impairments (noise, calibration drift, partial LOS masks and
spherical wavefronts) are layered on top.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .array_model import SPEED_OF_LIGHT, CylindricalArraySpec
from .errors import NumericalError, OutOfRangeError
from .grids import FrequencyGrid

__all__ = [
    "PathParams",
    "PathSet",
    "ChannelMatrix",
    "PortGainMask",
    "SphericalWavefront",
    "ImpairmentSpec",
    "SCENARIO_KINDS",
    "synthesize_channel",
    "path_contribution",
    "add_awgn",
    "perturb_pattern",
    "make_scenario",
    "band_power",
    "normalize_to_band",
    "write_chx1",
    "read_chx1",
    "write_pathset",
    "read_pathset",
    "pathset_to_json",
    "pathset_from_json",
]

ROLES = ("measured", "chan", "sage", "b2b")


@dataclass(frozen=True)
class PathParams:
    """One multipath component: complex amplitude, delay (s), azimuth and
    elevation (rad)."""

    alpha: complex
    tau: float
    phi: float
    theta: float

    def __post_init__(self):
        alpha = complex(self.alpha)
        if not np.isfinite(alpha):
            raise ValueError("alpha must be finite")
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be finite and non-negative, got {self.tau}")
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if not np.isfinite(self.phi):
            raise ValueError("phi must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "phi", float(np.mod(self.phi, 2 * np.pi)))
        object.__setattr__(self, "theta", float(self.theta))


@dataclass(frozen=True)
class PathSet:
    """Ordered collection of :class:`PathParams`."""

    paths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    @classmethod
    def from_arrays(cls, alpha, tau, phi, theta):
        return cls(tuple(PathParams(a, t, p, th)
                         for a, t, p, th in zip(alpha, tau, phi, theta)))

    @property
    def L(self):
        return len(self.paths)

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    def __add__(self, other):
        return PathSet(self.paths + tuple(other.paths))

    @property
    def alpha(self):
        return np.array([p.alpha for p in self.paths], dtype=complex)

    @property
    def tau(self):
        return np.array([p.tau for p in self.paths], dtype=float)

    @property
    def phi(self):
        return np.array([p.phi for p in self.paths], dtype=float)

    @property
    def theta(self):
        return np.array([p.theta for p in self.paths], dtype=float)

    def canonical(self):
        """Copy sorted by descending ``|alpha|`` (stable)."""
        order = sorted(range(len(self.paths)), key=lambda i: -abs(self.paths[i].alpha))
        return PathSet(tuple(self.paths[i] for i in order))

    def scaled(self, c):
        return PathSet(tuple(replace(p, alpha=p.alpha * c) for p in self.paths))

    def delayed(self, dtau):
        return PathSet(tuple(replace(p, tau=p.tau + dtau) for p in self.paths))


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Complex transfer function, ports x subcarriers."""

    freqs: FrequencyGrid
    values: np.ndarray
    role: str = "chan"

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, copy=True)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != self.freqs.count:
            raise ValueError(f"values shape {v.shape} does not match {self.freqs.count} subcarriers")
        if not np.all(np.isfinite(v)):
            raise ValueError("channel values must be finite")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def num_ports(self):
        return self.values.shape[0]

    def with_values(self, values, role=None):
        return ChannelMatrix(self.freqs, values, self.role if role is None else role)


@dataclass(frozen=True, eq=False)
class PortGainMask:
    """Per-port complex multipliers applied to a subset of paths."""

    multipliers: np.ndarray
    path_indices: tuple = (0,)

    def __post_init__(self):
        g = np.asarray(self.multipliers, dtype=complex).ravel()
        if not np.all(np.isfinite(g)):
            raise ValueError("mask multipliers must be finite")
        object.__setattr__(self, "multipliers", g)
        object.__setattr__(self, "path_indices", tuple(int(i) for i in self.path_indices))

    def check(self, num_paths, num_ports):
        if self.multipliers.size != num_ports:
            raise ValueError(f"mask has {self.multipliers.size} ports, channel has {num_ports}")
        for i in self.path_indices:
            if not 0 <= i < num_paths:
                raise ValueError(f"mask path index {i} invalid for {num_paths} paths")


@dataclass(frozen=True, eq=False)
class SphericalWavefront:
    """Point source at ``distance_m`` along each path direction.

    ``positions_m`` are the element positions the pattern's plane-wave
    phase refers to (same origin as the path delays).
    """

    positions_m: np.ndarray
    distance_m: float

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError("source distance must be positive")

    def correction(self, phi, theta, f):
        """Per-port factor turning a plane-wave response into a spherical one."""
        k = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        pos = np.asarray(self.positions_m, dtype=float)
        r = self.distance_m
        exact = np.linalg.norm(r * k[None, :] - pos, axis=1)
        planar = r - pos @ k
        excess = (exact - planar)[:, None]
        return (r / exact)[:, None] * np.exp(-2j * np.pi * np.asarray(f)[None, :] * excess / SPEED_OF_LIGHT)


@dataclass(frozen=True, eq=False)
class ImpairmentSpec:
    """Impairments applied on top of the ideal plane-wave channel."""

    snr_db: float = None
    calib_phase_sigma_deg: float = None
    calib_gain_sigma_db: float = None
    plos_mask: PortGainMask = None
    spherical_source_distance_m: float = None
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("calib_phase_sigma_deg", "calib_gain_sigma_db"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.spherical_source_distance_m is not None and not self.spherical_source_distance_m > 0:
            raise ValueError("spherical_source_distance_m must be positive")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValueError("rng_seed must be an unsigned integer")

    @property
    def perturbs_calibration(self):
        return bool(self.calib_phase_sigma_deg or self.calib_gain_sigma_db)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------

def path_contribution(path, pattern, freqs, port_gain=None, wavefront=None):
    """Single-path term of the channel sum, shape ``(M, len(freqs))``."""
    f = freqs.values if isinstance(freqs, FrequencyGrid) else np.asarray(freqs, dtype=float)
    a = pattern.response(path.phi, path.theta, f)[0]
    if wavefront is not None:
        a = a * wavefront.correction(path.phi, path.theta, f)
    term = path.alpha * a * np.exp(-2j * np.pi * f * path.tau)[None, :]
    if port_gain is not None:
        term = port_gain[:, None] * term
    return term


def synthesize_channel(paths, pattern, freqs, mask=None, wavefront=None, role="chan"):
    """
    Channel matrix for a path set seen through an array pattern.

    Parameters
    ----------
    paths : PathSet
    pattern : EadfPattern
        Evaluated at each path direction; ``freqs`` must sit inside its
        calibration span.
    freqs : FrequencyGrid
    mask : PortGainMask, optional
        Per-port gains for a subset of paths (partial LOS).
    wavefront : SphericalWavefront, optional
        Replace the plane-wave phase across the aperture with exact ranges.
    role : str
        Role tag of the returned matrix.

    Returns
    -------
    ChannelMatrix
    """
    if not np.all(pattern.freqs.contains([freqs.start_hz, freqs.stop_hz])):
        raise OutOfRangeError("frequency grid exceeds the pattern's calibration span")
    m = pattern.num_ports
    if mask is not None:
        mask.check(len(paths), m)
    values = np.zeros((m, freqs.count), dtype=complex)
    for i, path in enumerate(paths):
        gain = mask.multipliers if (mask is not None and i in mask.path_indices) else None
        values += path_contribution(path, pattern, freqs, gain, wavefront)
    return ChannelMatrix(freqs, values, role)


def band_power(h, band=None):
    """Mean per-sample power ``mean |h|^2``, optionally over a band."""
    v = h.values if band is None else h.values[:, band.slice()]
    return float(np.mean(np.abs(v) ** 2))


def normalize_to_band(paths, pattern, freqs, band, mask=None, wavefront=None):
    """Rescale path amplitudes so the synthesized channel has unit mean
    power over ``band``. Returns ``(scaled_paths, scale)``."""
    sub = freqs.sub_grid(band.start_index, band.count)
    p = band_power(synthesize_channel(paths, pattern, sub, mask, wavefront))
    if p == 0.0:
        raise NumericalError("cannot normalize a zero channel")
    scale = 1.0 / np.sqrt(p)
    return paths.scaled(scale), scale


def add_awgn(h, snr_db, seed):
    """
    Add circular complex white Gaussian noise at ``snr_db`` relative to the
    mean sample power of ``h``. ``snr_db = inf`` (or None) returns ``h``.
    """
    if snr_db is None or np.isposinf(snr_db):
        return h
    p = band_power(h)
    if p == 0.0:
        raise NumericalError("SNR is undefined for an all-zero channel")
    var = p * 10.0 ** (-snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(h.values.shape) + 1j * rng.standard_normal(h.values.shape)
    return h.with_values(h.values + np.sqrt(var / 2.0) * noise)


DRIFT_CORRELATION_HZ = 100e6


def _smooth_gaussian(rng, n_ports, freqs, correlation_hz):
    """Unit-variance Gaussian draws per port, correlated across calibration
    frequencies with a squared-exponential kernel; identical across
    frequency when ``correlation_hz`` is None."""
    if correlation_hz is None or np.isinf(correlation_hz) or freqs.count == 1:
        return np.repeat(rng.standard_normal((n_ports, 1)), freqs.count, axis=1)
    f = freqs.values
    k = np.exp(-0.5 * ((f[:, None] - f[None, :]) / correlation_hz) ** 2)
    w, v = np.linalg.eigh(k)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    return rng.standard_normal((n_ports, f.size)) @ root.T


def perturb_pattern(e, phase_sigma_deg, gain_sigma_db, seed, correlation_hz=DRIFT_CORRELATION_HZ):
    """
    Calibration drift: scale port ``m`` of the pattern by ``g_m exp(j psi_m)``.

    ``psi_m`` is Gaussian with standard deviation ``phase_sigma_deg`` and
    ``g_m`` log-normal with ``gain_sigma_db``. Both wander smoothly over
    the calibration frequencies with correlation length ``correlation_hz``
    (squared-exponential); pass ``correlation_hz=None`` for a drift that
    is constant in frequency.
    """
    if phase_sigma_deg < 0 or gain_sigma_db < 0:
        raise ValueError("perturbation sigmas must be non-negative")
    if phase_sigma_deg == 0 and gain_sigma_db == 0:
        return e
    rng = np.random.default_rng(seed)
    gain_db = gain_sigma_db * _smooth_gaussian(rng, e.num_ports, e.freqs, correlation_hz)
    phase = np.deg2rad(phase_sigma_deg * _smooth_gaussian(rng, e.num_ports, e.freqs, correlation_hz))
    factor = 10.0 ** (gain_db / 20.0) * np.exp(1j * phase)          # (M, C)
    return e.with_coeffs(e.coeffs * factor[:, :, None, None])


# ---------------------------------------------------------------------------
# Scenario presets
# ---------------------------------------------------------------------------

SCENARIO_KINDS = ("chamber_los", "outdoor_los", "outdoor_plos", "outdoor_nlos")

_EL_RANGE = (np.deg2rad(60.0), np.deg2rad(120.0))
PLOS_ATTENUATION_DB = 15.0


def _random_paths(rng, power_db, tau):
    n = len(tau)
    amp = 10.0 ** (np.asarray(power_db) / 20.0)
    alpha = amp * np.exp(2j * np.pi * rng.random(n))
    phi = 2 * np.pi * rng.random(n)
    theta = rng.uniform(*_EL_RANGE, size=n)
    return PathSet.from_arrays(alpha, tau, phi, theta)


def _los_paths(rng):
    tau0 = rng.uniform(100e-9, 300e-9)
    n_weak = int(rng.integers(5, 10))
    weak_db = np.sort(rng.uniform(-25.0, -15.0, size=n_weak))[::-1]
    weak_tau = tau0 + rng.uniform(20e-9, 600e-9, size=n_weak)
    return _random_paths(rng, np.r_[0.0, weak_db], np.r_[tau0, weak_tau])


def make_scenario(kind, seed, geometry=None):
    """
    Deterministic scenario preset.

    Parameters
    ----------
    kind : {'chamber_los', 'outdoor_los', 'outdoor_plos', 'outdoor_nlos'}
    seed : int
    geometry : CylindricalArraySpec, optional
        Needed for the row structure of the partial-LOS mask; defaults to
        the 16 x 4 cylinder.

    Returns
    -------
    paths : PathSet
    mask : PortGainMask or None
    impairments : ImpairmentSpec
    """
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    geometry = CylindricalArraySpec() if geometry is None else geometry
    rng = np.random.default_rng([SCENARIO_KINDS.index(kind), int(seed)])
    mask = None
    if kind == "chamber_los":
        # TX and RX at equal height, at least 5 m apart
        n = int(rng.integers(1, 3))
        tau0 = rng.uniform(5.0, 6.0) / SPEED_OF_LIGHT
        power = np.r_[0.0, rng.uniform(-25.0, -20.0, size=n - 1)]
        tau = np.r_[tau0, tau0 + rng.uniform(15e-9, 40e-9, size=n - 1)]
        paths = _random_paths(rng, power, tau)
        lead = paths[0]
        paths = PathSet((replace(lead, theta=np.pi / 2 + np.deg2rad(rng.uniform(-2.0, 2.0))),)
                        + paths.paths[1:])
        imp = ImpairmentSpec(snr_db=40.0, rng_seed=int(seed))
    elif kind == "outdoor_nlos":
        n = int(rng.integers(15, 26))
        tau = np.sort(rng.uniform(0.0, 1e-6, size=n))
        power_db = 10.0 * np.log10(np.exp(-tau / 200e-9))
        paths = _random_paths(rng, power_db, tau)
        imp = ImpairmentSpec(snr_db=20.0, rng_seed=int(seed))
    else:
        paths = _los_paths(rng)
        if kind == "outdoor_plos":
            rows = geometry.port_rows()
            g = np.where(rows == 0, 1.0, 10.0 ** (-PLOS_ATTENUATION_DB / 20.0))
            mask = PortGainMask(g.astype(complex), (0,))
        imp = ImpairmentSpec(snr_db=30.0, plos_mask=mask, rng_seed=int(seed))
    return paths, mask, imp


# ---------------------------------------------------------------------------
# Files: CHX1 channels and path-set JSON
# ---------------------------------------------------------------------------

def _data_path(header_path):
    header_path = Path(header_path)
    return header_path.with_name(header_path.name + ".bin")


def write_chx1(h, path):
    """JSON header at ``path``; port-major little-endian (re, im) float64
    pairs at ``path + '.bin'``."""
    path = Path(path)
    header = {
        "magic": "CHX1",
        "ports": int(h.num_ports),
        "freq_start_hz": h.freqs.start_hz,
        "freq_step_hz": h.freqs.step_hz,
        "freq_count": h.freqs.count,
        "role": h.role,
    }
    path.write_text(json.dumps(header, indent=1))
    data = np.ascontiguousarray(h.values, dtype="<c16").view("<f8")
    _data_path(path).write_bytes(data.tobytes())


def read_chx1(path):
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("magic") != "CHX1":
        raise ValueError(f"{path}: not a CHX1 header")
    freqs = FrequencyGrid(header["freq_start_hz"], header["freq_step_hz"], header["freq_count"])
    raw = np.frombuffer(_data_path(path).read_bytes(), dtype="<f8")
    n = header["ports"] * freqs.count
    if raw.size != 2 * n:
        raise ValueError(f"{path}: binary payload has {raw.size // 2} values, expected {n}")
    values = (raw[0::2] + 1j * raw[1::2]).reshape(header["ports"], freqs.count)
    return ChannelMatrix(freqs, values, header.get("role", "chan"))


def pathset_to_json(paths):
    return [{"alpha_re": p.alpha.real, "alpha_im": p.alpha.imag, "tau_s": p.tau,
             "phi_deg": float(np.rad2deg(p.phi)), "theta_deg": float(np.rad2deg(p.theta))}
            for p in paths]


def pathset_from_json(items):
    out = []
    for i, d in enumerate(items):
        try:
            out.append(PathParams(complex(d["alpha_re"], d["alpha_im"]), d["tau_s"],
                                  np.deg2rad(d["phi_deg"]), np.deg2rad(d["theta_deg"])))
        except KeyError as exc:
            raise ValueError(f"path {i}: missing key {exc}") from None
    return PathSet(tuple(out))


def write_pathset(paths, path):
    Path(path).write_text(json.dumps(pathset_to_json(paths), indent=1))


def read_pathset(path):
    return pathset_from_json(json.loads(Path(path).read_text()))
