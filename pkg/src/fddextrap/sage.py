"""
SAGE estimation of multipath parameters from a training-band channel.

Paths are initialized by successive interference cancellation (fit one
path to the residual, subtract, repeat) and then refined in SAGE cycles:
each path is re-estimated against the data with all other paths removed,
one parameter group at a time (delay, then azimuth/elevation, then the
complex amplitude in closed form). Every coordinate search keeps the
current value as a candidate, so the residual never increases.

The angle search exploits the EADF structure: for a fixed delay the
matched-filter output is a 2-D trigonometric polynomial in (phi, theta),
so the whole coarse grid costs two small matrix products.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel_synth import PathParams, PathSet, pathset_from_json, pathset_to_json
from .errors import ConfigError, OutOfRangeError

__all__ = [
    "DelaySearch",
    "AngleSearch",
    "EstimatorConfig",
    "EstimationReport",
    "estimate",
    "single_path_ml_oracle",
    "OracleGrids",
]


@dataclass(frozen=True)
class DelaySearch:
    max_delay_s: float = 2e-6
    coarse_grid_points: int = 2048
    refinement_levels: int = 10

    def grid(self):
        return np.linspace(0.0, self.max_delay_s, self.coarse_grid_points)

    @property
    def step(self):
        return self.max_delay_s / (self.coarse_grid_points - 1)


@dataclass(frozen=True)
class AngleSearch:
    azimuth_step_deg: float = 2.0
    elevation_step_deg: float = 2.0
    refinement_levels: int = 10

    def azimuth_grid(self):
        n = int(np.floor(360.0 / self.azimuth_step_deg + 1e-9))
        return np.deg2rad(np.arange(n) * self.azimuth_step_deg)

    def elevation_grid(self):
        n = int(np.floor(180.0 / self.elevation_step_deg + 1e-9)) + 1
        return np.deg2rad(np.arange(n) * self.elevation_step_deg)


@dataclass(frozen=True)
class EstimatorConfig:
    """SAGE settings. ``num_paths`` is the model order L."""

    num_paths: int = 4
    delay_search: DelaySearch = field(default_factory=DelaySearch)
    angle_search: AngleSearch = field(default_factory=AngleSearch)
    max_cycles: int = 10
    convergence_tol: float = 1e-6
    seed: int = 0
    residual_stop_db: float = None
    restarts: int = 1

    def __post_init__(self):
        ds, an = self.delay_search, self.angle_search
        checks = [
            (int(self.num_paths) == self.num_paths and self.num_paths >= 1, "num_paths", "must be an integer >= 1"),
            (ds.max_delay_s > 0, "delay_search.max_delay_s", "must be positive"),
            (int(ds.coarse_grid_points) == ds.coarse_grid_points and ds.coarse_grid_points >= 2,
             "delay_search.coarse_grid_points", "must be an integer >= 2"),
            (ds.refinement_levels >= 0, "delay_search.refinement_levels", "must be >= 0"),
            (0 < an.azimuth_step_deg <= 180, "angle_search.azimuth_step_deg", "must lie in (0, 180]"),
            (0 < an.elevation_step_deg <= 90, "angle_search.elevation_step_deg", "must lie in (0, 90]"),
            (an.refinement_levels >= 0, "angle_search.refinement_levels", "must be >= 0"),
            (int(self.max_cycles) == self.max_cycles and self.max_cycles >= 1, "max_cycles", "must be an integer >= 1"),
            (self.convergence_tol > 0, "convergence_tol", "must be positive"),
            (int(self.seed) == self.seed and self.seed >= 0, "seed", "must be an unsigned integer"),
            (int(self.restarts) == self.restarts and self.restarts >= 1, "restarts", "must be an integer >= 1"),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(msg, key)

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, doc, key_path=""):
        """Build from a JSON mapping; unknown keys raise :class:`ConfigError`."""
        prefix = f"{key_path}." if key_path else ""
        doc = dict(doc)
        nested = {}
        for name, sub_cls in (("delay_search", DelaySearch), ("angle_search", AngleSearch)):
            sub = doc.pop(name, {})
            if not isinstance(sub, dict):
                raise ConfigError("must be an object", prefix + name)
            allowed = set(sub_cls.__dataclass_fields__)
            for k in sub:
                if k not in allowed:
                    raise ConfigError("unknown key", f"{prefix}{name}.{k}")
            nested[name] = sub_cls(**sub)
        allowed = set(cls.__dataclass_fields__) - {"delay_search", "angle_search"}
        for k in doc:
            if k not in allowed:
                raise ConfigError("unknown key", prefix + k)
        try:
            return cls(**doc, **nested)
        except ConfigError as exc:
            raise ConfigError(str(exc).split(": ", 1)[-1], prefix + (exc.key_path or "")) from None


@dataclass(frozen=True, eq=False)
class EstimationReport:
    paths: PathSet
    residual_power_per_cycle: tuple
    converged: bool
    cycles_used: int

    def to_json(self):
        return {
            "paths": pathset_to_json(self.paths),
            "residual_power_per_cycle": [float(r) for r in self.residual_power_per_cycle],
            "converged": bool(self.converged),
            "cycles_used": int(self.cycles_used),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(pathset_from_json(doc["paths"]), tuple(doc["residual_power_per_cycle"]),
                   bool(doc["converged"]), int(doc["cycles_used"]))

    def dumps(self):
        return json.dumps(self.to_json(), indent=1)


def _energy(x):
    return float(np.vdot(x, x).real)


class _Problem:
    """Per-run precomputation shared by all coordinate updates."""

    def __init__(self, h, pattern, cfg):
        self.h = h.values
        self.pattern = pattern
        self.cfg = cfg
        self.f = h.freqs.values
        w = pattern.frequency_weights(self.f)
        self.cal = np.flatnonzero(np.any(w != 0.0, axis=0))
        self.w = w[:, self.cal]                               # (N, C)
        self.gram = self.w.T @ self.w                         # (C, C)
        self.coeffs = pattern.coeffs[:, self.cal]             # (M, C, P, Q)
        self.coeffs_conj = self.coeffs.conj()

        self.tau_grid = cfg.delay_search.grid()
        self.phi_grid = cfg.angle_search.azimuth_grid()
        self.theta_grid = cfg.angle_search.elevation_grid()
        b_az, b_el = pattern.angle_basis(self.phi_grid[:1], self.theta_grid)
        self.b_el_grid_conj = b_el.conj()
        b_az, _ = pattern.angle_basis(self.phi_grid, self.theta_grid[:1])
        self.b_az_grid_conj = b_az.conj()
        self._den_grid = None
        self._delay_phasors = None

    # -- shared pieces ------------------------------------------------------

    @property
    def delay_phasors(self):
        """``exp(+2j pi f tau)`` for the coarse delay grid, (G, N)."""
        if self._delay_phasors is None:
            self._delay_phasors = np.exp(2j * np.pi * np.outer(self.tau_grid, self.f))
        return self._delay_phasors

    @property
    def den_grid(self):
        """``sum_{m,f} |a(m, phi, theta, f)|^2`` on the coarse angle grid."""
        if self._den_grid is None:
            b_az = self.b_az_grid_conj.conj()
            b_el = self.b_el_grid_conj.conj()
            den = np.zeros((b_az.shape[0], b_el.shape[0]))
            for cm in self.coeffs:                           # (C, P, Q)
                a = b_az @ (cm @ b_el.T)                     # (C, A, E)
                ga = np.tensordot(self.gram, a, axes=(1, 0))
                den += np.einsum("cae,cae->ae", a.conj(), ga).real
            self._den_grid = den
        return self._den_grid

    def steering(self, phi, theta):
        """``a(m, phi, theta, f)`` on the training band, (M, N)."""
        return self.pattern.response(phi, theta, self.f)[0]

    def signature(self, tau, phi, theta):
        return self.steering(phi, theta) * np.exp(-2j * np.pi * self.f * tau)[None, :]

    def fit(self, x, tau, phi, theta):
        """Closed-form amplitude and the resulting path term."""
        b = self.signature(tau, phi, theta)
        nb = _energy(b)
        alpha = np.vdot(b, x) / nb if nb > 0 else 0.0
        return complex(alpha), alpha * b

    # -- delay ----------------------------------------------------------------

    def delay_step(self, x, tau, phi, theta, levels):
        a = self.steering(phi, theta)
        g = np.einsum("mn,mn->n", a.conj(), x)               # (N,)

        def obj(taus):
            taus = np.atleast_1d(taus)
            return np.abs(np.exp(2j * np.pi * np.outer(taus, self.f)) @ g) ** 2

        best_tau = tau
        best = obj(tau)[0]
        coarse = np.abs(self.delay_phasors @ g) ** 2
        k = int(np.argmax(coarse))
        if coarse[k] > best:
            best_tau, best = self.tau_grid[k], coarse[k]
        step = self.cfg.delay_search.step
        for _ in range(levels):
            step /= 2.0
            cand = np.array([best_tau - step, best_tau + step])
            cand = cand[cand >= 0.0]
            if cand.size:
                vals = obj(cand)
                i = int(np.argmax(vals))
                if vals[i] > best:
                    best_tau, best = cand[i], vals[i]
        return float(best_tau)

    def pdp(self, x):
        """Port-summed delay profile on the coarse grid."""
        return np.sum(np.abs(x @ self.delay_phasors.T) ** 2, axis=0)

    # -- angles -------------------------------------------------------------

    def _angle_numerator(self, x, tau):
        y = x * np.exp(2j * np.pi * self.f * tau)[None, :]
        z = y @ self.w                                       # (M, C)
        return np.einsum("mcpq,mc->pq", self.coeffs_conj, z, optimize=True)

    def _angle_obj_points(self, d, phis, thetas):
        b_az, b_el = self.pattern.angle_basis(phis, thetas)
        v = np.einsum("kp,pq,kq->k", b_az.conj(), d, b_el.conj(), optimize=True)
        a = np.einsum("mcpq,kq->kmcp", self.coeffs, b_el, optimize=True)
        a = np.einsum("kmcp,kp->kmc", a, b_az)
        den = np.einsum("kmc,cd,kmd->k", a.conj(), self.gram, a, optimize=True).real
        return np.abs(v) ** 2 / den

    def angle_step(self, x, tau, phi, theta, levels):
        d = self._angle_numerator(x, tau)
        best_phi, best_theta = phi, theta
        best = self._angle_obj_points(d, [phi], [theta])[0]
        v = self.b_az_grid_conj @ d @ self.b_el_grid_conj.T
        grid_obj = np.abs(v) ** 2 / self.den_grid
        i, j = np.unravel_index(int(np.argmax(grid_obj)), grid_obj.shape)
        if grid_obj[i, j] > best:
            best_phi, best_theta, best = self.phi_grid[i], self.theta_grid[j], grid_obj[i, j]
        s_az = np.deg2rad(self.cfg.angle_search.azimuth_step_deg)
        s_el = np.deg2rad(self.cfg.angle_search.elevation_step_deg)
        offsets = [(da, de) for da in (-1, 0, 1) for de in (-1, 0, 1) if da or de]
        for _ in range(levels):
            s_az /= 2.0
            s_el /= 2.0
            cand = [(best_phi + da * s_az, best_theta + de * s_el) for da, de in offsets]
            cand = [(np.mod(p, 2 * np.pi), t) for p, t in cand if 0.0 <= t <= np.pi]
            if not cand:
                continue
            cp, ct = map(np.array, zip(*cand))
            vals = self._angle_obj_points(d, cp, ct)
            k = int(np.argmax(vals))
            if vals[k] > best:
                best_phi, best_theta, best = cp[k], ct[k], vals[k]
        return float(best_phi), float(best_theta)

    # -- one path -----------------------------------------------------------

    def update(self, x, path, delay_levels, angle_levels):
        tau = self.delay_step(x, path.tau, path.phi, path.theta, delay_levels)
        phi, theta = self.angle_step(x, tau, path.phi, path.theta, angle_levels)
        alpha, term = self.fit(x, tau, phi, theta)
        return PathParams(alpha, tau, phi, theta), term

    def initial_path(self, x, rank=0):
        """Fit one path to ``x`` from scratch: delay-profile peak, then a
        full delay/angle update. ``rank`` picks the rank-th strongest peak."""
        p = self.pdp(x)
        order = np.argsort(-p, kind="stable")
        tau0 = float(self.tau_grid[order[min(rank, order.size - 1)]])
        seed = PathParams(0.0, tau0, 0.0, np.pi / 2)
        ds, an = self.cfg.delay_search, self.cfg.angle_search
        phi, theta = self.angle_step(x, tau0, seed.phi, seed.theta, an.refinement_levels)
        return self.update(x, PathParams(0.0, tau0, phi, theta),
                           ds.refinement_levels, an.refinement_levels)


def _check_inputs(h, pattern, cfg):
    if not isinstance(cfg, EstimatorConfig):
        raise ConfigError("cfg must be an EstimatorConfig")
    m, n = h.values.shape
    if m != pattern.num_ports:
        raise ValueError(f"channel has {m} ports, pattern has {pattern.num_ports}")
    if not 3 * cfg.num_paths < m * n:
        raise ConfigError(f"{cfg.num_paths} paths not identifiable from {m} x {n} samples", "num_paths")
    if not np.all(pattern.freqs.contains([h.freqs.start_hz, h.freqs.stop_hz])):
        raise OutOfRangeError("training band lies outside the pattern's calibration span")


def _run_once(prob, cfg, rng):
    h = prob.h
    ds, an = cfg.delay_search, cfg.angle_search
    total = _energy(h)
    paths, terms = [], []
    residual = h.copy()
    for _ in range(cfg.num_paths):
        if cfg.residual_stop_db is not None and _energy(residual) <= total * 10 ** (cfg.residual_stop_db / 10):
            break
        rank = int(rng.integers(0, 3)) if rng is not None else 0
        path, term = prob.initial_path(residual, rank)
        paths.append(path)
        terms.append(term)
        residual = residual - term

    trace = [_energy(residual)]
    converged = False
    cycles = 0
    for _ in range(cfg.max_cycles):
        cycles += 1
        for l in range(len(paths)):
            x = residual + terms[l]
            new_path, new_term = prob.update(x, paths[l], ds.refinement_levels, an.refinement_levels)
            new_residual = x - new_term
            # guard against round-off between objective evaluation routes
            if _energy(new_residual) <= _energy(residual):
                paths[l], terms[l], residual = new_path, new_term, new_residual
        trace.append(_energy(residual))
        prev, cur = trace[-2], trace[-1]
        if prev == 0.0 or (prev - cur) / prev < cfg.convergence_tol:
            converged = True
            break
    return paths, trace, converged, cycles


def estimate(h_train, pattern, cfg):
    """
    Estimate ``cfg.num_paths`` multipath components from a training band.

    Parameters
    ----------
    h_train : ChannelMatrix
        Training-band transfer function (ports x subcarriers).
    pattern : EadfPattern
        Array pattern the estimator assumes.
    cfg : EstimatorConfig

    Returns
    -------
    EstimationReport
        Paths in descending ``|alpha|`` order plus the residual power after
        initialization and after every SAGE cycle.
    """
    _check_inputs(h_train, pattern, cfg)
    if not np.any(h_train.values):
        zero = PathSet(tuple(PathParams(0.0, 0.0, 0.0, np.pi / 2) for _ in range(cfg.num_paths)))
        return EstimationReport(zero, (0.0,), True, 0)

    prob = _Problem(h_train, pattern, cfg)
    best = None
    for r in range(cfg.restarts):
        rng = None if r == 0 else np.random.default_rng([cfg.seed, r])
        run = _run_once(prob, cfg, rng)
        if best is None or run[1][-1] < best[1][-1]:
            best = run
    paths, trace, converged, cycles = best
    return EstimationReport(PathSet(tuple(paths)).canonical(), tuple(trace), converged, cycles)


# ---------------------------------------------------------------------------
# Brute-force reference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleGrids:
    """Candidate grids for :func:`single_path_ml_oracle` (radians / seconds)."""

    tau: np.ndarray
    phi: np.ndarray
    theta: np.ndarray

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.delay_search.grid(), cfg.angle_search.azimuth_grid(),
                   cfg.angle_search.elevation_grid())

    @property
    def size(self):
        return len(self.tau) * len(self.phi) * len(self.theta)


MAX_ORACLE_CANDIDATES = 10 ** 6


def single_path_ml_oracle(h_train, pattern, grids, return_residual=False):
    """
    Exhaustive single-path maximum-likelihood fit over a (tau, phi, theta)
    grid, no refinement.

    For every candidate the path signature ``b = a(m, phi, theta, f) exp(-2j pi f tau)``
    is built from the pattern directly and scored by the residual
    ``||h||^2 - |<b, h>|^2 / ||b||^2``. Ties resolve to the lowest delay,
    then the lowest azimuth index, then the lowest elevation index.
    """
    if grids.size > MAX_ORACLE_CANDIDATES:
        raise ValueError(f"{grids.size} candidates exceed the oracle budget of {MAX_ORACLE_CANDIDATES}")
    h = h_train.values
    f = h_train.freqs.values
    taus = np.asarray(grids.tau, dtype=float)
    phis = np.asarray(grids.phi, dtype=float)
    thetas = np.asarray(grids.theta, dtype=float)
    phasors = np.exp(2j * np.pi * np.outer(taus, f))       # (T, N)
    # score[tau, phi, theta]
    score = np.empty((taus.size, phis.size, thetas.size))
    chunk = 16
    for i0 in range(0, phis.size, chunk):
        a_chunk = pattern.grid_response(phis[i0:i0 + chunk], thetas, f)   # (A, E, M, N)
        for j, a in enumerate(a_chunk):
            norm = np.einsum("emn,emn->e", a.conj(), a).real
            g = np.einsum("emn,mn->en", a.conj(), h)                     # (E, N)
            corr = phasors @ g.T                                          # (T, E)
            score[:, i0 + j, :] = np.abs(corr) ** 2 / norm[None, :]
    k = int(np.argmax(score))
    it, ip, ie = np.unravel_index(k, score.shape)
    tau, phi, theta = float(taus[it]), float(phis[ip]), float(thetas[ie])
    a = pattern.response(phi, theta, f)[0]
    b = a * np.exp(-2j * np.pi * f * tau)[None, :]
    alpha = complex(np.vdot(b, h) / _energy(b))
    path = PathParams(alpha, tau, phi, theta)
    if return_residual:
        return path, _energy(h - alpha * b)
    return path
