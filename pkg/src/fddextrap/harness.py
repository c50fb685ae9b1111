"""
End-to-end extrapolation experiments.

A run takes a channel (from a scenario preset or a CHX1 file), removes the
RF back-to-back response, picks the training band, estimates paths with
one or more SAGE configurations, rebuilds the channel over the full grid
and scores it. Every number that ends up in a plot is written next to it.

Output layout::

    out_dir/config.json
    out_dir/h_chan.chx1            (+ .bin)
    out_dir/paths_true.json        (scenario runs only)
    out_dir/h_sage_L{n}.chx1       (+ .bin)
    out_dir/paths_L{n}.json        estimation report: paths + residual trace
    out_dir/metrics_L{n}.csv
    out_dir/summary.json
    out_dir/plots/mse.svg, plots/rbg.svg
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array_model import (CylindricalArraySpec, ElementSpec, default_calibration_grid,
                          eadf_from_pattern, make_synthetic_pattern, read_patx1)
from .channel_synth import (SCENARIO_KINDS, ImpairmentSpec, SphericalWavefront, add_awgn,
                            make_scenario, normalize_to_band, perturb_pattern, read_chx1,
                            synthesize_channel, write_chx1, write_pathset)
from .errors import ConfigError
from .grids import AngleGrid, BandSelection, FrequencyGrid
from .metrics import from_db, series_to_csv, sweep, to_db
from .preprocess import (DEFAULT_GRID, DEFAULT_TRAINING_BAND, B2bResponse, apply_b2b,
                         compensate_b2b, select_band, synthetic_b2b)
from .sage import EstimatorConfig, estimate

__all__ = [
    "ExperimentConfig",
    "ConfigResult",
    "ExperimentResult",
    "validate_config",
    "load_config",
    "build_pattern",
    "assumed_pattern",
    "prepare_channel",
    "run_experiment",
    "SUMMARY_OFFSETS_HZ",
]

log = logging.getLogger(__name__)

SUMMARY_OFFSETS_HZ = (40e6, 70e6, 165e6)

_DEFAULT_PATTERN = {
    "columns": 16,
    "rows": 4,
    "radius_m": None,
    "row_spacing_m": None,
    "az_beamwidth_deg": 50.0,
    "el_beamwidth_deg": 100.0,
    "isotropic": False,
    "floor_db": -40.0,
    "angle_step_deg": 5.0,
    "cal_step_hz": 5e6,
}

_IMPAIRMENT_KEYS = ("snr_db", "calib_phase_sigma_deg", "calib_gain_sigma_db",
                    "drift_correlation_hz", "spherical_source_distance_m", "plos")

_TOP_KEYS = ("scenario", "channel_file", "b2b_file", "pattern", "grid", "training",
             "estimators", "impairments", "simulate_b2b", "absolute", "output_dir", "seed")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; build with :func:`validate_config`."""

    scenario: str
    channel_file: str
    b2b_file: str
    pattern: dict
    grid: FrequencyGrid
    training: BandSelection
    estimators: tuple
    impairments: dict
    simulate_b2b: bool
    absolute: bool
    output_dir: str
    seed: int

    def to_json(self):
        pattern = dict(self.pattern)
        return {
            "scenario": self.scenario,
            "channel_file": self.channel_file,
            "b2b_file": self.b2b_file,
            "pattern": pattern,
            "grid": {"start_hz": self.grid.start_hz, "step_hz": self.grid.step_hz,
                     "count": self.grid.count},
            "training": {"start_index": self.training.start_index, "count": self.training.count},
            "estimators": [e.to_json() for e in self.estimators],
            "impairments": dict(self.impairments),
            "simulate_b2b": self.simulate_b2b,
            "absolute": self.absolute,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def _require(cond, msg, key):
    if not cond:
        raise ConfigError(msg, key)


def _number(doc, key, path, positive=False, allow_none=False):
    v = doc.get(key)
    if v is None and allow_none:
        return None
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v),
             "must be a finite number", path)
    if positive:
        _require(v > 0, "must be positive", path)
    return v


def _check_keys(doc, allowed, prefix):
    _require(isinstance(doc, dict), "must be an object", prefix or "<root>")
    for k in doc:
        if k not in allowed:
            raise ConfigError("unknown key", f"{prefix}.{k}" if prefix else k)


def validate_config(raw, check_files=True):
    """
    Parse and cross-check an experiment description, filling in defaults.

    An empty mapping yields the reference defaults: the ``outdoor_los`` preset
    on the 16 x 4 synthetic cylinder, 2801 subcarriers from 3.325 GHz at
    125 kHz, the first 281 subcarriers for training and L in {4, 20}.
    Unknown keys are rejected; errors carry the offending key path.
    """
    raw = {} if raw is None else copy.deepcopy(raw)
    _check_keys(raw, _TOP_KEYS, "")

    scenario = raw.get("scenario")
    channel_file = raw.get("channel_file")
    if scenario is None and channel_file is None:
        scenario = "outdoor_los"
    _require(not (scenario is not None and channel_file is not None),
             "give either a scenario or a channel file, not both", "scenario")
    if scenario is not None:
        _require(scenario in SCENARIO_KINDS, f"must be one of {list(SCENARIO_KINDS)}", "scenario")
    b2b_file = raw.get("b2b_file")
    if check_files:
        for key, p in (("channel_file", channel_file), ("b2b_file", b2b_file)):
            if p is not None:
                _require(isinstance(p, str) and Path(p).is_file(), f"file not found: {p}", key)

    pat = raw.get("pattern", {})
    _check_keys(pat, set(_DEFAULT_PATTERN) | {"file"}, "pattern")
    if "file" in pat:
        _require(len(pat) == 1, "a pattern file excludes synthetic pattern keys", "pattern")
        if check_files:
            _require(Path(pat["file"]).is_file(), f"file not found: {pat['file']}", "pattern.file")
        pattern = {"file": pat["file"]}
    else:
        pattern = dict(_DEFAULT_PATTERN)
        pattern.update(pat)
        for k in ("columns", "rows"):
            _require(isinstance(pattern[k], int) and pattern[k] >= 1, "must be a positive integer", f"pattern.{k}")
        for k in ("az_beamwidth_deg", "el_beamwidth_deg"):
            v = _number(pattern, k, f"pattern.{k}")
            _require(0 < v <= 180, "must lie in (0, 180]", f"pattern.{k}")
        _number(pattern, "angle_step_deg", "pattern.angle_step_deg", positive=True)
        _number(pattern, "cal_step_hz", "pattern.cal_step_hz", positive=True)
        _number(pattern, "radius_m", "pattern.radius_m", allow_none=True)
        _number(pattern, "row_spacing_m", "pattern.row_spacing_m", positive=True, allow_none=True)

    g = raw.get("grid", {})
    _check_keys(g, ("start_hz", "step_hz", "count"), "grid")
    start = _number({"v": g.get("start_hz", DEFAULT_GRID.start_hz)}, "v", "grid.start_hz")
    step = _number({"v": g.get("step_hz", DEFAULT_GRID.step_hz)}, "v", "grid.step_hz", positive=True)
    count = g.get("count", DEFAULT_GRID.count)
    _require(isinstance(count, int) and count >= 2, "must be an integer >= 2", "grid.count")
    grid = FrequencyGrid(start, step, count)

    t = raw.get("training", {})
    _check_keys(t, ("start_index", "count", "start_hz"), "training")
    _require(not ("start_index" in t and "start_hz" in t), "give start_index or start_hz, not both",
             "training.start_hz")
    if "start_hz" in t:
        s_hz = _number(t, "start_hz", "training.start_hz")
        start_index = (s_hz - grid.start_hz) / grid.step_hz
        _require(abs(start_index - round(start_index)) < 1e-6, "must sit on the frequency grid",
                 "training.start_hz")
        start_index = int(round(start_index))
    else:
        start_index = t.get("start_index", DEFAULT_TRAINING_BAND.start_index)
    _require(isinstance(start_index, int) and start_index >= 0, "must be a non-negative integer on the grid",
             "training.start_index")
    tcount = t.get("count", DEFAULT_TRAINING_BAND.count)
    _require(isinstance(tcount, int) and tcount >= 2, "must be an integer >= 2", "training.count")
    _require(start_index + tcount <= grid.count, "training band exceeds the frequency grid", "training")
    training = BandSelection(start_index, tcount)

    est_raw = raw.get("estimators", [{"num_paths": 4}, {"num_paths": 20}])
    _require(isinstance(est_raw, list) and len(est_raw) >= 1, "must be a non-empty list", "estimators")
    estimators = []
    for i, e in enumerate(est_raw):
        _require(isinstance(e, dict), "must be an object", f"estimators[{i}]")
        estimators.append(EstimatorConfig.from_json(e, key_path=f"estimators[{i}]"))

    imp = raw.get("impairments", {})
    _check_keys(imp, _IMPAIRMENT_KEYS, "impairments")
    for k in ("calib_phase_sigma_deg", "calib_gain_sigma_db"):
        if imp.get(k) is not None:
            _require(_number(imp, k, f"impairments.{k}") >= 0, "must be >= 0", f"impairments.{k}")
    for k in ("spherical_source_distance_m", "drift_correlation_hz"):
        _number(imp, k, f"impairments.{k}", positive=True, allow_none=True)
    if imp.get("snr_db") is not None:
        _number(imp, "snr_db", "impairments.snr_db")
    if "plos" in imp:
        _require(isinstance(imp["plos"], bool), "must be true or false", "impairments.plos")

    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and 0 <= seed < 2 ** 64,
             "must be an unsigned 64-bit integer", "seed")
    for k in ("simulate_b2b", "absolute"):
        if k in raw:
            _require(isinstance(raw[k], bool), "must be true or false", k)
    out = raw.get("output_dir", "out")
    _require(isinstance(out, str) and out, "must be a non-empty path", "output_dir")

    return ExperimentConfig(
        scenario=scenario, channel_file=channel_file, b2b_file=b2b_file, pattern=pattern,
        grid=grid, training=training, estimators=tuple(estimators), impairments=dict(imp),
        simulate_b2b=raw.get("simulate_b2b", True), absolute=raw.get("absolute", False),
        output_dir=out, seed=seed)


def load_config(path, check_files=True):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return validate_config(raw, check_files=check_files)


def geometry_from_config(pattern):
    p = pattern
    element = ElementSpec(p["az_beamwidth_deg"], p["el_beamwidth_deg"], p["isotropic"], p["floor_db"])
    kw = {}
    if p["row_spacing_m"] is not None:
        kw["row_spacing_m"] = p["row_spacing_m"]
    return CylindricalArraySpec(p["columns"], p["rows"], p["radius_m"], element=element, **kw)


def build_pattern(cfg):
    """True (unperturbed) EADF pattern and the geometry, if synthetic."""
    if "file" in cfg.pattern:
        return eadf_from_pattern(read_patx1(cfg.pattern["file"])), None
    geometry = geometry_from_config(cfg.pattern)
    cal = default_calibration_grid(cfg.pattern["cal_step_hz"])
    # calibration span must cover the experiment grid
    if cfg.grid.start_hz < cal.start_hz or cfg.grid.stop_hz > cal.stop_hz:
        lo = min(cfg.grid.start_hz, cal.start_hz)
        n = int(np.ceil((max(cfg.grid.stop_hz, cal.stop_hz) - lo) / cal.step_hz)) + 1
        cal = FrequencyGrid(lo, cal.step_hz, n)
    angles = AngleGrid.uniform(cfg.pattern["angle_step_deg"])
    return eadf_from_pattern(make_synthetic_pattern(geometry, angles, cal)), geometry


def resolved_impairments(cfg, preset=None):
    """Scenario preset impairments overridden by the config's entries."""
    base = preset if preset is not None else ImpairmentSpec(rng_seed=cfg.seed)
    imp = cfg.impairments
    mask = base.plos_mask
    if imp.get("plos") is False:
        mask = None
    return ImpairmentSpec(
        snr_db=imp.get("snr_db", base.snr_db),
        calib_phase_sigma_deg=imp.get("calib_phase_sigma_deg", base.calib_phase_sigma_deg),
        calib_gain_sigma_db=imp.get("calib_gain_sigma_db", base.calib_gain_sigma_db),
        plos_mask=mask,
        spherical_source_distance_m=imp.get("spherical_source_distance_m",
                                            base.spherical_source_distance_m),
        rng_seed=cfg.seed,
    )


@dataclass(frozen=True, eq=False)
class PreparedChannel:
    h_chan: object
    true_pattern: object
    est_pattern: object
    true_paths: object = None
    impairments: ImpairmentSpec = None
    h_meas: object = None
    b2b: object = None


def _seeds(seed):
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in ss.spawn(4)]


def prepare_channel(cfg, true_pattern=None, geometry=None):
    """Ground-truth ``H_chan`` and the pattern the estimator will assume."""
    if true_pattern is None:
        true_pattern, geometry = build_pattern(cfg)
    noise_seed, b2b_seed, _, _ = _seeds(cfg.seed)

    if cfg.channel_file is not None:
        h = read_chx1(cfg.channel_file)
        if h.freqs != cfg.grid:
            raise ConfigError(f"channel grid {h.freqs} differs from configured grid", "grid")
        b2b = None
        h_meas = None
        if cfg.b2b_file is not None:
            b2b = B2bResponse.from_channel(read_chx1(cfg.b2b_file))
            h_meas = h.with_values(h.values, role="measured")
            h = compensate_b2b(h_meas, b2b)
        imp = resolved_impairments(cfg)
        if not cfg.absolute:
            p = np.mean(np.abs(h.values[:, cfg.training.slice()]) ** 2)
            if p > 0:
                h = h.with_values(h.values / np.sqrt(p))
        paths = None
    else:
        paths, _, preset = make_scenario(cfg.scenario, cfg.seed, geometry)
        imp = resolved_impairments(cfg, preset)
        wavefront = None
        if imp.spherical_source_distance_m is not None:
            if geometry is None:
                raise ConfigError("spherical wavefronts need a synthetic array geometry",
                                  "impairments.spherical_source_distance_m")
            wavefront = SphericalWavefront(geometry.element_positions(), imp.spherical_source_distance_m)
        if not cfg.absolute:
            paths, _ = normalize_to_band(paths, true_pattern, cfg.grid, cfg.training,
                                         imp.plos_mask, wavefront)
        clean = synthesize_channel(paths, true_pattern, cfg.grid, imp.plos_mask, wavefront)
        noisy = add_awgn(clean, imp.snr_db, noise_seed)
        h_meas = b2b = None
        if cfg.simulate_b2b:
            b2b = synthetic_b2b(cfg.grid, b2b_seed)
            h_meas = apply_b2b(noisy, b2b)
            h = compensate_b2b(h_meas, b2b)
        else:
            h = noisy

    est_pattern = assumed_pattern(cfg, true_pattern, imp)
    return PreparedChannel(h, true_pattern, est_pattern, paths, imp, h_meas, b2b)


def assumed_pattern(cfg, true_pattern, imp=None):
    """The pattern the estimator believes in: the true one with calibration
    drift applied when the impairments ask for it."""
    if imp is None:
        preset = make_scenario(cfg.scenario, cfg.seed)[2] if cfg.scenario is not None else None
        imp = resolved_impairments(cfg, preset)
    if not imp.perturbs_calibration:
        return true_pattern
    drift_seed = _seeds(cfg.seed)[2]
    corr = cfg.impairments.get("drift_correlation_hz")
    kw = {} if corr is None else {"correlation_hz": corr}
    return perturb_pattern(true_pattern, imp.calib_phase_sigma_deg or 0.0,
                           imp.calib_gain_sigma_db or 0.0, drift_seed, **kw)


@dataclass(frozen=True, eq=False)
class ConfigResult:
    estimator: EstimatorConfig
    report: object
    series: object
    h_sage: object
    summary: dict


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    h_chan: object
    true_paths: object
    results: tuple

    def summaries(self):
        return [r.summary for r in self.results]


def summarize(series):
    """Headline numbers, all recomputable from the stored series."""
    off = series.offsets_hz()
    ext = {}
    for o in SUMMARY_OFFSETS_HZ:
        sel = (off > 0) & (off <= o + 1e-3)
        reach = off.max() >= o - series.freqs.step_hz
        ext[f"{o / 1e6:g}MHz"] = (float(to_db(np.mean(from_db(series.mse_db[sel]))))
                                  if reach and np.any(sel) else None)
    return {
        "mean_in_band_mse_db": series.mean_in_band_mse_db(),
        "mean_extrapolation_mse_db": ext,
        "max_rbg_db": float(np.max(series.rbg_db)),
    }


def _tags(estimators):
    tags, seen = [], {}
    for e in estimators:
        base = f"L{e.num_paths}"
        seen[base] = seen.get(base, 0) + 1
        tags.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return tags


def run_experiment(cfg, write=True):
    """
    Run every estimator configuration of ``cfg`` and score it.

    Parameters
    ----------
    cfg : ExperimentConfig
    write : bool
        Write artifacts under ``cfg.output_dir``.

    Returns
    -------
    ExperimentResult
    """
    prep = prepare_channel(cfg)
    h_chan = prep.h_chan
    h_train = select_band(h_chan, cfg.training)
    results = []
    for est_cfg in cfg.estimators:
        log.info("estimating L=%d", est_cfg.num_paths)
        report = estimate(h_train, prep.est_pattern, est_cfg)
        h_sage = synthesize_channel(report.paths, prep.est_pattern, cfg.grid, role="sage")
        series = sweep(h_chan, h_sage, cfg.training)
        results.append(ConfigResult(est_cfg, report, series, h_sage, summarize(series)))
    result = ExperimentResult(cfg, h_chan, prep.true_paths, tuple(results))
    if write:
        write_artifacts(result, cfg.output_dir)
    return result


def write_artifacts(result, out_dir):
    from .plots import emit_plots

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    (out / "config.json").write_text(json.dumps(cfg.to_json(), indent=1, sort_keys=True))
    write_chx1(result.h_chan, out / "h_chan.chx1")
    if result.true_paths is not None:
        write_pathset(result.true_paths, out / "paths_true.json")
    summary = {}
    for tag, r in zip(_tags(cfg.estimators), result.results):
        write_chx1(r.h_sage, out / f"h_sage_{tag}.chx1")
        (out / f"paths_{tag}.json").write_text(r.report.dumps())
        (out / f"metrics_{tag}.csv").write_text(series_to_csv(r.series))
        summary[tag] = r.summary
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    emit_plots(result, out / "plots")
