"""Named experiments: deterministic batch runs producing CSV/JSON artifacts.

Every output file embeds the config hash and the master seed, and nothing
time-dependent is ever written, so a rerun with the same config and seed is
byte-identical.  The calibrate experiment persists its state to a versioned
JSON file from which a later measurement run resumes bit-exactly.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import interleaver as il
from . import metrics as met
from . import pi as pimod
from .config import (
    RunConfig,
    build_design,
    build_stimulus,
    config_hash,
    stimulus_frequency,
)
from .core import ClockSpec, derive_seed
from .errors import ConfigError
from .stimulus import SineStimulus, adaptation_tone

EXPERIMENT_NAMES = (
    "slice-transfer",
    "adc-sine",
    "pi-sweep",
    "pi-trim",
    "montecarlo",
    "calibrate",
    "fom",
)


@dataclass
class ExperimentResult:
    name: str
    seed: int
    config_hash: str
    metrics: dict
    files: list


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, cfg_hash: str, seed: int, header, rows) -> None:
    buf = io.StringIO()
    buf.write(f"# config_hash={cfg_hash}\n# master_seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, cfg_hash: str, seed: int, payload: dict) -> None:
    body = {"config_hash": cfg_hash, "master_seed": seed}
    body.update(payload)
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    return value


def _build_pi_chain(cfg: RunConfig, seed: int) -> pimod.DelayChain:
    chain = pimod.make_pi_chain(
        cfg.pi.unit_delay,
        n_taps=cfg.pi.n_taps,
        tap_sigma_rel=cfg.pi.tap_sigma_rel,
        skew_sigma=cfg.pi.skew_sigma_rel * cfg.pi.unit_delay,
        seed=derive_seed(seed, "pi.instance", 0),
    )
    if cfg.pi.injected_skews:
        skews = chain.path_skews.copy()
        for path, amount in cfg.pi.injected_skews:
            skews[int(path) - 1] += float(amount) * cfg.pi.unit_delay
        chain = pimod.DelayChain(
            unit_delay=chain.unit_delay, tap_delays=chain.tap_delays, path_skews=skews
        )
    return chain


def _system(cfg: RunConfig, seed: int) -> il.AdcSystem:
    return il.AdcSystem(build_design(cfg), master_seed=seed, trim_pis=cfg.pi.trim_enabled)


def _warmup_tone(cfg: RunConfig) -> SineStimulus:
    template = build_stimulus(cfg)
    if not isinstance(template, SineStimulus):
        template = SineStimulus(
            frequency=1.0,
            amplitude=cfg.stimulus.amplitude,
            common_mode=cfg.stimulus.common_mode,
            phase=cfg.stimulus.phase,
        )
    return adaptation_tone(template, build_design(cfg).slice_rate)


def compute_calibration(cfg: RunConfig, seed: int, system: il.AdcSystem | None = None) -> il.CalibrationState:
    """Offset adaptation, LUT construction and skew correction per config."""
    if system is None:
        system = _system(cfg, seed)
    d = system.design
    cal = cfg.system.calibration
    warm = _warmup_tone(cfg)
    if cal.adapt_offsets:
        offsets, _ = il.adapt_offsets(
            system, warm, window=cfg.adc.adaptation.window,
            threshold=cfg.adc.adaptation.threshold,
        )
    else:
        offsets = np.full(il.N_SLICES, d.nominal_offset_code, dtype=np.int64)
    luts = None
    if cal.lut:
        amp = cfg.capture.linearity_amplitude or cfg.stimulus.amplitude
        lut_tone = SineStimulus(
            frequency=warm.frequency,
            amplitude=amp,
            common_mode=cfg.stimulus.common_mode,
            phase=cfg.stimulus.phase,
        )
        capture = il.run_capture(
            system, lut_tone, cal.lut_capture_samples, offset_codes=offsets
        )
        amplitude_code = amp / (d.full_scale / il.CODE_MAX)
        luts = il.build_luts(capture, "sine", amplitude_code, cal.lut_min_hits)
    corrections = None
    if cal.skew:
        n_skew = cal.skew_capture_samples
        fs = d.aggregate_rate
        j = int(round(stimulus_frequency(cfg) * n_skew / fs))
        if j % 2 == 0:
            j += 1
        skew_tone = SineStimulus(
            frequency=j * fs / n_skew,
            amplitude=cfg.stimulus.amplitude,
            common_mode=cfg.stimulus.common_mode,
            phase=cfg.stimulus.phase,
        )
        corrections = il.calibrate_skew(
            system, skew_tone, n_skew, offset_codes=offsets
        )
    return il.CalibrationState(
        version=1,
        config_hash=config_hash(cfg),
        master_seed=seed,
        offset_codes=offsets,
        luts=luts,
        pi_corrections=corrections,
    )


def _applied_pi_codes(system: il.AdcSystem, state: il.CalibrationState) -> np.ndarray:
    codes = system.nominal_pi_codes()
    if state.pi_corrections is not None:
        codes = np.clip(codes + state.pi_corrections, 0, 255)
    return codes


def run_slice_transfer(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    system = _system(cfg, seed)
    d = system.design
    h = config_hash(cfg)
    state = compute_calibration(cfg, seed, system)
    offset = int(state.offset_codes[0])
    span = cfg.sweep.span_rel * d.full_scale
    dv = np.linspace(-span, span, cfg.sweep.points)
    cm = cfg.stimulus.common_mode
    raw, sign, code = il.slice_transfer(system, 0, dv, cm, offset)
    delta_t = dv / d.discharge_slope
    monotone = bool(np.all(np.diff(code) >= 0))
    metrics = {
        "offset_code": offset,
        "monotone": monotone,
        "lsb_volts": d.full_scale / il.CODE_MAX,
        "code_min": int(code.min()),
        "code_max": int(code.max()),
    }
    files = []
    if out is not None:
        p = out / "slice_transfer.csv"
        _write_csv(
            p, h, seed,
            ["delta_t_seconds", "raw_count", "signed_code"],
            zip(delta_t, raw, code),
        )
        pj = out / "slice_transfer.json"
        _write_json(pj, h, seed, {"experiment": "slice-transfer", "metrics": _jsonable(metrics)})
        files = [str(p), str(pj)]
    return ExperimentResult("slice-transfer", seed, h, metrics, files)


def run_pi_sweep(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    h = config_hash(cfg)
    chain = _build_pi_chain(cfg, seed)
    clock = ClockSpec(period=build_design(cfg).pi_clock_period)
    trim = None
    if cfg.pi.trim_enabled:
        trim = pimod.trim_paths(chain, clock, cfg.pi.trim_max_iters).trim
    phases = pimod.pi_sweep(chain, clock, trim)
    steps = np.empty(256)
    steps[:-1] = np.diff(phases)
    steps[-1] = phases[0] + clock.period - phases[255]
    _, q = pimod.ring_positions(chain, clock, trim)
    firing = set(pimod.inverted_segments(chain, clock, trim))
    flags = np.zeros(256, dtype=bool)
    for code in range(256):
        sel = pimod.encode(code, q)
        flags[code] = pimod.segment_endpoints(sel) in firing
    metrics = {
        "n_delays_per_cycle": q.n_delays_per_cycle,
        "mean_step_seconds": float(steps.mean()),
        "min_step_seconds": float(steps.min()),
        "max_step_seconds": float(steps.max()),
        "nominal_step_seconds": clock.period / 256.0,
        "monotone": bool(np.all(steps > 0)),
        "inversions": int(flags.sum()),
    }
    files = []
    if out is not None:
        p = out / "pi_sweep.csv"
        _write_csv(
            p, h, seed,
            ["code", "phase_seconds", "step_seconds", "inversion_flag"],
            zip(range(256), phases, steps, flags),
        )
        pj = out / "pi_sweep.json"
        _write_json(pj, h, seed, {"experiment": "pi-sweep", "metrics": _jsonable(metrics)})
        files = [str(p), str(pj)]
    return ExperimentResult("pi-sweep", seed, h, metrics, files)


def run_pi_trim(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    h = config_hash(cfg)
    chain = _build_pi_chain(cfg, seed)
    clock = ClockSpec(period=build_design(cfg).pi_clock_period)
    pre_sweep = pimod.pi_sweep(chain, clock)
    result = pimod.trim_paths(chain, clock, cfg.pi.trim_max_iters)
    post_sweep = pimod.pi_sweep(chain, clock, result.trim)
    metrics = {
        "iterations": result.iterations,
        "initial_inversions": result.initial_inversions,
        "pre_trim_monotone": bool(np.all(np.diff(pre_sweep) > 0)),
        "post_trim_monotone": bool(np.all(np.diff(post_sweep) > 0)),
        "max_trim_seconds": float(np.max(np.abs(result.trim.adjustments))),
    }
    files = []
    if out is not None:
        p = out / "pi_trim.json"
        _write_json(
            p, h, seed,
            {
                "experiment": "pi-trim",
                "metrics": _jsonable(metrics),
                "trims_seconds": _jsonable(result.trim.adjustments),
            },
        )
        pc = out / "pi_trim_sweep.csv"
        steps = np.empty(256)
        steps[:-1] = np.diff(post_sweep)
        steps[-1] = post_sweep[0] + clock.period - post_sweep[255]
        _write_csv(
            pc, h, seed,
            ["code", "phase_seconds", "step_seconds", "inversion_flag"],
            zip(range(256), post_sweep, steps, np.zeros(256, dtype=bool)),
        )
        files = [str(p), str(pc)]
    return ExperimentResult("pi-trim", seed, h, metrics, files)


def run_calibrate(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    h = config_hash(cfg)
    state = compute_calibration(cfg, seed)
    metrics = {
        "offset_codes": state.offset_codes.tolist(),
        "has_luts": state.luts is not None,
        "pi_corrections": None
        if state.pi_corrections is None
        else state.pi_corrections.tolist(),
    }
    files = []
    if out is not None:
        p = out / "calibration.json"
        p.write_text(state.to_json(), encoding="utf-8")
        files = [str(p)]
    return ExperimentResult("calibrate", seed, h, metrics, files)


def run_adc_sine(
    cfg: RunConfig,
    seed: int,
    out: Path | None,
    calibration: il.CalibrationState | None = None,
) -> ExperimentResult:
    system = _system(cfg, seed)
    d = system.design
    h = config_hash(cfg)
    if calibration is None:
        calibration = compute_calibration(cfg, seed, system)
    elif calibration.config_hash != h or calibration.master_seed != seed:
        raise ConfigError(
            "calibration file does not match this config/seed "
            f"(file: {calibration.config_hash}/{calibration.master_seed}, "
            f"run: {h}/{seed})"
        )
    tone = build_stimulus(cfg)
    if not isinstance(tone, SineStimulus):
        raise ConfigError("adc-sine needs a sine stimulus")
    fs = d.aggregate_rate
    n = cfg.capture.n_samples
    pi_codes = _applied_pi_codes(system, calibration)
    capture = il.run_capture(
        system, tone, n,
        offset_codes=calibration.offset_codes,
        luts=calibration.luts,
        pi_codes=pi_codes,
    )
    aligned = il.aligned_capture(system, capture)
    report = met.sndr_enob(aligned.codes, fs, tone.frequency)
    metrics = {
        "sndr_db": report.sndr_db,
        "enob": report.enob,
        "fundamental_bin": report.fundamental_bin,
        "dominant_family_spur_dbc": met.dominant_family_spur_db(report),
    }
    lin = None
    if cfg.capture.linearity:
        amp = cfg.capture.linearity_amplitude or tone.amplitude
        lin_tone = SineStimulus(
            frequency=_warmup_tone(cfg).frequency,
            amplitude=amp,
            common_mode=tone.common_mode,
            phase=tone.phase,
        )
        lin_capture = il.run_capture(
            system, lin_tone, cfg.capture.linearity_samples,
            offset_codes=calibration.offset_codes,
            luts=calibration.luts,
            pi_codes=pi_codes,
        )
        hist = il.code_histogram(il.aligned_capture(system, lin_capture).codes)
        lin = met.code_density_linearity(hist, "sine")
        metrics["dnl_max"] = lin.dnl_max
        metrics["inl_max"] = lin.inl_max
        metrics["missing_codes"] = len(lin.missing_codes)
    files = []
    if out is not None:
        pj = out / "adc_sine.json"
        payload = {
            "experiment": "adc-sine",
            "metrics": _jsonable(metrics),
            "spur_list": _jsonable(report.spur_list),
            "offset_codes": _jsonable(calibration.offset_codes),
            "pi_codes": _jsonable(pi_codes),
            "fin_hz": tone.frequency,
            "fs_hz": fs,
        }
        _write_json(pj, h, seed, payload)
        files.append(str(pj))
        pc = out / "capture.csv"
        n_cycles = capture.raw.shape[1]
        k = np.arange(n)
        sl = k % il.N_SLICES
        m = k // il.N_SLICES
        _write_csv(
            pc, h, seed,
            ["sample_index", "slice", "instant_seconds", "raw_count", "signed_code", "corrected_code"],
            zip(
                k,
                sl,
                capture.instants[sl, m],
                capture.raw[sl, m],
                capture.codes[sl, m],
                capture.corrected[sl, m],
            ),
        )
        files.append(str(pc))
        if lin is not None:
            pl = out / "linearity.csv"
            _write_csv(
                pl, h, seed,
                ["code", "dnl_lsb", "inl_lsb"],
                lin.rows(),
            )
            plj = out / "linearity.json"
            _write_json(
                plj, h, seed,
                {
                    "experiment": "adc-sine/linearity",
                    "dnl_max": lin.dnl_max,
                    "inl_max": lin.inl_max,
                    "missing_codes": _jsonable(lin.missing_codes),
                    "reference": lin.reference,
                    "dnl": _jsonable(lin.dnl),
                    "inl": _jsonable(lin.inl),
                },
            )
            files.extend([str(pl), str(plj)])
    return ExperimentResult("adc-sine", seed, h, metrics, files)


def run_fom(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    h = config_hash(cfg)
    if not cfg.fom.entries:
        raise ConfigError("fom experiment needs fom.entries in the config")
    rows = []
    metrics = {}
    for entry in cfg.fom.entries:
        value = met.walden_fom(entry.power, entry.enob, entry.rate)
        rows.append((entry.label, entry.power, entry.enob, entry.rate, value, value * 1e12))
        metrics[f"fom_pj_{entry.label}"] = value * 1e12
    files = []
    if out is not None:
        p = out / "fom.csv"
        _write_csv(
            p, h, seed,
            ["label", "power_watts", "enob", "rate_sps", "fom_joules", "fom_pj_per_step"],
            rows,
        )
        pj = out / "fom.json"
        _write_json(pj, h, seed, {"experiment": "fom", "metrics": _jsonable(metrics)})
        files = [str(p), str(pj)]
    return ExperimentResult("fom", seed, h, metrics, files)


def _mc_trial(args) -> tuple[int, dict]:
    cfg, name, seed = args
    result = _DISPATCH[name](cfg, seed, None)
    return seed, result.metrics


def run_montecarlo(cfg: RunConfig, seed: int, out: Path | None) -> ExperimentResult:
    h = config_hash(cfg)
    name = cfg.montecarlo.experiment
    if name not in _DISPATCH or name == "montecarlo":
        raise ConfigError(f"montecarlo cannot wrap experiment {name!r}")
    seeds = [seed + i for i in range(cfg.montecarlo.trials)]
    jobs = [(cfg, name, s) for s in seeds]
    if cfg.montecarlo.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.montecarlo.workers) as pool:
            results = list(pool.map(_mc_trial, jobs))
    else:
        results = [_mc_trial(job) for job in jobs]
    results.sort(key=lambda item: item[0])
    numeric_keys = [
        k
        for k, v in results[0][1].items()
        if isinstance(v, (int, float, np.integer, np.floating))
        and not isinstance(v, bool)
    ]
    summary = {}
    for key in numeric_keys:
        values = np.array([m[key] for _, m in results], dtype=np.float64)
        summary[key] = {
            f"p{pct:g}": float(np.percentile(values, pct))
            for pct in cfg.montecarlo.percentiles
        }
        summary[key]["mean"] = float(values.mean())
    metrics = {"trials": len(seeds), "experiment": name}
    for key in numeric_keys:
        metrics[f"{key}_median"] = float(
            np.median([m[key] for _, m in results])
        )
    files = []
    if out is not None:
        p = out / "montecarlo.csv"
        header = ["seed"] + numeric_keys
        rows = [[s] + [m[k] for k in numeric_keys] for s, m in results]
        _write_csv(p, h, seed, header, rows)
        pj = out / "montecarlo.json"
        _write_json(
            pj, h, seed,
            {
                "experiment": "montecarlo",
                "wrapped": name,
                "trials": len(seeds),
                "percentiles": _jsonable(summary),
                "metrics": _jsonable(metrics),
            },
        )
        files = [str(p), str(pj)]
    return ExperimentResult("montecarlo", seed, h, metrics, files)


_DISPATCH = {
    "slice-transfer": run_slice_transfer,
    "adc-sine": run_adc_sine,
    "pi-sweep": run_pi_sweep,
    "pi-trim": run_pi_trim,
    "calibrate": run_calibrate,
    "fom": run_fom,
    "montecarlo": run_montecarlo,
}


def run_experiment(
    name: str,
    cfg: RunConfig,
    out_dir=None,
    seed: int | None = None,
    calibration_path=None,
) -> ExperimentResult:
    """Run one named experiment; artifacts land in out_dir when given."""
    if name not in _DISPATCH:
        raise ConfigError(
            f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENT_NAMES)}"
        )
    run_seed = cfg.master_seed if seed is None else int(seed)
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
    if name == "adc-sine" and calibration_path is not None:
        state = il.CalibrationState.from_json(Path(calibration_path).read_text(encoding="utf-8"))
        return run_adc_sine(cfg, run_seed, out, calibration=state)
    return _DISPATCH[name](cfg, run_seed, out)
