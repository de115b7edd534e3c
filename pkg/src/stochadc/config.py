"""Run configuration: strict YAML schema, validation, hashing.

One human-editable YAML file describes an experiment end to end.  Parsing is
strict: unknown keys anywhere in the tree are rejected, cross-field
arithmetic (rates, coherence) is validated at load, and physically
meaningful values have no hidden defaults beyond the documented design
sizing.  Loading then re-serializing a config is idempotent.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .interleaver import N_GROUPS, N_SLICES, SystemDesign
from .stimulus import DCStimulus, RampStimulus, SineStimulus
from .v2t import PhaseTiming


def _build(cls, data: dict, path: str):
    """Construct a section dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        type_name = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        sub = _SECTION_TYPES.get(type_name)
        if sub is not None and isinstance(value, dict):
            kwargs[name] = _build(sub, value, f"{path}.{name}")
        elif isinstance(value, list):
            kwargs[name] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        elif isinstance(value, str) and type_name.startswith("float"):
            # YAML 1.1 parses exponent literals without a decimal point as
            # strings; accept them rather than failing on "100e-12"
            try:
                kwargs[name] = float(value)
            except ValueError as exc:
                raise ConfigError(f"{path}.{name}: expected a number, got {value!r}") from exc
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class AdaptationConfig:
    window: int = 10_000
    threshold: float = 0.001

    def __post_init__(self):
        if self.window < 1:
            raise ConfigError("adaptation window must be >= 1")
        if not (0 < self.threshold <= 1):
            raise ConfigError("adaptation threshold must lie in (0, 1]")


@dataclass(frozen=True)
class AdcConfig:
    vdd: float = 0.9
    v_threshold: float = 0.3
    full_scale: float = 0.45
    d_offset: float = 100e-12
    unit_delay: float = 4e-12
    n_taps: int = 255
    launch_lead_taps: float = 0.25
    divided_ratio: int = 8
    tap_sigma_systematic: float = 0.0
    tap_sigma_random: float = 0.0
    slope_sigma: float = 0.0
    threshold_sigma: float = 0.0
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)


@dataclass(frozen=True)
class PiConfig:
    unit_delay: float = 12.5e-12
    n_taps: int = 32
    tap_sigma_rel: float = 0.0
    skew_sigma_rel: float = 0.0
    trim_enabled: bool = False
    trim_max_iters: int = 64
    injected_skews: tuple = ()  # (path index 1-based, skew in unit delays) pairs


@dataclass(frozen=True)
class CalibrationConfig:
    adapt_offsets: bool = True
    lut: bool = False
    skew: bool = False
    lut_capture_samples: int = 1_048_576  # aggregate; 100-hit floor needs ~2^20
    lut_min_hits: int = 100
    skew_capture_samples: int = 4_096


@dataclass(frozen=True)
class SystemConfig:
    aggregate_rate: float = 20e9
    skew_injection: tuple = (0.0,) * N_GROUPS
    latencies: tuple = (2,) * N_SLICES
    sampling_jitter: float = 0.0
    front_end_bandwidth: float | None = None
    front_end_stages: int = 1
    track: float = 50e-12
    early: float = 5e-12
    late: float = 5e-12
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)


@dataclass(frozen=True)
class StimulusConfig:
    type: str = "sine"
    frequency: float | None = None
    coherent_bin: int | None = None
    amplitude: float = 0.45
    common_mode: float = 0.525
    phase: float = 0.0

    def __post_init__(self):
        if self.type not in ("sine", "ramp", "dc"):
            raise ConfigError(f"unknown stimulus type {self.type!r}")
        if self.coherent_bin is not None and self.coherent_bin % 2 == 0:
            raise ConfigError("coherent_bin must be odd")

    @property
    def specified(self) -> bool:
        return self.type != "sine" or self.frequency is not None or self.coherent_bin is not None


@dataclass(frozen=True)
class CaptureConfig:
    n_samples: int = 8_192
    linearity: bool = False
    linearity_samples: int = 65_536
    linearity_amplitude: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")


@dataclass(frozen=True)
class SweepConfig:
    points: int = 511
    span_rel: float = 1.0  # fraction of full scale swept on each side
    seeds: int = 1


@dataclass(frozen=True)
class MonteCarloConfig:
    trials: int = 20
    experiment: str = "adc-sine"
    workers: int = 1
    percentiles: tuple = (5.0, 50.0, 95.0)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("montecarlo trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("montecarlo workers must be >= 1")


@dataclass(frozen=True)
class FomEntry:
    label: str
    power: float
    enob: float
    rate: float


@dataclass(frozen=True)
class FomConfig:
    entries: tuple = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    formats: tuple = ("csv", "json")

    def __post_init__(self):
        bad = [f for f in self.formats if f not in ("csv", "json")]
        if bad:
            raise ConfigError(f"unknown output formats {bad}")


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    adc: AdcConfig = field(default_factory=AdcConfig)
    pi: PiConfig = field(default_factory=PiConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    stimulus: StimulusConfig = field(default_factory=StimulusConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    montecarlo: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    fom: FomConfig = field(default_factory=FomConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_SECTION_TYPES = {
    "AdaptationConfig": AdaptationConfig,
    "AdcConfig": AdcConfig,
    "PiConfig": PiConfig,
    "CalibrationConfig": CalibrationConfig,
    "SystemConfig": SystemConfig,
    "StimulusConfig": StimulusConfig,
    "CaptureConfig": CaptureConfig,
    "SweepConfig": SweepConfig,
    "MonteCarloConfig": MonteCarloConfig,
    "FomConfig": FomConfig,
    "OutputConfig": OutputConfig,
}


def _validate(cfg: RunConfig) -> RunConfig:
    d = cfg.adc
    if not (0 < d.v_threshold < d.vdd / 2):
        raise ConfigError("adc.v_threshold must lie in (0, vdd/2)")
    if d.full_scale <= 0 or d.unit_delay <= 0 or d.d_offset <= 0:
        raise ConfigError("adc full_scale, unit_delay and d_offset must be > 0")
    if len(cfg.system.skew_injection) != N_GROUPS:
        raise ConfigError(f"system.skew_injection needs {N_GROUPS} entries")
    if len(cfg.system.latencies) != N_SLICES:
        raise ConfigError(f"system.latencies needs {N_SLICES} entries")
    st = cfg.stimulus
    if st.type == "sine" and st.specified:
        fs = cfg.system.aggregate_rate
        n = cfg.capture.n_samples
        fin = stimulus_frequency(cfg)
        j = fin * n / fs
        if abs(j - round(j)) > 1e-6 or int(round(j)) % 2 == 0 or not (
            1 <= round(j) < n / 2
        ):
            raise ConfigError(
                f"stimulus frequency {fin} is not coherent-odd with "
                f"capture n_samples={n} at fs={fs} (J={j:.6f})"
            )
        headroom = st.common_mode - st.amplitude / 2.0
        if headroom < cfg.adc.v_threshold:
            raise ConfigError(
                "stimulus swings below the V2T threshold; raise common_mode"
            )
        if st.common_mode + st.amplitude / 2.0 > cfg.adc.vdd:
            raise ConfigError("stimulus swings above the supply")
    for entry in cfg.fom.entries:
        if not isinstance(entry, FomEntry):
            raise ConfigError("fom.entries must be mappings")
    return cfg


def stimulus_frequency(cfg: RunConfig) -> float:
    st = cfg.stimulus
    if st.coherent_bin is not None:
        return st.coherent_bin * cfg.system.aggregate_rate / cfg.capture.n_samples
    if st.frequency is None:
        raise ConfigError("this experiment needs stimulus.frequency or stimulus.coherent_bin")
    return float(st.frequency)


def build_stimulus(cfg: RunConfig, n_samples: int | None = None):
    st = cfg.stimulus
    if st.type == "sine":
        return SineStimulus(
            frequency=stimulus_frequency(cfg),
            amplitude=st.amplitude,
            common_mode=st.common_mode,
            phase=st.phase,
            bandwidth=cfg.system.front_end_bandwidth,
            filter_stages=cfg.system.front_end_stages,
        )
    if st.type == "dc":
        return DCStimulus(dv=st.amplitude, common_mode=st.common_mode)
    n = n_samples if n_samples is not None else cfg.capture.n_samples
    duration = n / cfg.system.aggregate_rate
    return RampStimulus(span=st.amplitude, common_mode=st.common_mode, t0=0.0, t1=duration)


def build_design(cfg: RunConfig) -> SystemDesign:
    return SystemDesign(
        aggregate_rate=cfg.system.aggregate_rate,
        vdd=cfg.adc.vdd,
        v_threshold=cfg.adc.v_threshold,
        full_scale=cfg.adc.full_scale,
        d_offset=cfg.adc.d_offset,
        stdc_unit_delay=cfg.adc.unit_delay,
        stdc_taps=cfg.adc.n_taps,
        launch_lead_taps=cfg.adc.launch_lead_taps,
        divided_ratio=cfg.adc.divided_ratio,
        tap_sigma_systematic=cfg.adc.tap_sigma_systematic,
        tap_sigma_random=cfg.adc.tap_sigma_random,
        slope_sigma=cfg.adc.slope_sigma,
        threshold_sigma=cfg.adc.threshold_sigma,
        pi_unit_delay=cfg.pi.unit_delay,
        pi_taps=cfg.pi.n_taps,
        pi_tap_sigma=cfg.pi.tap_sigma_rel,
        pi_skew_sigma_rel=cfg.pi.skew_sigma_rel,
        skew_injection=tuple(cfg.system.skew_injection),
        sampling_jitter=cfg.system.sampling_jitter,
        latencies=tuple(cfg.system.latencies),
        timing=PhaseTiming(
            track=cfg.system.track, early=cfg.system.early, late=cfg.system.late
        ),
    )


def _fom_entries(raw) -> tuple:
    entries = []
    for item in raw:
        if isinstance(item, FomEntry):
            entries.append(item)
        elif isinstance(item, dict):
            entries.append(_build(FomEntry, item, "fom.entries[]"))
        else:
            raise ConfigError("fom.entries must be mappings")
    return tuple(entries)


def load_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    if "fom" in data and isinstance(data["fom"], dict) and "entries" in data["fom"]:
        data = dict(data)
        fom = dict(data["fom"])
        fom["entries"] = _fom_entries(fom["entries"] or ())
        data["fom"] = fom
        unknown = sorted(set(fom) - {"entries"})
        if unknown:
            raise ConfigError(f"fom: unknown keys {unknown}")
        data["fom"] = FomConfig(entries=fom["entries"])
    cfg = _build(RunConfig, data, "config")
    return _validate(cfg)


def config_to_dict(cfg) -> dict:
    if dataclasses.is_dataclass(cfg):
        return {
            f.name: config_to_dict(getattr(cfg, f.name)) for f in fields(cfg)
        }
    if isinstance(cfg, tuple):
        return [config_to_dict(v) for v in cfg]
    return cfg


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
