"""16-channel time-interleaved ADC: scheduling, capture, alignment, calibration.

Sixteen slices are organized as 4 groups of 4.  Each group samples on its
own phase-interpolator output (quadrature: nominal codes one quarter period
apart on the shared 5 GHz input clock); within a group the four slices
rotate, so slice s = 4*rotation + group owns every aggregate sample k with
k mod 16 == s and the union of all slices forms the 20 GS/s grid (50 ps
pitch).

Conversion arithmetic is cycle-local: the STDC wavefront is launched
``launch_lead`` before the discharge phase, so only the sampling instants
are absolute times.  Slice outputs pass through a fixed-depth double-flop
retime, which the aligner compensates exactly before interleaving.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ClockSpec, Duration, derive_seed, keyed_normal
from .errors import ConfigError, CoverageError, OverrangeError, UnderrangeError
from .pi import DelayChain, make_pi_chain, pi_output, trim_paths, zero_trim
from .stdc import (
    InverterChain,
    OffsetEstimate,
    adapt_offset,
    count_edges_batch,
    validate_chain_window,
)
from .stimulus import SineStimulus
from .v2t import PhaseTiming, gen_sampling_phases

N_SLICES = 16
N_GROUPS = 4
SLICES_PER_GROUP = 4
CODE_MIN, CODE_MAX = -127, 127
LUT_SIZE = 256
NOMINAL_PI_CODE_BASE = 32

_V_EPS = 1e-12


@dataclass(frozen=True)
class SystemDesign:
    """Static description of the converter; instances are drawn per seed."""

    aggregate_rate: float = 20e9
    vdd: float = 0.9
    v_threshold: float = 0.3
    full_scale: float = 0.45  # differential full scale: max |v_p - v_n|, volts
    d_offset: Duration = 100e-12
    stdc_unit_delay: Duration = 4e-12
    stdc_taps: int = 255
    launch_lead_taps: float = 0.25
    divided_ratio: int = 8
    tap_sigma_systematic: float = 0.0
    tap_sigma_random: float = 0.0
    slope_sigma: float = 0.0
    threshold_sigma: float = 0.0
    pi_unit_delay: Duration = 12.5e-12
    pi_taps: int = 32
    pi_tap_sigma: float = 0.0
    pi_skew_sigma_rel: float = 0.0  # in units of pi_unit_delay
    skew_injection: tuple = (0.0, 0.0, 0.0, 0.0)
    sampling_jitter: Duration = 0.0
    latencies: tuple = (2,) * N_SLICES
    timing: PhaseTiming = field(
        default_factory=lambda: PhaseTiming(track=50e-12, early=5e-12, late=5e-12)
    )

    def __post_init__(self):
        if self.aggregate_rate <= 0:
            raise ConfigError("aggregate_rate must be > 0")
        if len(self.skew_injection) != N_GROUPS:
            raise ConfigError(f"skew_injection needs {N_GROUPS} entries")
        if len(self.latencies) != N_SLICES:
            raise ConfigError(f"latencies needs {N_SLICES} entries")
        if any(l < 0 for l in self.latencies):
            raise ConfigError("latencies must be >= 0")
        if not (0 < self.v_threshold < self.vdd / 2):
            raise ConfigError("v_threshold must lie in (0, vdd/2)")
        if self.divided_ratio < 1:
            raise ConfigError("divided_ratio must be >= 1")

    @property
    def slice_rate(self) -> float:
        return self.aggregate_rate / N_SLICES

    @property
    def slice_period(self) -> Duration:
        return N_SLICES / self.aggregate_rate

    @property
    def pitch(self) -> Duration:
        return 1.0 / self.aggregate_rate

    @property
    def pi_clock_period(self) -> Duration:
        return N_GROUPS / self.aggregate_rate

    @property
    def discharge_slope(self) -> float:
        # Full-scale |dv| maps to CODE_MAX counts above the offset code.
        return self.full_scale / (CODE_MAX * self.stdc_unit_delay)

    @property
    def launch_lead(self) -> Duration:
        return self.launch_lead_taps * self.stdc_unit_delay

    @property
    def nominal_offset_code(self) -> int:
        return int(round(self.d_offset / self.stdc_unit_delay))

    @property
    def pi_step(self) -> Duration:
        return self.pi_clock_period / 256.0

    @property
    def max_pulse_width(self) -> Duration:
        return (self.vdd - self.v_threshold) / self.discharge_slope + self.d_offset


class AdcSystem:
    """Mismatch-instantiated converter: chains, V2T parameters, group PIs."""

    def __init__(self, design: SystemDesign, master_seed: int, trim_pis: bool = False):
        self.design = design
        self.master_seed = int(master_seed)

        d = design
        sys_dev = (
            keyed_normal(derive_seed(master_seed, "stdc.tap.systematic"), np.arange(d.stdc_taps))
            * d.tap_sigma_systematic
        )
        divided = ClockSpec(period=d.divided_ratio * d.slice_period)
        self.chains: list[InverterChain] = []
        for s in range(N_SLICES):
            rand_dev = (
                keyed_normal(derive_seed(master_seed, "stdc.tap.random", s), np.arange(d.stdc_taps))
                * d.tap_sigma_random
            )
            taps = d.stdc_unit_delay * (1.0 + sys_dev + rand_dev)
            taps = np.maximum(taps, 0.05 * d.stdc_unit_delay)
            self.chains.append(InverterChain(tap_delays=taps, divided_clock=divided))
        validate_chain_window(self.chains[0], d.max_pulse_width)

        idx = np.arange(2 * N_SLICES)
        slopes = d.discharge_slope * (
            1.0 + keyed_normal(derive_seed(master_seed, "v2t.slope"), idx) * d.slope_sigma
        )
        slopes = np.maximum(slopes, 0.05 * d.discharge_slope)
        thresholds = d.v_threshold * (
            1.0 + keyed_normal(derive_seed(master_seed, "v2t.threshold"), idx) * d.threshold_sigma
        )
        thresholds = np.maximum(thresholds, 0.05 * d.v_threshold)
        self.slope_p = slopes[0::2]
        self.slope_n = slopes[1::2]
        self.vth_p = thresholds[0::2]
        self.vth_n = thresholds[1::2]

        self.pi_clock = ClockSpec(period=d.pi_clock_period)
        self.pi_chains: list[DelayChain] = [
            make_pi_chain(
                d.pi_unit_delay,
                n_taps=d.pi_taps,
                tap_sigma_rel=d.pi_tap_sigma,
                skew_sigma=d.pi_skew_sigma_rel * d.pi_unit_delay,
                seed=derive_seed(master_seed, "pi.instance", g),
            )
            for g in range(N_GROUPS)
        ]
        if trim_pis:
            self.pi_trims = [trim_paths(c, self.pi_clock).trim for c in self.pi_chains]
        else:
            self.pi_trims = [zero_trim(c) for c in self.pi_chains]

    def nominal_pi_codes(self) -> np.ndarray:
        # quadrature sits at quarter-period code spacing; basing it at code
        # 32 (not 0) gives every group +/-32 codes of correction headroom
        return NOMINAL_PI_CODE_BASE + np.arange(N_GROUPS) * 64

    def group_phase_offset(self, group: int, code: int) -> float:
        """Group sampling-phase offset vs the ideal grid, for a PI code.

        Referenced so that a mismatch-free PI at its nominal code contributes
        exactly 0; quadrature then comes out as group * period/4 plus the
        code trim.
        """
        chain = self.pi_chains[group]
        raw = pi_output(int(code), chain, self.pi_clock, self.pi_trims[group], cycle=0)
        base = (
            self.pi_clock.phase0
            + self.design.pi_unit_delay
            + NOMINAL_PI_CODE_BASE * self.design.pi_step
        )
        return raw - base - group * (self.pi_clock_quarter())

    def pi_clock_quarter(self) -> float:
        return self.design.pi_clock_period / 4.0


def schedule_sampling(
    system: AdcSystem,
    pi_codes,
    n_cycles: int,
) -> np.ndarray:
    """Sampling instants, shape (16, n_cycles); slice s owns grid phase s.

    Group g's phase is its PI output (nominal quadrature code 64*g plus any
    correction), shifted by that group's injected skew; within a group the
    four slices rotate at the group rate.
    """
    d = system.design
    pi_codes = np.asarray(pi_codes, dtype=np.int64)
    if pi_codes.shape != (N_GROUPS,):
        raise ConfigError(f"pi_codes must have shape ({N_GROUPS},)")
    if np.any((pi_codes < 0) | (pi_codes > 255)):
        raise ConfigError("pi codes must lie in [0, 256)")
    instants = np.empty((N_SLICES, n_cycles), dtype=np.float64)
    cycles = np.arange(n_cycles) * d.slice_period
    for s in range(N_SLICES):
        group = s % N_GROUPS
        rotation = s // N_GROUPS
        base = (
            group * d.pi_clock_period / 4.0
            + system.group_phase_offset(group, int(pi_codes[group]))
            + rotation * d.pi_clock_period
            + d.skew_injection[group]
        )
        instants[s] = base + cycles
    if d.sampling_jitter > 0:
        for s in range(N_SLICES):
            seed = derive_seed(system.master_seed, "sampling.jitter", s)
            instants[s] += keyed_normal(seed, np.arange(n_cycles)) * d.sampling_jitter
    return instants


def slice_phase_sets(system: AdcSystem, instants_row: np.ndarray):
    """PhaseSets for one slice's sampling instants (phi1 = instant)."""
    timing = system.design.timing
    return [gen_sampling_phases(t - timing.track, timing) for t in instants_row]


@dataclass
class CaptureResult:
    """Per-slice streams of one capture (row index = slice)."""

    instants: np.ndarray  # (16, n) sampling instants
    raw: np.ndarray  # (16, n) unsigned counts
    sign: np.ndarray  # (16, n) folder sign bits
    codes: np.ndarray  # (16, n) signed codes after unfold
    corrected: np.ndarray  # (16, n) after LUT (== codes when no LUT)
    offset_codes: np.ndarray  # (16,)

    @property
    def n_samples(self) -> int:
        return int(self.instants.size)


def convert_pair_arrays(
    system: AdcSystem,
    s: int,
    v_p: np.ndarray,
    v_n: np.ndarray,
    offset_code: int,
    context: str = "",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized conversion of sampled voltage pairs on one slice."""
    d = system.design
    vth_p, vth_n = system.vth_p[s], system.vth_n[s]
    under = np.flatnonzero((v_p < vth_p - _V_EPS) | (v_n < vth_n - _V_EPS))
    if under.size:
        m = int(under[0])
        raise UnderrangeError(
            f"slice {s} {context}{m}: input below V2T threshold "
            f"(v_p={v_p[m]:.6f} V, v_n={v_n[m]:.6f} V)"
        )
    over = np.flatnonzero((v_p > d.vdd + _V_EPS) | (v_n > d.vdd + _V_EPS))
    if over.size:
        m = int(over[0])
        raise OverrangeError(
            f"slice {s} {context}{m}: input above supply "
            f"(v_p={v_p[m]:.6f} V, v_n={v_n[m]:.6f} V)"
        )
    # cycle-local edge times relative to the discharge phase
    t_inp = np.maximum(v_p - vth_p, 0.0) / system.slope_p[s]
    t_inn = np.maximum(v_n - vth_n, 0.0) / system.slope_n[s]
    sign = t_inp < t_inn
    width = np.abs(t_inp - t_inn) + d.d_offset
    start = np.minimum(t_inp, t_inn) + d.launch_lead
    raw = count_edges_batch(system.chains[s], start, width)
    magnitude = np.maximum(raw - int(offset_code), 0)
    code = np.where(sign, -magnitude, magnitude)
    return raw, sign, code


def convert_slice(
    system: AdcSystem,
    s: int,
    instants_row: np.ndarray,
    stimulus,
    offset_code: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized conversion of one slice's samples: (raw, sign, code)."""
    v_p, v_n = stimulus(instants_row)
    return convert_pair_arrays(system, s, v_p, v_n, offset_code, context="cycle ")


def slice_transfer(
    system: AdcSystem,
    s: int,
    dv: np.ndarray,
    common_mode: float,
    offset_code: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Static transfer sweep of one slice over differential inputs."""
    dv = np.asarray(dv, dtype=np.float64)
    v_p = common_mode + dv / 2.0
    v_n = common_mode - dv / 2.0
    return convert_pair_arrays(system, s, v_p, v_n, offset_code, context="point ")


def run_capture(
    system: AdcSystem,
    stimulus,
    n_samples: int,
    offset_codes=None,
    luts=None,
    pi_codes=None,
) -> CaptureResult:
    """Full-system capture of n_samples aggregate samples (multiple of 16)."""
    if n_samples % N_SLICES != 0 or n_samples <= 0:
        raise ConfigError(f"n_samples must be a positive multiple of {N_SLICES}")
    if offset_codes is None:
        offset_codes = np.full(N_SLICES, system.design.nominal_offset_code)
    offset_codes = np.asarray(offset_codes, dtype=np.int64)
    if pi_codes is None:
        pi_codes = system.nominal_pi_codes()
    n_cycles = n_samples // N_SLICES
    instants = schedule_sampling(system, pi_codes, n_cycles)
    raw = np.empty((N_SLICES, n_cycles), dtype=np.int64)
    sign = np.empty((N_SLICES, n_cycles), dtype=bool)
    codes = np.empty((N_SLICES, n_cycles), dtype=np.int64)
    for s in range(N_SLICES):
        raw[s], sign[s], codes[s] = convert_slice(
            system, s, instants[s], stimulus, int(offset_codes[s])
        )
    corrected = codes.copy()
    if luts is not None:
        for s in range(N_SLICES):
            corrected[s] = apply_lut(luts[s], codes[s])
    return CaptureResult(
        instants=instants,
        raw=raw,
        sign=sign,
        codes=codes,
        corrected=corrected,
        offset_codes=offset_codes,
    )


def adapt_offsets(
    system: AdcSystem,
    stimulus,
    window: int = 10_000,
    threshold: float = 0.001,
    pi_codes=None,
) -> tuple[np.ndarray, list[OffsetEstimate]]:
    """Background-adaptation warmup: per-slice offset codes from raw counts."""
    capture = run_capture(
        system, stimulus, window * N_SLICES, offset_codes=np.zeros(N_SLICES), pi_codes=pi_codes
    )
    estimates = [adapt_offset(capture.raw[s], window, threshold) for s in range(N_SLICES)]
    return np.array([e.offset_code for e in estimates], dtype=np.int64), estimates


@dataclass(frozen=True)
class AlignedStream:
    """Aggregate-rate stream, ordered by sampling instant."""

    codes: np.ndarray
    instants: np.ndarray
    slice_index: np.ndarray
    latencies: tuple

    def __post_init__(self):
        if not (self.codes.size == self.instants.size == self.slice_index.size):
            raise ValueError("aligned stream arrays must agree in length")


def retime_streams(streams: np.ndarray, latencies) -> list[np.ndarray]:
    """Model the double-flop output retime: prepend per-slice pipeline fill."""
    return [
        np.concatenate([np.zeros(int(lat), dtype=np.asarray(row).dtype), np.asarray(row)])
        for row, lat in zip(streams, latencies)
    ]


def align_outputs(streams, latencies, instants=None) -> AlignedStream:
    """Merge 16 retimed slice streams into one aggregate-rate stream.

    Latency differences are compensated exactly: entry m of slice s is read
    at stream index m + latency_s, and sample 16*m + s of the output comes
    from slice s, preserving sampling-instant order.
    """
    if len(streams) != N_SLICES or len(latencies) != N_SLICES:
        raise ValueError(f"expected {N_SLICES} streams and latencies")
    lengths = {len(st) - int(lat) for st, lat in zip(streams, latencies)}
    if len(lengths) != 1:
        raise ValueError(f"inconsistent compensated stream lengths: {sorted(lengths)}")
    n_cycles = lengths.pop()
    if n_cycles < 0:
        raise ValueError("streams shorter than their latency")
    compensated = np.stack(
        [np.asarray(st)[int(lat) : int(lat) + n_cycles] for st, lat in zip(streams, latencies)]
    )
    codes = compensated.T.reshape(-1)
    if instants is not None:
        out_instants = np.asarray(instants)[:, :n_cycles].T.reshape(-1)
    else:
        out_instants = np.arange(codes.size, dtype=np.float64)
    slice_index = np.tile(np.arange(N_SLICES), n_cycles)
    order = np.argsort(out_instants, kind="stable")
    return AlignedStream(
        codes=codes[order],
        instants=out_instants[order],
        slice_index=slice_index[order],
        latencies=tuple(int(l) for l in latencies),
    )


def aligned_capture(system: AdcSystem, capture: CaptureResult) -> AlignedStream:
    """Retime and align one capture's corrected codes."""
    lat = system.design.latencies
    return align_outputs(retime_streams(capture.corrected, lat), lat, capture.instants)


@dataclass(frozen=True)
class Lut:
    """Per-slice static-nonlinearity correction, indexed by code + 128."""

    mapping: np.ndarray

    def __post_init__(self):
        mapping = np.asarray(self.mapping, dtype=np.int64)
        object.__setattr__(self, "mapping", mapping)
        if mapping.shape != (LUT_SIZE,):
            raise ValueError(f"LUT mapping must have {LUT_SIZE} entries")
        if np.any(np.diff(mapping[1:]) < 0):
            raise ValueError("LUT mapping must be monotone non-decreasing")


def identity_lut() -> Lut:
    codes = np.arange(LUT_SIZE) - 128
    return Lut(mapping=np.clip(codes, CODE_MIN, CODE_MAX))


def apply_lut(lut: Lut, codes: np.ndarray) -> np.ndarray:
    # raw signed codes can exceed the 8-bit range when the offset estimate
    # is off; the SRAM address saturates to the end entries
    idx = np.clip(np.asarray(codes, dtype=np.int64) + 128, 0, LUT_SIZE - 1)
    return lut.mapping[idx]


def code_histogram(codes: np.ndarray) -> np.ndarray:
    """Counts per signed code over [-127, 127], length 255 (ends saturate)."""
    clipped = np.clip(np.asarray(codes).ravel(), CODE_MIN, CODE_MAX)
    return np.bincount(clipped - CODE_MIN, minlength=255)[:255]


def build_lut(
    histogram: np.ndarray,
    stimulus_kind: str,
    amplitude_code: float,
    min_hits: int = 100,
) -> Lut:
    """Code-density linearization of one slice.

    The corrected value for raw code c is the ideal code whose cumulative
    density matches c's observed cumulative density, with the stimulus
    density model (arcsine for a sine, uniform for a ramp) supplying the
    inverse CDF.  The capture must cover every reachable code with at least
    ``min_hits`` samples.
    """
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.shape != (255,):
        raise ValueError("histogram must have 255 per-code entries")
    total = hist.sum()
    if total <= 0:
        raise CoverageError(list(range(CODE_MIN, CODE_MAX + 1)), min_hits)
    nz = np.flatnonzero(hist)
    reachable = np.arange(nz[0], nz[-1] + 1)
    # interior bins at exactly zero are codes the slice cannot produce
    # (what the LUT corrects); only low-but-nonzero bins are undersampled
    short = reachable[(hist[reachable] > 0) & (hist[reachable] < min_hits)]
    if short.size:
        raise CoverageError((short + CODE_MIN).tolist(), min_hits)
    cum_mid = (np.cumsum(hist) - hist / 2.0) / total
    if stimulus_kind == "sine":
        level = -amplitude_code * np.cos(np.pi * cum_mid)
    elif stimulus_kind == "ramp":
        level = amplitude_code * (2.0 * cum_mid - 1.0)
    else:
        raise ValueError(f"unknown calibration stimulus {stimulus_kind!r}")
    corrected = np.clip(np.rint(level), CODE_MIN, CODE_MAX).astype(np.int64)
    corrected = np.maximum.accumulate(corrected)
    mapping = np.empty(LUT_SIZE, dtype=np.int64)
    mapping[1:] = corrected
    mapping[0] = corrected[0]
    return Lut(mapping=mapping)


def build_luts(
    capture: CaptureResult,
    stimulus_kind: str,
    amplitude_code: float,
    min_hits: int = 100,
) -> list[Lut]:
    return [
        build_lut(code_histogram(capture.codes[s]), stimulus_kind, amplitude_code, min_hits)
        for s in range(N_SLICES)
    ]


def calibrate_skew(
    system: AdcSystem,
    tone: SineStimulus,
    n_samples: int,
    offset_codes=None,
    pi_codes=None,
) -> np.ndarray:
    """Per-group PI code corrections canceling inter-group sampling skew.

    Each group's received tone phase is measured with a single-bin DFT at
    the (coherent) test frequency over that group's samples against nominal
    sample times; phase differences against the median group convert to time
    skews, which round to PI code steps.
    """
    from .metrics import coherent_bin

    d = system.design
    fs = d.aggregate_rate
    coherent_bin(tone.frequency, fs, n_samples)
    if tone.amplitude < d.full_scale / 2.0:
        raise ConfigError("skew calibration tone must be at least half scale")
    if pi_codes is None:
        pi_codes = system.nominal_pi_codes()
    capture = run_capture(
        system, tone, n_samples, offset_codes=offset_codes, pi_codes=pi_codes
    )
    aligned = aligned_capture(system, capture)
    n = aligned.codes.size
    k = np.arange(n)
    t_nominal = k / fs
    phasor = np.exp(-2j * np.pi * tone.frequency * t_nominal)
    z = np.empty(N_GROUPS, dtype=complex)
    for g in range(N_GROUPS):
        sel = (k % N_GROUPS) == g
        z[g] = np.sum(aligned.codes[sel] * phasor[sel])
    ref = z[0] / abs(z[0])
    tau = np.angle(z * np.conj(ref)) / (2.0 * np.pi * tone.frequency)
    tau = tau - np.median(tau)
    return -np.rint(tau / d.pi_step).astype(np.int64)


@dataclass
class CalibrationState:
    """Persisted calibration: offsets, LUTs, PI corrections (versioned)."""

    version: int
    config_hash: str
    master_seed: int
    offset_codes: np.ndarray
    luts: list[Lut] | None
    pi_corrections: np.ndarray | None

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "offset_codes": [int(c) for c in self.offset_codes],
            "luts": None
            if self.luts is None
            else [[int(v) for v in lut.mapping] for lut in self.luts],
            "pi_corrections": None
            if self.pi_corrections is None
            else [int(c) for c in self.pi_corrections],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CalibrationState":
        payload = json.loads(text)
        if payload.get("version") != 1:
            raise ConfigError(f"unsupported calibration version {payload.get('version')!r}")
        return cls(
            version=payload["version"],
            config_hash=payload["config_hash"],
            master_seed=payload["master_seed"],
            offset_codes=np.asarray(payload["offset_codes"], dtype=np.int64),
            luts=None
            if payload["luts"] is None
            else [Lut(mapping=np.asarray(m, dtype=np.int64)) for m in payload["luts"]],
            pi_corrections=None
            if payload["pi_corrections"] is None
            else np.asarray(payload["pi_corrections"], dtype=np.int64),
        )
