"""Measurement methodology: code-density linearity, coherent-FFT SNDR/ENOB,
asynchronous-sampling delay monitor, and energy-per-conversion figure of merit.

Spectral tests enforce strict coherence (odd bin count over a power-of-two
record) and use a rectangular window, trading generality for exactness:
every reported number is reproducible bit-for-bit and the quantization-noise
theory cross-checks hold without leakage corrections.

Linearity is endpoint-referenced: the integral nonlinearity is forced to
zero at both extreme codes, and that reference is stated in the report.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import ClockSpec
from .errors import CoherenceError, CorrelatedSamplerError, PreconditionError

ENOB_OFFSET_DB = 1.76
ENOB_SLOPE_DB = 6.02


@dataclass
class LinearityReport:
    """DNL/INL per code, in LSB, endpoint-referenced."""

    codes: np.ndarray  # code values the arrays are indexed by
    dnl: np.ndarray
    inl: np.ndarray
    dnl_max: float
    inl_max: float
    missing_codes: list
    stimulus: str
    reference: str = "endpoint"

    def rows(self):
        for c, d, i in zip(self.codes, self.dnl, self.inl):
            yield int(c), float(d), float(i)


@dataclass
class SpectrumReport:
    """Coherent-capture spectral metrics; spur list sorted by power."""

    sndr_db: float
    enob: float
    fundamental_bin: int
    spur_list: list  # (bin, dBc) pairs, descending power
    n_samples: int
    fs: float
    fin: float


def _check_counts(histogram: np.ndarray, minimum: int) -> None:
    total = int(histogram.sum())
    if total < minimum:
        raise PreconditionError(
            f"histogram holds {total} samples, need at least {minimum}"
        )


def code_density_linearity(histogram: np.ndarray, stimulus: str) -> LinearityReport:
    """DNL/INL from a code-density histogram of a ramp or sine capture.

    The two end bins absorb the (required) slight over-range of a sine and
    the clip mass of a ramp, so they carry no width information; DNL is
    computed over the interior codes.  For a sine the observed cumulative
    density is mapped through the arcsine law first, which removes the
    stimulus distribution without needing an amplitude estimate (it cancels
    in the width normalization).
    """
    hist = np.asarray(histogram, dtype=np.float64)
    if hist.ndim != 1 or hist.size < 8:
        raise ValueError("histogram must be a 1-D per-code array")
    if stimulus not in ("ramp", "sine"):
        raise ValueError(f"unknown stimulus {stimulus!r}")
    n_codes = hist.size
    _check_counts(hist, 100 * n_codes)
    total = hist.sum()
    if stimulus == "sine":
        if hist[0] == 0 or hist[-1] == 0:
            raise PreconditionError(
                "sine histogram must slightly over-range both ends "
                "(no mass in an extreme bin)"
            )
        cum = np.cumsum(hist) / total
        # transition level ahead of code c, in units of the (unknown) amplitude
        transitions = -np.cos(np.pi * cum[:-1])
        widths = np.diff(transitions)
    else:
        widths = hist[1:-1].copy()
    interior = np.arange(1, n_codes - 1)
    mean_width = widths.mean()
    if mean_width <= 0:
        raise PreconditionError("histogram has no interior mass")
    dnl = widths / mean_width - 1.0
    inl = np.cumsum(dnl)
    # endpoint reference: INL is exactly 0 at both extreme codes
    inl -= np.linspace(inl[0], inl[-1], inl.size)
    missing = (interior[hist[interior] == 0]).tolist()
    return LinearityReport(
        codes=interior,
        dnl=dnl,
        inl=inl,
        dnl_max=float(np.max(np.abs(dnl))),
        inl_max=float(np.max(np.abs(inl))),
        missing_codes=missing,
        stimulus=stimulus,
    )


def coherent_bin(fin: float, fs: float, n_samples: int) -> int:
    """Validate coherence and return the tone bin.

    Requires fin = J/n_samples * fs with J odd (hence coprime to the
    power-of-two record length); on failure the nearest coherent frequency
    is suggested in the error message.
    """
    if n_samples < 2**12 or n_samples & (n_samples - 1):
        raise CoherenceError(f"n_samples must be a power of two >= 4096, got {n_samples}")
    j_exact = fin * n_samples / fs
    j = int(round(j_exact))
    if j < 1 or j >= n_samples // 2 or j % 2 == 0 or abs(j_exact - j) > 1e-9 * max(j, 1):
        j_near = max(1, int(round(j_exact)) | 1)
        raise CoherenceError(
            f"fin={fin} Hz is not coherent with n={n_samples} at fs={fs} Hz "
            f"(J={j_exact:.6f} must be an odd integer); nearest coherent "
            f"fin = {j_near * fs / n_samples} Hz"
        )
    return j


def sndr_enob(
    codes: np.ndarray,
    fs: float,
    fin: float,
    spur_family: int = 16,
) -> SpectrumReport:
    """SNDR/ENOB of a coherent sine capture (rectangular window).

    SNDR is fundamental power over everything else except DC; ENOB follows
    the (SNDR - 1.76)/6.02 relation by construction.  The spur list reports
    the interleaving families: tones at multiples of fs/spur_family and
    their images around the fundamental.
    """
    x = np.asarray(codes, dtype=np.float64)
    n = x.size
    j = coherent_bin(fin, fs, n)
    spectrum = np.fft.rfft(x)
    power = np.abs(spectrum) ** 2
    # one-sided: interior bins carry both halves
    power[1:-1] *= 2.0
    signal = power[j]
    noise = power[1:].sum() - signal
    if noise <= 0:
        raise PreconditionError("capture has no noise power; degenerate input")
    sndr = 10.0 * np.log10(signal / noise)
    spur_bins = set()
    step = n // spur_family
    for k in range(1, spur_family):
        for b in ((k * step) % n, (j + k * step) % n, (-j + k * step) % n):
            b = min(b, n - b)  # fold to the one-sided range
            if 0 < b <= n // 2 and b != j:
                spur_bins.add(int(b))
    floor = signal * 1e-30  # -300 dBc floor for empty bins
    spurs = sorted(
        ((b, 10.0 * np.log10(max(power[b], floor) / signal)) for b in spur_bins),
        key=lambda item: item[1],
        reverse=True,
    )
    return SpectrumReport(
        sndr_db=float(sndr),
        enob=float((sndr - ENOB_OFFSET_DB) / ENOB_SLOPE_DB),
        fundamental_bin=j,
        spur_list=[(int(b), float(db)) for b, db in spurs],
        n_samples=n,
        fs=fs,
        fin=fin,
    )


def dominant_family_spur_db(report: SpectrumReport) -> float:
    """Largest interleaving-family spur, dBc."""
    if not report.spur_list:
        raise ValueError("report carries no spur list")
    return report.spur_list[0][1]


def ideal_quantizer_codes(
    n_samples: int,
    j_bin: int,
    full_scale_codes: int = 127,
    amplitude_rel: float = 1.0,
    phase: float = 0.0,
) -> np.ndarray:
    """Mid-tread ideal quantizer oracle for spectral cross-checks."""
    n = np.arange(n_samples)
    wave = amplitude_rel * full_scale_codes * np.sin(2 * np.pi * j_bin * n / n_samples + phase)
    return np.clip(np.rint(wave), -full_scale_codes, full_scale_codes).astype(np.int64)


def check_uncorrelated(sampler_period: float, clock_period: float) -> None:
    """Reject sampler periods commensurate with the monitored clock."""
    ratio = Fraction(sampler_period / clock_period).limit_denominator(10**6)
    err = abs(float(ratio) - sampler_period / clock_period)
    if ratio.denominator < 1000 and err < 1e-12:
        raise CorrelatedSamplerError(
            f"sampler/clock period ratio {ratio} is low-order rational; "
            "uncorrelated sampling needs a large-prime ratio"
        )


def uncorrelated_sampler(
    clock: ClockSpec,
    numerator: int = 100003,
    denominator: int = 99991,
    phase0: float = 0.0,
    seed: int = 0,
) -> ClockSpec:
    """Sampler clock with a large-prime period ratio to the monitored clock."""
    return ClockSpec(
        period=clock.period * numerator / denominator,
        phase0=phase0,
        jitter_sigma=0.0,
        seed=seed,
    )


def measure_edge_distance(
    phase_ref: float,
    phase: float,
    clock_period: float,
    sampler: ClockSpec,
    n_samples: int,
) -> float:
    """Folded edge distance by asynchronous sampling, in [0, period/2].

    Both signals are 50%-duty squares at the monitored clock rate with
    rising edges at their respective phases.  The mean of their sampled XOR
    is 2*w/period where w is the phase distance folded at half a period;
    the sign of a distance is not observable from level statistics alone,
    which is why the transfer measurement unwraps a swept sequence instead.
    """
    check_uncorrelated(sampler.period, clock_period)
    t = sampler.phase0 + np.arange(n_samples) * sampler.period
    if sampler.jitter_sigma > 0:
        from .core import keyed_normal

        t = t + keyed_normal(sampler.seed, np.arange(n_samples)) * sampler.jitter_sigma
    level_ref = np.mod(t - phase_ref, clock_period) < clock_period / 2.0
    level = np.mod(t - phase, clock_period) < clock_period / 2.0
    xor_fraction = np.mean(level_ref ^ level)
    return float(xor_fraction * clock_period / 2.0)


def unwrap_distances(
    folded: np.ndarray,
    clock_period: float,
    anchor: float,
    step_hint: float = 0.0,
) -> np.ndarray:
    """Reconstruct a smoothly swept phase sequence from folded distances.

    A folded distance w admits the phases {k*period +/- w}; each code picks
    the candidate closest to the prediction (previous estimate plus the
    nominal per-code step), starting from the design's nominal first phase.
    The prediction term is what keeps the reconstruction honest where the
    sweep crosses a fold point (w near 0 or period/2).  Valid while true
    adjacent steps stay below period/4, which a 256-step interpolator
    satisfies by an order of magnitude.
    """
    folded = np.asarray(folded, dtype=np.float64)
    out = np.empty(folded.size)
    prev = anchor - step_hint
    for i, w in enumerate(folded):
        predict = prev + step_hint
        base = np.floor(predict / clock_period) * clock_period
        candidates = base + np.array(
            [-clock_period + w, -w, w, clock_period - w, clock_period + w,
             2 * clock_period - w]
        )
        out[i] = candidates[np.argmin(np.abs(candidates - predict))]
        prev = out[i]
    return out


def measure_pi_transfer_uncorrelated(
    phases: np.ndarray,
    clock_period: float,
    sampler: ClockSpec,
    n_samples: int,
    anchor: float | None = None,
) -> np.ndarray:
    """Per-code phase estimates of a swept interpolator, via the monitor.

    Each code's output is measured against the input clock edge; the folded
    distances are unwrapped along the sweep starting from ``anchor`` (the
    nominal first-code phase; defaults to one sixteenth of the period, the
    nominal unit delay).  Differencing adjacent codes yields per-step delay
    estimates that converge to the true simulated steps as n_samples grows.
    """
    phases = np.asarray(phases, dtype=np.float64)
    if n_samples < 10**5:
        raise PreconditionError(
            f"transfer measurement needs >= 1e5 samples per code, got {n_samples}"
        )
    folded = np.empty(phases.size)
    for i, ph in enumerate(phases):
        folded[i] = measure_edge_distance(0.0, ph, clock_period, sampler, n_samples)
    if anchor is None:
        anchor = clock_period / 16.0
    step_hint = clock_period / 256.0 if phases.size > 1 else 0.0
    return unwrap_distances(folded, clock_period, anchor, step_hint)


def walden_fom(power: float, enob: float, rate: float) -> float:
    """Energy per conversion step: power / (2^enob * rate), joules."""
    if power <= 0 or rate <= 0:
        raise ValueError("power and rate must be > 0")
    return power / (2.0**enob * rate)
