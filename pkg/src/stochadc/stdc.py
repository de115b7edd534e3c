"""Stochastic time-to-digital converter.

A launch edge propagates through a chain of non-precise unit inverters,
producing one delayed edge per tap.  The converter quantizes a pulse by
counting how many tap edges fall inside it (adder tree over per-tap sampler
bits), then the unfold stage subtracts the offset code and reapplies the
folder's sign bit.  Linearity emerges statistically from the tap-delay
population rather than from matched delays, which is also why the offset
code must be estimated in the background from a histogram of raw counts.

Window convention is half-open [start, start + width): an edge exactly on
the closing boundary is not counted.  Comparisons carry a guard of
1e-6 x mean tap spacing so that edges landing on a boundary through exact
configuration arithmetic resolve deterministically despite float rounding;
the guard is far below any modeled physical scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ClockSpec, Duration, Instant, MismatchModel
from .v2t import PulseSample


@dataclass(frozen=True)
class InverterChain:
    """Per-instance inverter chain; tap i fires at launch + sum(delays[:i+1])."""

    tap_delays: np.ndarray
    divided_clock: ClockSpec | None = None
    edge_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        delays = np.asarray(self.tap_delays, dtype=np.float64)
        if delays.ndim != 1 or delays.size < 1:
            raise ValueError("tap_delays must be a non-empty 1-D array")
        if np.any(delays <= 0):
            raise ValueError("all tap delays must be > 0")
        object.__setattr__(self, "tap_delays", delays)
        object.__setattr__(self, "edge_offsets", np.cumsum(delays))
        if self.divided_clock is not None:
            span = float(self.edge_offsets[-1])
            if self.divided_clock.period <= span:
                raise ValueError(
                    "divided clock period must exceed the total chain spread "
                    f"({self.divided_clock.period} <= {span})"
                )

    @property
    def n_taps(self) -> int:
        return int(self.tap_delays.size)

    @property
    def total_delay(self) -> Duration:
        return float(self.edge_offsets[-1])

    @property
    def boundary_guard(self) -> float:
        return 1e-6 * float(np.mean(self.tap_delays))


def make_chain(
    unit_delay: Duration,
    n_taps: int = 255,
    sigma_rel: float = 0.0,
    seed: int = 0,
    divided_clock: ClockSpec | None = None,
) -> InverterChain:
    """Chain with per-tap gaussian mismatch around a nominal unit delay."""
    model = MismatchModel(nominal=unit_delay, sigma_rel=sigma_rel, seed=seed)
    return InverterChain(tap_delays=model.sample(n_taps), divided_clock=divided_clock)


def validate_chain_window(chain: InverterChain, max_pulse_width: Duration) -> None:
    """Check the one-counted-edge-per-tap condition for a given pulse bound."""
    if chain.divided_clock is None:
        raise ValueError("chain has no divided clock to validate against")
    needed = max_pulse_width + chain.total_delay
    if chain.divided_clock.period <= needed:
        raise ValueError(
            "divided clock period must exceed max pulse width + chain spread "
            f"({chain.divided_clock.period} <= {needed})"
        )


def tap_edge_times(chain: InverterChain, launch_edge: Instant) -> np.ndarray:
    """Edge time per tap (ordered by tap index, strictly increasing)."""
    return launch_edge + chain.edge_offsets


def count_edges_in_pulse(
    pulse: PulseSample,
    pulse_start: Instant,
    edges: np.ndarray,
    guard: float | None = None,
) -> tuple[int, np.ndarray]:
    """Raw count and the per-tap sampler bits for one pulse window."""
    edges = np.asarray(edges, dtype=np.float64)
    if guard is None:
        if edges.size > 1:
            guard = 1e-6 * float(edges[-1] - edges[0]) / (edges.size - 1)
        else:
            guard = 0.0
    lo = pulse_start - guard
    hi = pulse_start + pulse.width - guard
    bits = (edges >= lo) & (edges < hi)
    return int(np.count_nonzero(bits)), bits


def adder_tree_depth(n_inputs: int) -> int:
    """Latency, in adder stages, of the balanced reduction tree."""
    depth = 0
    while n_inputs > 1:
        n_inputs = (n_inputs + 1) // 2
        depth += 1
    return depth


def adder_tree_sum(bits, expected_length: int = 255) -> int:
    """Population count via a balanced binary reduction tree.

    Modeled structurally (pairwise partial sums per stage) so the depth the
    hardware would need is the one actually exercised; equals the naive sum.
    """
    arr = np.asarray(bits)
    if arr.ndim != 1 or arr.size != expected_length:
        raise ValueError(
            f"adder tree expects {expected_length} inputs, got {arr.shape}"
        )
    level = arr.astype(np.int64)
    while level.size > 1:
        half = level.size // 2
        merged = level[: 2 * half : 2] + level[1 : 2 * half : 2]
        if level.size % 2:
            merged = np.concatenate([merged, level[-1:]])
        level = merged
    return int(level[0])


@dataclass(frozen=True)
class OffsetEstimate:
    """Offset code plus the histogram evidence it was derived from."""

    offset_code: int
    histogram: np.ndarray
    window: int

    def __post_init__(self):
        hist = np.asarray(self.histogram, dtype=np.int64)
        object.__setattr__(self, "histogram", hist)
        if self.offset_code < 0:
            raise ValueError("offset_code must be >= 0")
        if int(hist.sum()) != self.window:
            raise ValueError("histogram total must equal the window size")


@dataclass(frozen=True)
class AdcCode:
    """Signed output code of one conversion plus the raw unsigned count."""

    code: int
    raw: int


def adapt_offset(
    raw_stream,
    window: int = 10_000,
    threshold: float = 0.001,
) -> OffsetEstimate:
    """Estimate the offset code from a histogram of recent raw counts.

    The estimate is a robust minimum: the smallest raw code whose cumulative
    frequency (from zero) reaches ``threshold`` of the histogram window.
    Runs on raw counts; a zero-mean input makes the true minimum code the
    folder's offset width expressed in taps.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not (0 < threshold <= 1):
        raise ValueError("threshold must lie in (0, 1]")
    stream = np.asarray(raw_stream, dtype=np.int64)
    if stream.size == 0:
        raise ValueError("raw stream must be non-empty")
    if np.any(stream < 0):
        raise ValueError("raw counts must be >= 0")
    tail = stream[-window:]
    hist = np.bincount(tail)
    used = int(tail.size)
    cumulative = np.cumsum(hist)
    offset_code = int(np.argmax(cumulative >= threshold * used))
    return OffsetEstimate(offset_code=offset_code, histogram=hist, window=used)


def unfold(raw: int, offset, sign: bool) -> AdcCode:
    """Remove the offset code and reapply the sign.

    Raw counts below the offset estimate are offset-estimation error; they
    clamp to zero so the error is bounded at one LSB.
    """
    offset_code = offset.offset_code if isinstance(offset, OffsetEstimate) else int(offset)
    magnitude = max(int(raw) - offset_code, 0)
    return AdcCode(code=-magnitude if sign else magnitude, raw=int(raw))


def stdc_convert(
    pulse: PulseSample,
    pulse_start: Instant,
    chain: InverterChain,
    offset,
    launch_edge: Instant = 0.0,
) -> AdcCode:
    """Full conversion of one pulse: edges -> window count -> unfold.

    ``launch_edge`` is the divided-clock edge associated with this conversion
    cycle; pulse_start is expressed in the same time frame.
    """
    edges = tap_edge_times(chain, launch_edge)
    _, bits = count_edges_in_pulse(pulse, pulse_start, edges, guard=chain.boundary_guard)
    raw = adder_tree_sum(bits, chain.n_taps)
    return unfold(raw, offset, pulse.sign)


def count_edges_batch(
    chain: InverterChain,
    starts: np.ndarray,
    widths: np.ndarray,
) -> np.ndarray:
    """Vectorized raw counts for many launch-relative windows.

    Equivalent to count_edges_in_pulse per sample (same boundary guard);
    captures use this path, the single-shot composition is the oracle it is
    tested against.
    """
    starts = np.asarray(starts, dtype=np.float64)
    widths = np.asarray(widths, dtype=np.float64)
    guard = chain.boundary_guard
    offsets = chain.edge_offsets
    lo = np.searchsorted(offsets, starts - guard, side="left")
    hi = np.searchsorted(offsets, starts + widths - guard, side="left")
    return (hi - lo).astype(np.int64)
