"""Synthesizable phase interpolator model.

A 32-tap delay chain spans roughly two input-clock periods.  Arbiters
quantize the period into N unit delays; the mixer at the clock boundary
replaces its tap's phase with the average of that tap edge and the next
clock edge, taps beyond the boundary alias into the next cycle, and the
result is a ring of N+1 phase positions covering exactly one period.  The
encoder walks 16 logical segments of that ring leapfrog-style (odd and even
tap selects alternate, adjacent segments share one endpoint) and a 16-step
blender interpolates inside the selected segment, giving period/256 nominal
resolution.

Routing skew between a chain node and the blender can exceed the unit delay
after automated place-and-route, which breaks monotonicity; an arbiter at
the blender input detects the resulting order contradiction and the
offending paths are trimmed in fixed steps until no contradiction remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ClockSpec,
    Duration,
    Instant,
    MismatchModel,
    clock_edge_at,
    derive_seed,
    keyed_normal,
)
from .errors import ChainUnderspanError, TrimConvergenceError

PI_CODES = 256
BLEND_STEPS = 16

ODD_TO_EVEN = "odd_to_even"
EVEN_TO_ODD = "even_to_odd"

# Relative guard for arbiter comparisons against the clock period, so a
# mismatch-free chain whose accumulated delay lands exactly on the period
# quantizes deterministically despite cumsum rounding.
_ARB_TOL = 1e-9


@dataclass(frozen=True)
class DelayChain:
    """Delay chain plus per-tap routing skew toward the blender muxes."""

    unit_delay: Duration
    tap_delays: np.ndarray
    path_skews: np.ndarray
    accumulated: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        delays = np.asarray(self.tap_delays, dtype=np.float64)
        skews = np.asarray(self.path_skews, dtype=np.float64)
        if delays.ndim != 1 or delays.size < 2:
            raise ValueError("tap_delays must hold at least two taps")
        if skews.shape != delays.shape:
            raise ValueError("path_skews must match tap_delays in length")
        if np.any(delays <= 0):
            raise ValueError("all tap delays must be > 0")
        if self.unit_delay <= 0:
            raise ValueError("unit_delay must be > 0")
        object.__setattr__(self, "tap_delays", delays)
        object.__setattr__(self, "path_skews", skews)
        object.__setattr__(self, "accumulated", np.cumsum(delays))

    @property
    def n_taps(self) -> int:
        return int(self.tap_delays.size)


def make_pi_chain(
    unit_delay: Duration,
    n_taps: int = 32,
    tap_sigma_rel: float = 0.0,
    skew_sigma: Duration = 0.0,
    seed: int = 0,
) -> DelayChain:
    """Chain instance with gaussian tap mismatch and routing skews."""
    taps = MismatchModel(
        nominal=unit_delay, sigma_rel=tap_sigma_rel, seed=derive_seed(seed, "pi.tap")
    ).sample(n_taps)
    if skew_sigma > 0:
        skews = keyed_normal(derive_seed(seed, "pi.skew"), np.arange(n_taps)) * skew_sigma
    else:
        skews = np.zeros(n_taps)
    return DelayChain(unit_delay=unit_delay, tap_delays=taps, path_skews=skews)


@dataclass(frozen=True)
class PeriodQuantization:
    """Number of unit delays the arbiters find in one clock period."""

    n_delays_per_cycle: int
    boundary_tap: int

    def __post_init__(self):
        if self.n_delays_per_cycle < 1:
            raise ValueError("n_delays_per_cycle must be >= 1")


@dataclass(frozen=True)
class TrimState:
    """Signed per-path delay adjustments from post-fabrication correction."""

    adjustments: np.ndarray
    unit_delay: Duration

    def __post_init__(self):
        adj = np.asarray(self.adjustments, dtype=np.float64)
        object.__setattr__(self, "adjustments", adj)
        if np.any(np.abs(adj) >= self.unit_delay):
            raise ValueError("|trim| must stay below the unit delay")


def zero_trim(chain: DelayChain) -> TrimState:
    return TrimState(adjustments=np.zeros(chain.n_taps), unit_delay=chain.unit_delay)


@dataclass(frozen=True)
class EncoderSelect:
    """Mux selects and blender weight for one input code."""

    sel_odd: int
    sel_even: int
    blend_k: int
    direction: str


def propagate_chain(
    chain: DelayChain,
    clock_edge: Instant,
    trim: TrimState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Tap edge times (pre-skew) and blender-mux input times (post-skew)."""
    taps = clock_edge + chain.accumulated
    adjust = chain.path_skews if trim is None else chain.path_skews + trim.adjustments
    return taps, taps + adjust


def arbitrate_period(chain: DelayChain, clock: ClockSpec) -> PeriodQuantization:
    """Smallest tap whose accumulated (pre-skew) delay spans one period."""
    limit = clock.period * (1.0 - _ARB_TOL)
    if chain.accumulated[-1] < limit:
        raise ChainUnderspanError(
            f"chain spans {chain.accumulated[-1]:.4e} s, "
            f"shorter than the clock period {clock.period:.4e} s"
        )
    n = int(np.searchsorted(chain.accumulated, limit, side="left")) + 1
    return PeriodQuantization(n_delays_per_cycle=n, boundary_tap=n)


def apply_boundary_mixers(
    taps: np.ndarray,
    clock_edge_next: Instant,
    q: PeriodQuantization,
    period: Duration,
) -> np.ndarray:
    """Usable phase per tap, folded into one period.

    Taps before the boundary pass through, the boundary tap becomes the
    midpoint of (its own edge, next clock edge), taps beyond the boundary
    alias into the next cycle.  Indexed by tap; sort to view as a phase set.
    """
    taps = np.asarray(taps, dtype=np.float64)
    n = q.boundary_tap
    phases = taps.copy()
    phases[n - 1] = 0.5 * (taps[n - 1] + clock_edge_next)
    phases[n:] = taps[n:] - period
    return phases


def ring_positions(
    chain: DelayChain,
    clock: ClockSpec,
    trim: TrimState | None = None,
    cycle: int = 0,
) -> tuple[np.ndarray, PeriodQuantization]:
    """The N+1 blender endpoint times covering one period, in ring order.

    Position j (1-based tap j) for j < N is that tap's mux-input time,
    position N is the boundary-mixer midpoint plus the path adjustment, and
    position N+1 is the wrap endpoint: the next phase position one period up
    (tap N+1 of the same wavefront, or the next cycle's first tap when the
    boundary sits on the last tap).
    """
    q = arbitrate_period(chain, clock)
    edge = clock_edge_at(clock, cycle)
    edge_next = clock_edge_at(clock, cycle + 1)
    taps = edge + chain.accumulated
    adjust = chain.path_skews if trim is None else chain.path_skews + trim.adjustments
    n = q.boundary_tap
    positions = np.empty(n + 1, dtype=np.float64)
    positions[: n - 1] = taps[: n - 1] + adjust[: n - 1]
    positions[n - 1] = 0.5 * (taps[n - 1] + edge_next) + adjust[n - 1]
    if n < chain.n_taps:
        positions[n] = taps[n] + adjust[n]
    else:
        positions[n] = edge_next + chain.tap_delays[0] + adjust[0]
    return positions, q


def encode(code: int, q: PeriodQuantization) -> EncoderSelect:
    """Mux selects and blender weight for one control code.

    Codes scale onto the N physical ring segments by integer arithmetic:
    position code*N/256 selects physical segment floor() and the blender
    weight is the 16-step fraction within it.  At the nominal N = 16 this
    reduces exactly to segment = code >> 4, blend_k = code & 15.  Segment p
    interpolates from tap p+1 toward tap p+2, so adjacent segments share an
    endpoint and only one mux select advances per segment step (leapfrog
    between the odd and even selects); off-nominal N keeps monotonicity but
    not step uniformity.
    """
    if not (0 <= code < PI_CODES):
        raise ValueError(f"code must lie in [0, {PI_CODES}), got {code}")
    scaled = code * q.n_delays_per_cycle
    physical = scaled // PI_CODES
    blend_k = (scaled % PI_CODES) // BLEND_STEPS
    start_tap = physical + 1
    end_tap = physical + 2
    if start_tap % 2 == 1:
        return EncoderSelect(start_tap, end_tap, blend_k, ODD_TO_EVEN)
    return EncoderSelect(end_tap, start_tap, blend_k, EVEN_TO_ODD)


def blend(t_a: Instant, t_b: Instant, k: int) -> Instant:
    """16-step weighted average of two edges; k = 0 returns t_a exactly."""
    if not (0 <= k < BLEND_STEPS):
        raise ValueError(f"blend step must lie in [0, {BLEND_STEPS}), got {k}")
    if k == 0:
        return t_a
    return t_a + (k / BLEND_STEPS) * (t_b - t_a)


def segment_endpoints(sel: EncoderSelect) -> tuple[int, int]:
    """(start tap, end tap) of the segment a select pair addresses."""
    if sel.direction == ODD_TO_EVEN:
        return sel.sel_odd, sel.sel_even
    return sel.sel_even, sel.sel_odd


def pi_output(
    code: int,
    chain: DelayChain,
    clock: ClockSpec,
    trim: TrimState | None = None,
    cycle: int = 0,
) -> Instant:
    """Output edge time for one control code in one input-clock cycle."""
    positions, q = ring_positions(chain, clock, trim, cycle)
    sel = encode(code, q)
    start_tap, end_tap = segment_endpoints(sel)
    return blend(positions[start_tap - 1], positions[end_tap - 1], sel.blend_k)


def pi_sweep(
    chain: DelayChain,
    clock: ClockSpec,
    trim: TrimState | None = None,
    cycle: int = 0,
) -> np.ndarray:
    """Output phase for every code, one cycle (index = code)."""
    positions, q = ring_positions(chain, clock, trim, cycle)
    phases = np.empty(PI_CODES, dtype=np.float64)
    for code in range(PI_CODES):
        sel = encode(code, q)
        start_tap, end_tap = segment_endpoints(sel)
        phases[code] = blend(positions[start_tap - 1], positions[end_tap - 1], sel.blend_k)
    return phases


def detect_blender_inversion(t_a: Instant, t_b: Instant, expected: str) -> bool:
    """True when the blender inputs arrive in the wrong order.

    t_a is the odd-mux output, t_b the even-mux output.  A tie counts as an
    inversion: a real arbiter cannot certify margin, and treating ties as
    clean would let trimming stall on an exactly zero-width segment.
    """
    if expected == ODD_TO_EVEN:
        return not (t_a < t_b)
    if expected == EVEN_TO_ODD:
        return not (t_b < t_a)
    raise ValueError(f"unknown direction {expected!r}")


def inverted_segments(
    chain: DelayChain,
    clock: ClockSpec,
    trim: TrimState | None = None,
    cycle: int = 0,
) -> list[tuple[int, int]]:
    """Segments whose blender inputs contradict the encoder, over all codes."""
    positions, q = ring_positions(chain, clock, trim, cycle)
    firing: list[tuple[int, int]] = []
    seen = set()
    for code in range(PI_CODES):
        sel = encode(code, q)
        start_tap, end_tap = segment_endpoints(sel)
        if (start_tap, end_tap) in seen:
            continue
        seen.add((start_tap, end_tap))
        t_odd = positions[sel.sel_odd - 1]
        t_even = positions[sel.sel_even - 1]
        if detect_blender_inversion(t_odd, t_even, sel.direction):
            firing.append((start_tap, end_tap))
    return firing


@dataclass(frozen=True)
class TrimResult:
    """Outcome of the post-fabrication trim procedure."""

    trim: TrimState
    iterations: int
    initial_inversions: int


def trim_paths(
    chain: DelayChain,
    clock: ClockSpec,
    max_iters: int = 64,
    cycle: int = 0,
) -> TrimResult:
    """Iteratively trim offending paths until no inversion fires.

    Each firing segment moves its expected-earlier endpoint earlier and its
    expected-later endpoint later by unit_delay/16 each (a fixed closure of
    unit_delay/8 per segment per iteration).  Raises when inversions persist
    at the iteration limit.
    """
    step = chain.unit_delay / 8.0
    limit = chain.unit_delay * (1.0 - 1e-6)
    adjustments = np.zeros(chain.n_taps)
    initial = None
    for iteration in range(1, max_iters + 1):
        state = TrimState(adjustments=adjustments.copy(), unit_delay=chain.unit_delay)
        firing = inverted_segments(chain, clock, state, cycle)
        if initial is None:
            initial = len(firing)
        if not firing:
            return TrimResult(trim=state, iterations=iteration, initial_inversions=initial)
        for start_tap, end_tap in firing:
            # the wrap endpoint beyond the last tap is physically tap 1's path
            adjustments[(start_tap - 1) % chain.n_taps] -= step / 2.0
            adjustments[(end_tap - 1) % chain.n_taps] += step / 2.0
        np.clip(adjustments, -limit, limit, out=adjustments)
    raise TrimConvergenceError(
        f"inversions persist after {max_iters} trim iterations"
    )
