"""Differential test stimuli evaluated at arbitrary sampling instants.

Each stimulus maps an array of instants to (v_p, v_n).  The optional
front-end bandwidth models the passive track-and-hold (and any input
network) as one or two cascaded first-order low-pass sections; for a sine
that is an exact amplitude/phase factor, so it is applied analytically.
Ramp and DC stimuli are calibration signals and pass through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SineStimulus:
    """Differential sine: v_p - v_n = amplitude * sin(2*pi*f*t + phase)."""

    frequency: float
    amplitude: float  # differential peak, volts
    common_mode: float
    phase: float = 0.0
    bandwidth: float | None = None
    filter_stages: int = 1

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        amp, ph = self.amplitude, self.phase
        if self.bandwidth is not None:
            ratio = self.frequency / self.bandwidth
            amp = amp / (1.0 + ratio**2) ** (self.filter_stages / 2.0)
            ph = ph - self.filter_stages * np.arctan(ratio)
        dv = amp * np.sin(2.0 * np.pi * self.frequency * np.asarray(t) + ph)
        return self.common_mode + dv / 2.0, self.common_mode - dv / 2.0


@dataclass(frozen=True)
class RampStimulus:
    """Differential ramp from -span/2 to +span/2 over [t0, t1] (calibration)."""

    span: float
    common_mode: float
    t0: float
    t1: float

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        frac = np.clip((np.asarray(t) - self.t0) / (self.t1 - self.t0), 0.0, 1.0)
        dv = self.span * (frac - 0.5)
        return self.common_mode + dv / 2.0, self.common_mode - dv / 2.0


@dataclass(frozen=True)
class DCStimulus:
    """Static differential level."""

    dv: float
    common_mode: float

    def __call__(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t)
        half = np.full(t.shape, self.dv / 2.0)
        return self.common_mode + half, self.common_mode - half


GOLDEN_FRACTION = 0.6180339887498949


def adaptation_tone(template: SineStimulus, slice_rate: float) -> SineStimulus:
    """Zero-mean warmup tone for background offset adaptation.

    A tone coherent with the capture gives each slice only n/16 distinct
    phases, so whether any sample lands on the minimum code is a parity
    accident.  Advancing each slice's phase by the golden fraction of a
    cycle per sample fills the phase circle maximally uniformly, which
    guarantees histogram mass at the true minimum for any adaptation window
    a few thousand samples long.
    """
    return SineStimulus(
        frequency=GOLDEN_FRACTION * slice_rate,
        amplitude=template.amplitude,
        common_mode=template.common_mode,
        phase=template.phase,
        bandwidth=template.bandwidth,
        filter_stages=template.filter_stages,
    )
