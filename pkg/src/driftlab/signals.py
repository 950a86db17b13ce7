"""Phasor algebra for equal-frequency sinusoids.

Every signal in the simulator -- the oscillator output, the injected
electrical response, plate displacement, crystal stress -- is carried as an
amplitude/frequency/phase triple evaluated as ``A * sin(2*pi*f*t + phase)``.
Superposition of two equal-frequency sinusoids is computed through complex
phasors, which sidesteps the branch ambiguity of the closed-form arctan
expression when the two amplitudes differ.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Phase comparisons are meaningful only modulo 2*pi and to finite precision.
PHASE_TOL = 1e-9

# Any trace that serves as a brute-force oracle must resolve the carrier
# comfortably; 16x is the floor, acceptance oracles run at 64x.
MIN_OVERSAMPLING = 16.0


class FrequencyMismatchError(ValueError):
    """Superposition is only defined for equal-frequency sinusoids."""


class PhaseStepError(ValueError):
    """Phase step outside the (0, pi) band that keeps edge triggering intact."""


def wrap_phase(phi: float) -> float:
    """Reduce an angle to the canonical range [0, 2*pi)."""
    phi = math.fmod(phi, TWO_PI)
    if phi < 0.0:
        phi += TWO_PI
    if phi >= TWO_PI:  # fmod rounding can land exactly on 2*pi
        phi -= TWO_PI
    return phi


def phases_equal(a: float, b: float, tol: float = PHASE_TOL) -> bool:
    """Compare two angles modulo 2*pi within ``tol`` radians."""
    d = wrap_phase(a - b)
    return d <= tol or TWO_PI - d <= tol


@dataclass(frozen=True)
class Sinusoid:
    """Immutable ``A * sin(2*pi*f*t + phase)`` value.

    amplitude is non-negative, frequency strictly positive, and the phase is
    normalised to [0, 2*pi) on construction.  Zero-amplitude sinusoids compare
    equal regardless of phase.
    """

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0.0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.frequency <= 0.0:
            raise ValueError(f"frequency must be > 0, got {self.frequency}")
        object.__setattr__(self, "phase", wrap_phase(float(self.phase)))
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "frequency", float(self.frequency))

    def __eq__(self, other):
        if not isinstance(other, Sinusoid):
            return NotImplemented
        if self.amplitude == 0.0 and other.amplitude == 0.0:
            return self.frequency == other.frequency
        return (
            self.amplitude == other.amplitude
            and self.frequency == other.frequency
            and phases_equal(self.phase, other.phase)
        )

    __hash__ = None  # tolerance-based equality is incompatible with hashing

    def value_at(self, t: float) -> float:
        """Instantaneous value at time ``t`` (seconds)."""
        return self.amplitude * math.sin(TWO_PI * self.frequency * t + self.phase)

    def phasor(self) -> complex:
        return self.amplitude * cmath.exp(1j * self.phase)


@dataclass(frozen=True)
class SampledTrace:
    """Uniformly sampled real signal, the carrier for brute-force oracles."""

    sample_rate: float
    samples: np.ndarray
    start_time: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0.0:
            raise ValueError("sample_rate must be > 0")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate


def superpose(f: Sinusoid, g: Sinusoid) -> Sinusoid:
    """Sum of two equal-frequency sinusoids as a single sinusoid.

    The result is obtained by complex phasor addition, so the phase branch is
    always the one matching pointwise time-domain addition.
    """
    if f.frequency != g.frequency:
        raise FrequencyMismatchError(
            f"cannot superpose {f.frequency} Hz with {g.frequency} Hz"
        )
    z = f.phasor() + g.phasor()
    amp = abs(z)
    phase = wrap_phase(cmath.phase(z)) if amp > 0.0 else 0.0
    return Sinusoid(amp, f.frequency, phase)


def phase_after_superposition(beta2: float, delta: float, a_inj: float, b_osc: float) -> float:
    """New oscillation phase after an injected signal leads by ``delta``.

    ``a_inj`` and ``b_osc`` are the injected and oscillation amplitudes.  The
    returned phase is not wrapped; it always lies strictly between ``beta2``
    and ``beta2 + delta`` for positive amplitudes, reaching the midpoint when
    the amplitudes are equal.
    """
    if not 0.0 < delta < math.pi:
        raise PhaseStepError(f"phase step must lie in (0, pi), got {delta}")
    if a_inj <= 0.0 or b_osc <= 0.0:
        raise ValueError("amplitudes must be > 0")
    ratio = (a_inj - b_osc) / (a_inj + b_osc)
    return beta2 + 0.5 * delta + math.atan(ratio * math.tan(0.5 * delta))


def render(s: Sinusoid, sample_rate: float, duration: float) -> SampledTrace:
    """Sample a sinusoid over ``duration`` seconds starting at t = 0."""
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    if sample_rate < MIN_OVERSAMPLING * s.frequency:
        raise ValueError(
            f"sample_rate {sample_rate} Hz below oracle floor of "
            f"{MIN_OVERSAMPLING}x carrier ({MIN_OVERSAMPLING * s.frequency} Hz)"
        )
    n = int(round(sample_rate * duration))
    if n < 1:
        raise ValueError("duration too short for one sample")
    t = np.arange(n) / sample_rate
    samples = s.amplitude * np.sin(TWO_PI * s.frequency * t + s.phase)
    return SampledTrace(sample_rate=sample_rate, samples=samples)
