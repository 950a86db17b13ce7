"""Event-driven emulation of the oscillator, divider and time counters.

The oscillator output is tracked analytically: within any stretch of constant
injection status the waveform is a single sinusoid, and the times at which it
crosses the edge-trigger threshold upward have a closed form.  The divider
decrements once per upward crossing and emits one tick (resetting itself)
each time it reaches zero, so time never needs to be sampled -- the engine
advances from event to event.

Two injection mechanisms exist, matching the two drift directions:

* a sustained opposing injection pulls the superposed amplitude below the
  trigger threshold, so crossings (and therefore ticks) simply stop;
* a short burst whose phase leads the oscillation by less than pi drags the
  oscillation phase forward, so subsequent crossings arrive early and extra
  cycles accumulate.

Phase convergence during a burst follows first-order relaxation toward the
injected phase with a configurable time constant; a burst lasting at least
five time constants is treated as fully converged and the oscillator phase
snaps exactly onto the injected phase, which keeps long-run drift accounting
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .signals import TWO_PI, Sinusoid, superpose, wrap_phase

MODE_CALENDAR = "calendar"
MODE_32BIT = "thirtytwo_bit"

DIVIDER_MAX = 65535  # 16-bit divider counter

# Bursts at least this many time constants long count as fully converged.
FULL_CONVERGENCE_FACTOR = 5.0


class PlanError(ValueError):
    """Injection request violates the engine's preconditions."""


class TickEvent(NamedTuple):
    """One divider output pulse: when it fired and the RTC time after it."""

    time: float
    rtc_time: float


@dataclass(frozen=True)
class InjectionBurst:
    """Timed injection of an induced electrical signal at the crystal.

    ``start`` is wall time at the crystal (propagation delay already spent);
    the signal carries the injected phase and amplitude on the electrical
    side of the chain.
    """

    start: float
    duration: float
    signal: Sinusoid

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("burst duration must be > 0")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class RtcConfig:
    nominal_freq: float = 32768.0
    nominal_amplitude: float = 0.080
    trigger_threshold: Optional[float] = None   # defaults to half the amplitude
    divider_reload: Optional[int] = None        # defaults per mode
    mode: str = MODE_CALENDAR
    freeze_timeout: Optional[float] = None
    convergence_time_constant: float = 3e-6

    def __post_init__(self):
        if self.nominal_freq <= 0.0:
            raise ValueError("nominal_freq must be > 0")
        if self.nominal_amplitude <= 0.0:
            raise ValueError("nominal_amplitude must be > 0")
        if self.mode not in (MODE_CALENDAR, MODE_32BIT):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trigger_threshold is None:
            object.__setattr__(self, "trigger_threshold", 0.5 * self.nominal_amplitude)
        if not 0.0 < self.trigger_threshold < self.nominal_amplitude:
            raise ValueError(
                "trigger_threshold must lie strictly between 0 and the "
                "nominal amplitude"
            )
        if self.divider_reload is None:
            reload = 32768 if self.mode == MODE_CALENDAR else 32
            object.__setattr__(self, "divider_reload", reload)
        if not 1 <= self.divider_reload <= DIVIDER_MAX:
            raise ValueError(f"divider_reload must lie in [1, {DIVIDER_MAX}]")
        if self.freeze_timeout is not None and self.freeze_timeout <= 0.0:
            raise ValueError("freeze_timeout must be > 0 when set")
        if self.convergence_time_constant <= 0.0:
            raise ValueError("convergence_time_constant must be > 0")

    @property
    def tick_period(self) -> float:
        return self.divider_reload / self.nominal_freq


@dataclass(frozen=True)
class RtcState:
    """Value snapshot of the emulated circuit; advanced functionally."""

    osc_phase: float = 0.0
    osc_amplitude: float = 0.080
    counter: int = 32768
    rtc_time: float = 0.0
    wall_time: float = 0.0
    frozen: bool = False
    injection: Optional[Sinusoid] = None
    last_edge_time: float = 0.0


def initial_state(config: RtcConfig, osc_phase: float = 0.0) -> RtcState:
    return RtcState(
        osc_phase=wrap_phase(osc_phase),
        osc_amplitude=config.nominal_amplitude,
        counter=config.divider_reload,
        last_edge_time=0.0,
    )


def measure_drift(state: RtcState) -> float:
    """RTC time minus wall time; positive means the clock runs ahead."""
    return state.rtc_time - state.wall_time


def _active_waveform(state: RtcState, config: RtcConfig) -> Sinusoid:
    carrier = Sinusoid(state.osc_amplitude, config.nominal_freq, state.osc_phase)
    if state.injection is None:
        return carrier
    return superpose(carrier, state.injection)


def _crossing_index(t: float, freq: float, phase: float, theta_star: float) -> int:
    """Number of upward level crossings with crossing time <= t."""
    return math.floor(freq * t + (phase - theta_star) / TWO_PI)


def _crossing_time(n: int, freq: float, phase: float, theta_star: float) -> float:
    return (theta_star - phase + TWO_PI * n) / (TWO_PI * freq)


def _consume_crossings(
    counter: int,
    reload: int,
    rtc_time: float,
    tick_period: float,
    count: int,
    tick_time_fn,
    events: Optional[list],
) -> tuple[int, float]:
    """Route ``count`` crossings through the divider, logging tick events.

    ``tick_time_fn(j)`` maps the 1-based crossing ordinal within this batch
    to its wall time; it is only called for crossings that produce a tick.
    """
    if count < counter:
        return counter - count, rtc_time
    ticks = (count - counter) // reload + 1
    for i in range(ticks):
        rtc_time += tick_period
        if events is not None:
            events.append(TickEvent(tick_time_fn(counter + i * reload), rtc_time))
    new_counter = counter - count + ticks * reload
    return new_counter, rtc_time


def step_with_events(
    state: RtcState, config: RtcConfig, until: float
) -> tuple[RtcState, list[TickEvent]]:
    """Advance to ``until`` under the current injection status.

    Returns the new state and the divider ticks emitted on the way.
    """
    if until <= state.wall_time:
        raise ValueError(f"until ({until}) must exceed wall_time ({state.wall_time})")
    events: list[TickEvent] = []
    if state.frozen:
        return replace(state, wall_time=until), events

    freq = config.nominal_freq
    wave = _active_waveform(state, config)
    thr = config.trigger_threshold

    if wave.amplitude <= thr:
        # No crossings at all in this stretch; only the freeze watchdog runs.
        frozen = state.frozen
        if (
            config.freeze_timeout is not None
            and until - state.last_edge_time >= config.freeze_timeout
        ):
            frozen = True
        return replace(state, wall_time=until, frozen=frozen), events

    theta_star = math.asin(thr / wave.amplitude)
    n0 = _crossing_index(state.wall_time, freq, wave.phase, theta_star)
    n1 = _crossing_index(until, freq, wave.phase, theta_star)
    count = n1 - n0
    if count <= 0:
        return replace(state, wall_time=until), events

    first = _crossing_time(n0 + 1, freq, wave.phase, theta_star)
    if (
        config.freeze_timeout is not None
        and first - state.last_edge_time >= config.freeze_timeout
    ):
        return replace(state, wall_time=until, frozen=True), events

    counter, rtc_time = _consume_crossings(
        state.counter,
        config.divider_reload,
        state.rtc_time,
        config.tick_period,
        count,
        lambda j: _crossing_time(n0 + j, freq, wave.phase, theta_star),
        events,
    )
    last_edge = _crossing_time(n1, freq, wave.phase, theta_star)
    return (
        replace(
            state,
            wall_time=until,
            counter=counter,
            rtc_time=rtc_time,
            last_edge_time=last_edge,
        ),
        events,
    )


def step(state: RtcState, config: RtcConfig, until: float) -> RtcState:
    return step_with_events(state, config, until)[0]


def with_injection(
    state: RtcState, config: RtcConfig, signal: Optional[Sinusoid]
) -> tuple[RtcState, list[TickEvent]]:
    """Switch the sustained injection on or off at the current wall time.

    The waveform jumps discontinuously when the injection status changes; if
    that jump itself rises through the trigger threshold the comparator sees
    an edge, which is counted here.
    """
    if signal is not None and signal.frequency != config.nominal_freq:
        raise PlanError(
            f"injection at {signal.frequency} Hz does not match the oscillator "
            f"({config.nominal_freq} Hz)"
        )
    events: list[TickEvent] = []
    if state.frozen:
        return replace(state, injection=signal), events

    t = state.wall_time
    before = _active_waveform(state, config)
    new_state = replace(state, injection=signal)
    after = _active_waveform(new_state, config)
    thr = config.trigger_threshold
    v_before = before.value_at(t)
    v_after = after.value_at(t)
    if v_before <= thr < v_after:
        if (
            config.freeze_timeout is not None
            and t - state.last_edge_time >= config.freeze_timeout
        ):
            return replace(new_state, frozen=True), events
        counter, rtc_time = _consume_crossings(
            new_state.counter,
            config.divider_reload,
            new_state.rtc_time,
            config.tick_period,
            1,
            lambda j: t,
            events,
        )
        new_state = replace(
            new_state, counter=counter, rtc_time=rtc_time, last_edge_time=t
        )
    return new_state, events


def _burst_phase_path(delta: float, tau: float, duration: float) -> float:
    """Residual phase gap left after a burst of the given duration."""
    if duration >= FULL_CONVERGENCE_FACTOR * tau:
        return 0.0
    return delta * math.exp(-duration / tau)


def apply_phase_advance_with_events(
    state: RtcState, config: RtcConfig, burst: InjectionBurst
) -> tuple[RtcState, list[TickEvent]]:
    """Run one phase-dragging burst, counting crossings exactly.

    The total phase (carrier plus offset) increases monotonically through the
    burst, so the crossing count depends only on its endpoint value; crossing
    times inside the burst are recovered by inverting the relaxation path,
    which is only needed for the rare crossings that produce a tick.
    """
    if burst.signal.frequency != config.nominal_freq:
        raise PlanError(
            f"burst at {burst.signal.frequency} Hz does not match the oscillator "
            f"({config.nominal_freq} Hz)"
        )
    if burst.start < state.wall_time:
        raise PlanError(
            f"burst starts at {burst.start} s before wall time {state.wall_time} s"
        )
    events: list[TickEvent] = []
    if burst.start > state.wall_time:
        state, events = step_with_events(state, config, burst.start)
    if state.frozen:
        return replace(state, wall_time=burst.start + burst.duration), events

    beta1 = burst.signal.phase
    beta2 = state.osc_phase
    delta = wrap_phase(beta1 - beta2)
    t0 = burst.start
    te = burst.start + burst.duration
    if delta <= 1e-12 or TWO_PI - delta <= 1e-12:
        # Already aligned: the burst only holds the phase where it is.
        new_state, more = step_with_events(state, config, te)
        return new_state, events + more

    if delta >= math.pi:
        raise PlanError(
            f"phase offset {delta:.6f} rad outside (0, pi); a leading burst "
            "cannot drag the phase backward"
        )

    tau = config.convergence_time_constant
    residual = _burst_phase_path(delta, tau, burst.duration)
    advanced = delta - residual
    # Counting works on the unwrapped phase so an advance across 2*pi still
    # contributes its full cycle; the stored phase snaps exactly onto the
    # injected one at full convergence.
    end_unwrapped = beta2 + advanced
    final_phase = beta1 if residual == 0.0 else wrap_phase(end_unwrapped)
    freq = config.nominal_freq
    thr = config.trigger_threshold
    amp = state.osc_amplitude

    if amp <= thr:
        frozen = state.frozen
        if (
            config.freeze_timeout is not None
            and te - state.last_edge_time >= config.freeze_timeout
        ):
            frozen = True
        return (
            replace(state, wall_time=te, osc_phase=final_phase, frozen=frozen),
            events,
        )

    theta_star = math.asin(thr / amp)

    def phase_at(t: float) -> float:
        # Unwrapped phase offset along the relaxation path.
        if t >= te:
            return end_unwrapped
        gap = _burst_phase_path(delta, tau, t - t0)
        return beta2 + (delta - gap)

    n0 = _crossing_index(t0, freq, beta2, theta_star)
    n1 = _crossing_index(te, freq, end_unwrapped, theta_star)
    count = n1 - n0
    new_state = replace(state, wall_time=te, osc_phase=final_phase)
    if count <= 0:
        return new_state, events

    def crossing_time(n: int) -> float:
        target = theta_star + TWO_PI * n
        lo, hi = t0, te
        if TWO_PI * freq * t0 + beta2 >= target:
            return t0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if TWO_PI * freq * mid + phase_at(mid) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    first = crossing_time(n0 + 1)
    if (
        config.freeze_timeout is not None
        and first - state.last_edge_time >= config.freeze_timeout
    ):
        return replace(new_state, frozen=True), events

    counter, rtc_time = _consume_crossings(
        state.counter,
        config.divider_reload,
        state.rtc_time,
        config.tick_period,
        count,
        lambda j: crossing_time(n0 + j),
        events,
    )
    new_state = replace(
        new_state, counter=counter, rtc_time=rtc_time, last_edge_time=te
    )
    return new_state, events


def apply_phase_advance(state: RtcState, config: RtcConfig, burst: InjectionBurst) -> RtcState:
    return apply_phase_advance_with_events(state, config, burst)[0]


@dataclass(frozen=True)
class TrainResult:
    state: RtcState
    crossings: int
    ticks: list[TickEvent]
    phase_advanced: float


def run_uniform_train(
    state: RtcState,
    config: RtcConfig,
    *,
    count: int,
    period: float,
    duration: float,
    delta: float,
    start: Optional[float] = None,
    collect_ticks: bool = False,
) -> TrainResult:
    """Closed-form run of ``count`` identical fully-converging bursts.

    Each burst steps the injected phase ``delta`` ahead of the oscillation,
    so the phase offset grows by exactly ``count * delta`` over the train.
    Because the total phase is monotone through the whole train, the crossing
    count follows from its endpoint values alone; per-tick times, when asked
    for, are recovered by inverting the piecewise phase path.
    """
    if not 0.0 < delta < math.pi:
        raise PlanError(f"phase step must lie in (0, pi), got {delta}")
    if duration <= 0.0 or period < duration:
        raise PlanError("bursts must have positive duration and not overlap")
    if duration < FULL_CONVERGENCE_FACTOR * config.convergence_time_constant:
        raise PlanError(
            "uniform-train fast path requires full convergence "
            f"(duration >= {FULL_CONVERGENCE_FACTOR} time constants)"
        )
    if state.frozen:
        raise PlanError("cannot run a burst train on a frozen clock")
    if start is None:
        start = state.wall_time
    if start < state.wall_time:
        raise PlanError("train cannot start in the past")
    events: list[TickEvent] = []
    if start > state.wall_time:
        state, events = step_with_events(state, config, start)

    freq = config.nominal_freq
    thr = config.trigger_threshold
    amp = state.osc_amplitude
    if amp <= thr:
        raise PlanError("oscillation amplitude at or below threshold; no edges")
    theta_star = math.asin(thr / amp)
    tau = config.convergence_time_constant
    beta2 = state.osc_phase
    t_end = start + (count - 1) * period + duration
    advanced = count * delta

    n0 = _crossing_index(start, freq, beta2, theta_star)
    n1 = _crossing_index(t_end, freq, beta2 + advanced, theta_star)
    total = n1 - n0

    tick_fn = None
    if collect_ticks:

        def offset_at(t: float) -> float:
            # Cumulative phase advance at time t along the train.
            if t >= t_end:
                return advanced
            i = min(int((t - start) / period), count - 1)
            elapsed = t - (start + i * period)
            if elapsed >= duration:
                return (i + 1) * delta
            if elapsed >= FULL_CONVERGENCE_FACTOR * tau:
                partly = delta
            else:
                partly = delta * (1.0 - math.exp(-elapsed / tau))
            return i * delta + partly

        def tick_fn(j: int) -> float:
            target = theta_star + TWO_PI * (n0 + j)
            lo, hi = start, t_end
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if TWO_PI * freq * mid + beta2 + offset_at(mid) < target:
                    lo = mid
                else:
                    hi = mid
            return 0.5 * (lo + hi)

    counter, rtc_time = _consume_crossings(
        state.counter,
        config.divider_reload,
        state.rtc_time,
        config.tick_period,
        total,
        tick_fn if collect_ticks else (lambda j: t_end),
        events if collect_ticks else None,
    )
    new_state = replace(
        state,
        wall_time=t_end,
        osc_phase=wrap_phase(beta2 + advanced),
        counter=counter,
        rtc_time=rtc_time,
        last_edge_time=t_end if total > 0 else state.last_edge_time,
    )
    return TrainResult(
        state=new_state, crossings=total, ticks=events, phase_advanced=advanced
    )
