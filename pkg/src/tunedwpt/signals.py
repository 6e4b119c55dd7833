"""Envelope extraction and sine-injection frequency-response measurement."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .analysis import linearize, slowest_decay_rate
from .params import OperatingPoint, SystemParams, check_density
from .phasor_models import DEFAULT_STEP, ControlSchedule, integrate
from .switched import circuit_state_from_phasor, simulate_switched

MIN_SAMPLES_PER_PERIOD = 64
SYSTEMS = ("nonlinear", "switched")


class SettlingError(ArithmeticError):
    """The measurement window still shows a drift larger than the allowed trend."""


@dataclass
class Envelope:
    t: np.ndarray
    amp: np.ndarray
    phase: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_s,amp,phase_rad\n")
        for row in zip(self.t, self.amp, self.phase):
            buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
        return buf.getvalue()


def _samples_per_period(t: np.ndarray, omega_s: float) -> int:
    if len(t) < 2:
        raise ValueError("waveform too short")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    n = 2 * math.pi / omega_s / dt
    if n < MIN_SAMPLES_PER_PERIOD - 1e-6:
        raise ValueError(f"need >= {MIN_SAMPLES_PER_PERIOD} samples per period, got {n:.1f}")
    return int(round(n))


def cycle_windows(t, x, omega_s: float):
    """Split a uniformly sampled waveform into whole switching periods.

    Returns (t_window_start, n_samples, x_reshaped) where each row of
    ``x_reshaped`` is one period.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    n = _samples_per_period(t, omega_s)
    n_win = len(x) // n
    if n_win < 2:
        raise ValueError("waveform must span at least two periods")
    return t[: n_win * n : n], n, x[: n_win * n].reshape(n_win, n)


def extract_envelope(t, x, omega_s: float) -> Envelope:
    """Quadrature demodulation at omega_s, one value per switching period.

    Each period is multiplied by cos and sin of the carrier and averaged;
    amplitude = 2*sqrt(I^2 + Q^2) and phase = atan2(-Q, I), so that
    ``A*cos(omega_s*t + phi)`` yields (A, phi). Sample times are window centres.
    """
    t = np.asarray(t, dtype=float)
    t0, n, xw = cycle_windows(t, x, omega_s)
    tw = t[: xw.size].reshape(xw.shape)
    I = np.mean(xw * np.cos(omega_s * tw), axis=1)
    Q = np.mean(xw * np.sin(omega_s * tw), axis=1)
    T = 2 * math.pi / omega_s
    dt = (t[-1] - t[0]) / (len(t) - 1)
    centre = t0 + 0.5 * (T - dt)
    return Envelope(centre, 2.0 * np.hypot(I, Q), np.arctan2(-Q, I))


def cycle_average(t, x, omega_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-period mean of ``x`` at window centres."""
    t = np.asarray(t, dtype=float)
    t0, n, xw = cycle_windows(t, x, omega_s)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    return t0 + 0.5 * (2 * math.pi / omega_s - dt), xw.mean(axis=1)


def sine_schedule(op: OperatingPoint, input: str, f: float, amplitude: float,
                  t_end: float, hold: float) -> ControlSchedule:
    """Sine injection on one density, zero-order held every ``hold`` seconds.

    Each held value is the sine at the middle of its interval, which removes
    the half-sample delay of a plain hold.
    """
    n = math.ceil(t_end / hold)
    t = np.arange(n) * hold
    s = op.d1 if input == "d1" else op.d2
    d = s + amplitude * np.sin(2 * math.pi * f * (t + 0.5 * hold))
    other = np.full(n, op.d2 if input == "d1" else op.d1)
    return ControlSchedule(t, d, other) if input == "d1" else ControlSchedule(t, other, d)


def _correlate(t, y, f: float, t_start: float, n_periods: int) -> tuple[complex, np.ndarray]:
    """Fundamental of ``y`` as (b_sin + j*b_cos) over whole periods, plus per-period means."""
    T = 1.0 / f
    t_stop = t_start + n_periods * T
    if t_stop > t[-1] * (1 + 1e-12):
        raise ValueError("waveform ends before the correlation window")
    # window endpoints pinned exactly so the dc level cannot leak in
    inner = (t > t_start) & (t < t_stop)
    ts = np.concatenate(([t_start], t[inner], [t_stop]))
    ys = np.interp(ts, t, y)
    means = np.array([
        trapezoid(*_clip(ts, ys, t_start + k * T, t_start + (k + 1) * T)[::-1]) / T
        for k in range(n_periods)
    ])
    ys = ys - trapezoid(ys, ts) / (n_periods * T)
    w = 2 * math.pi * f
    span = n_periods * T
    bs = 2.0 / span * trapezoid(ys * np.sin(w * ts), ts)
    bc = 2.0 / span * trapezoid(ys * np.cos(w * ts), ts)
    return complex(bs, bc), means


def _clip(ts, ys, a, b):
    inner = (ts > a) & (ts < b)
    tc = np.concatenate(([a], ts[inner], [b]))
    return tc, np.interp(tc, ts, ys)


def measure_frequency_response(system: str, input: str, f: float, p: SystemParams,
                               op: OperatingPoint, amplitude: float = 0.02,
                               n_periods: int = 10, step: float | None = None,
                               trend_tol: float = 0.01, dt: float | None = None,
                               settle_tc: float = 5.0) -> complex:
    """Complex V2 gain per unit density measured by sine injection.

    ``system`` is ``"nonlinear"`` (controllable phasor model) or
    ``"switched"`` (cycle-accurate circuit, density held per switching cycle).
    The first max(5/|Re lambda_slowest|, 2/f) seconds are discarded, then V2
    is correlated with sin/cos over ``n_periods`` injection periods. The
    returned gain G means a*sin(wt) -> |G|*a*sin(wt + arg G).
    """
    if system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}")
    if input not in ("d1", "d2"):
        raise ValueError(f"input must be 'd1' or 'd2', got {input!r}")
    if f <= 0 or amplitude <= 0 or n_periods < 10:
        raise ValueError("need f > 0, amplitude > 0 and at least 10 periods")
    base = op.d1 if input == "d1" else op.d2
    check_density(base - amplitude, input)
    check_density(base + amplitude, input)

    m = linearize(p, op)
    t_settle = max(settle_tc / slowest_decay_rate(m), 2.0 / f)
    if system == "switched":
        # start the window on a cycle boundary
        T = 2 * math.pi / p.omega_s
        t_settle = math.ceil(t_settle / T) * T
    t_end = t_settle + n_periods / f

    if system == "nonlinear":
        h = min(DEFAULT_STEP if step is None else step, 1.0 / (64 * f))
        sched = sine_schedule(op, input, f, amplitude, t_end, h)
        traj = integrate("reduced3", op.reduced_state, sched, t_end, p, step=h)
        t, v2 = traj.t, traj["V2_V"]
    else:
        sched = sine_schedule(op, input, f, amplitude, t_end, T)
        run = simulate_switched(p, sched, t_end, dt, x0=circuit_state_from_phasor(p, op))
        t, v2 = run.traj.t, run.traj["v2_V"]

    y, means = _correlate(t, v2, f, t_settle, n_periods)
    scale = max(abs(means.mean()), abs(y))
    drift = abs(means[-1] - means[0])
    if scale > 0 and drift > trend_tol * scale:
        raise SettlingError(f"period averages drift by {drift:.3g} (> {trend_tol:.0%} of {scale:.3g})")
    return y / amplitude
