"""Cycle-accurate simulation of the PDM full-bridge series-series WPT circuit.

The inverter applies ``V1*sign(cos(omega_s*t))`` in active cycles and shorts
its output in freewheel cycles. The rectifier is ideally synchronised to the
receiver current: when active it presents ``-sign(iL2)*v2`` to the tank and
delivers ``|iL2|`` to the filter capacitor. Pulse patterns come from a
first-order error accumulator, one decision per switching cycle.

State: (iL1, vC1, iL2, vC2, v2). Coupled loops::

    L1 diL1/dt + M diL2/dt = u1 - vC1 - R1 iL1
    M diL1/dt + L2 diL2/dt = u2 - vC2 - R2 iL2
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .params import OperatingPoint, SystemParams, check_density
from .phasor_models import ControlSchedule, IntegrationError, Trajectory

WAVEFORM_COLUMNS = ("iL1_A", "vC1_V", "iL2_A", "vC2_V", "v2_V", "u1_V", "u2_V")
DEFAULT_STEPS_PER_CYCLE = 512
MIN_STEPS_PER_CYCLE = 128


def pdm_pattern(d: float, n_cycles: int) -> np.ndarray:
    """Activity flags for ``n_cycles`` cycles at constant density ``d``."""
    d = check_density(d)
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    return pdm_from_densities(np.full(n_cycles, d))


def pdm_from_densities(densities) -> np.ndarray:
    """Accumulator pattern for a per-cycle density sequence.

    Each cycle adds its density to the accumulator; the cycle is active when
    the sum reaches 1, which is then subtracted.
    """
    densities = np.asarray(densities, dtype=float)
    if np.any((densities < 0) | (densities > 1)) or not np.all(np.isfinite(densities)):
        raise ValueError("densities must lie in [0, 1]")
    out = np.zeros(len(densities), dtype=bool)
    acc = 0.0
    for n, d in enumerate(densities):
        acc += d
        if acc >= 1.0:
            out[n] = True
            acc -= 1.0
    return out


def inverter_voltage(t, active, V1: float, omega_s: float):
    """Inverter ac-side voltage; ``active`` is the flag of the cycle containing ``t``."""
    s = np.sign(np.cos(omega_s * np.asarray(t, dtype=float)))
    return np.where(active, V1 * s, 0.0)


def inverter_waveform(t, pattern, V1: float, omega_s: float) -> np.ndarray:
    """u1 at times ``t`` for a per-cycle ``pattern`` starting at t = 0."""
    t = np.asarray(t, dtype=float)
    T = 2 * math.pi / omega_s
    n = np.minimum((t // T).astype(int), len(pattern) - 1)
    return inverter_voltage(t, np.asarray(pattern)[n], V1, omega_s)


def rectifier_voltage(iL2: float, v2: float, active: bool) -> tuple[float, float]:
    """(u2, i_rect): tank-side voltage and current delivered to the dc side."""
    if not active:
        return 0.0, 0.0
    s = float(np.sign(iL2))
    return -s * v2, abs(iL2)


@njit(cache=True)
def _deriv(x, u1, a2, L1, L2, M, R1, R2, C1, C2, Cf, RL, det, out):
    iL1 = x[0]
    iL2 = x[2]
    v2 = x[4]
    if a2:
        if iL2 > 0.0:
            u2 = -v2
            irect = iL2
        elif iL2 < 0.0:
            u2 = v2
            irect = -iL2
        else:
            u2 = 0.0
            irect = 0.0
    else:
        u2 = 0.0
        irect = 0.0
    e1 = u1 - x[1] - R1 * iL1
    e2 = u2 - x[3] - R2 * iL2
    out[0] = (L2 * e1 - M * e2) / det
    out[1] = iL1 / C1
    out[2] = (L1 * e2 - M * e1) / det
    out[3] = iL2 / C2
    out[4] = (irect - v2 / RL) / Cf
    return u2


@njit(cache=True)
def _run(x0, act1, act2, n_per, n_steps, record_every, dt, omega_s, V1,
         L1, L2, M, R1, R2, C1, C2, Cf, RL):
    det = L1 * L2 - M * M
    n_rec = n_steps // record_every + 1
    rec = np.empty((n_rec, 7))
    x = x0.copy()
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    xt = np.empty(5)
    T = 2.0 * np.pi / omega_s
    for j in range(5):
        rec[0, j] = x[j]
    rec[0, 5] = 0.0
    rec[0, 6] = 0.0
    r = 1
    for k in range(n_steps):
        cyc = k // n_per
        a1 = act1[cyc]
        a2 = act2[cyc]
        # u1 is constant over a step: sign of the carrier at the step midpoint
        u1 = 0.0
        if a1:
            c = np.cos(omega_s * ((k % n_per) + 0.5) * (T / n_per))
            u1 = V1 if c > 0.0 else -V1
        u2 = _deriv(x, u1, a2, L1, L2, M, R1, R2, C1, C2, Cf, RL, det, k1)
        for j in range(5):
            xt[j] = x[j] + 0.5 * dt * k1[j]
        _deriv(xt, u1, a2, L1, L2, M, R1, R2, C1, C2, Cf, RL, det, k2)
        for j in range(5):
            xt[j] = x[j] + 0.5 * dt * k2[j]
        _deriv(xt, u1, a2, L1, L2, M, R1, R2, C1, C2, Cf, RL, det, k3)
        for j in range(5):
            xt[j] = x[j] + dt * k3[j]
        _deriv(xt, u1, a2, L1, L2, M, R1, R2, C1, C2, Cf, RL, det, k4)
        ok = True
        for j in range(5):
            x[j] = x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not np.isfinite(x[j]):
                ok = False
        if not ok:
            return rec[:r], k + 1
        if (k + 1) % record_every == 0:
            for j in range(5):
                rec[r, j] = x[j]
            # u1, u2 reported as applied during the step just completed
            rec[r, 5] = u1
            rec[r, 6] = u2
            r += 1
    return rec[:r], -1


@dataclass
class SwitchedRun:
    """Waveforms plus the per-cycle patterns and final state of an oracle run."""

    traj: Trajectory
    pattern1: np.ndarray
    pattern2: np.ndarray
    dt: float
    steps_per_cycle: int
    record_every: int
    final_state: np.ndarray

    @property
    def samples_per_cycle(self) -> int:
        return self.steps_per_cycle // self.record_every


def steps_per_cycle_for(omega_s: float, dt: float | None) -> int:
    T = 2 * math.pi / omega_s
    if dt is None:
        return DEFAULT_STEPS_PER_CYCLE
    n = round(T / dt)
    if dt > T / MIN_STEPS_PER_CYCLE * (1 + 1e-9) or n < MIN_STEPS_PER_CYCLE:
        raise ValueError(f"dt must be <= T_s/{MIN_STEPS_PER_CYCLE} = {T / MIN_STEPS_PER_CYCLE:.4g} s")
    return int(n)


def simulate_switched(p: SystemParams, sched: ControlSchedule, t_end: float,
                      dt: float | None = None, *, x0=None,
                      record_every: int = 1) -> SwitchedRun:
    """Fixed-step RK4 simulation of the switched circuit.

    ``dt`` is snapped to ``T_s/N`` with integer N >= 128 (default N = 512) so
    every switching cycle starts on a step boundary. Densities are sampled at
    the centre of each cycle. The simulation covers whole cycles, at least up
    to ``t_end``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if p.M * p.M >= p.L1 * p.L2:
        raise ValueError("singular coupling matrix: M^2 >= L1*L2")
    n_per = steps_per_cycle_for(p.omega_s, dt)
    if record_every < 1 or n_per % record_every:
        raise ValueError("record_every must divide the steps per cycle")
    T = 2 * math.pi / p.omega_s
    n_cycles = max(1, math.ceil(t_end / T - 1e-9))
    centres = (np.arange(n_cycles) + 0.5) * T
    d1, d2 = sched.sample(centres)
    act1 = pdm_from_densities(d1)
    act2 = pdm_from_densities(d2)
    x = np.zeros(5) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (5,):
        raise ValueError("x0 must be (iL1, vC1, iL2, vC2, v2)")
    h = T / n_per
    rec, fail = _run(x, act1, act2, n_per, n_cycles * n_per, record_every, h, p.omega_s,
                     p.V1, p.L1, p.L2, p.M, p.R1, p.R2, p.C1, p.C2, p.Cf, p.RL)
    if fail >= 0:
        raise IntegrationError(fail * h)
    t = np.arange(rec.shape[0]) * (h * record_every)
    traj = Trajectory(t, rec, WAVEFORM_COLUMNS)
    return SwitchedRun(traj, act1, act2, h, n_per, record_every, rec[-1, :5].copy())


def circuit_state_from_phasor(p: SystemParams, op: OperatingPoint) -> np.ndarray:
    """Instantaneous state at t = 0 consistent with the phasor operating point.

    i = sqrt(2) Re{I e^{jwt}} and v_C = sqrt(2) Re{I/(jwC) e^{jwt}}; the
    receiver phasor is purely imaginary at the tuned equilibrium.
    """
    I1 = complex(op.IL1r, 0.0)
    I2 = complex(0.0, op.IL2i)
    w = p.omega_s
    s2 = math.sqrt(2.0)
    return np.array([
        s2 * I1.real,
        s2 * (I1 / (1j * w * p.C1)).real,
        s2 * I2.real,
        s2 * (I2 / (1j * w * p.C2)).real,
        op.V2,
    ])


def settle(p: SystemParams, d1: float, d2: float, t_settle: float, x0=None,
           dt: float | None = None) -> np.ndarray:
    """Run at constant densities for whole cycles and return the final state.

    The returned state can seed another run starting at t = 0 because the
    carrier phase repeats every cycle.
    """
    run = simulate_switched(p, ControlSchedule.constant(d1, d2), t_settle, dt, x0=x0,
                            record_every=steps_per_cycle_for(p.omega_s, dt))
    return run.final_state


@dataclass(frozen=True)
class EnergyAudit:
    p_in: float
    p_out: float
    p_esr: float

    @property
    def imbalance(self) -> float:
        return abs(self.p_in - self.p_out - self.p_esr) / abs(self.p_in)


def energy_audit(run: SwitchedRun, p: SystemParams, n_cycles: int) -> EnergyAudit:
    """Average powers over the last ``n_cycles`` whole cycles of a run.

    Uses step-wise averages: the recorded u1, u2 apply over the step ending at
    each sample, so currents are averaged across the same step (trapezoid).
    """
    if run.record_every != 1:
        raise ValueError("energy audit needs every step recorded")
    x = run.traj.x
    n = n_cycles * run.steps_per_cycle
    if n >= len(x):
        raise ValueError("run shorter than the audit window")
    seg = x[-n - 1:]
    mid = 0.5 * (seg[1:] + seg[:-1])
    u1 = seg[1:, 5]
    i1, i2, v2 = seg[:, 0], seg[:, 2], seg[:, 4]

    def trap_sq(v):
        # exact mean of a linear interpolant squared over each step
        a, b = v[:-1], v[1:]
        return np.mean((a * a + a * b + b * b) / 3.0)

    p_in = float(np.mean(u1 * mid[:, 0]))
    p_out = trap_sq(v2) / p.RL
    p_esr = p.R1 * trap_sq(i1) + p.R2 * trap_sq(i2)
    return EnergyAudit(p_in=p_in, p_out=float(p_out), p_esr=float(p_esr))
