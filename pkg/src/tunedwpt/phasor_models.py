"""Dynamic-phasor models of the tuned WPT link and a schedule-aware integrator.

State vectors are plain numpy arrays. Phasors are RMS-valued, so the
instantaneous envelope of a resonant current is ``sqrt(2)*|phasor|``.

Model orders:

* ``full5``     general model with beat frequencies and arbitrary conversion ratios
* ``tuned5``    the same at exact resonance with the tuned conversion ratios
* ``reduced3``  controllable part (IL1r, IL2i, V2)
* ``residual2`` uncontrollable part (IL1i, IL2r), no inputs
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .params import (
    RATIO_GAIN,
    ConversionRatios,
    DerivedParams,
    SystemParams,
    check_density,
    conversion_ratios_tuned,
    derive,
)

SQRT2_PI = math.sqrt(2.0) / math.pi

STATE_NAMES = {
    "full5": ("IL1r", "IL1i", "IL2r", "IL2i", "V2"),
    "tuned5": ("IL1r", "IL1i", "IL2r", "IL2i", "V2"),
    "reduced3": ("IL1r", "IL2i", "V2"),
    "residual2": ("IL1i", "IL2r"),
}
UNITS = {"IL1r": "A", "IL1i": "A", "IL2r": "A", "IL2i": "A", "V2": "V"}
MODELS = tuple(STATE_NAMES)

# rows of the 5-state vector forming the controllable / uncontrollable parts
REDUCED_ROWS = (0, 3, 4)
RESIDUAL_ROWS = (1, 2)

DEFAULT_STEP = 0.5e-6
MAX_SAMPLE_SPACING = 1e-6


class IntegrationError(ArithmeticError):
    def __init__(self, t: float, msg: str = "non-finite state"):
        super().__init__(f"{msg} at t = {t:.9g} s")
        self.t = t


def column_labels(model: str) -> tuple[str, ...]:
    return tuple(f"{n}_{UNITS[n]}" for n in STATE_NAMES[model])


def _finite(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite values")
    return x


def rhs_full5(x, S: ConversionRatios, d: DerivedParams, p: SystemParams) -> np.ndarray:
    IL1r, IL1i, IL2r, IL2i, V2 = _finite(x)
    wM = d.omega_s_M
    Lw1, Lw2 = d.L_w1, d.L_w2
    dw1, dw2 = d.delta_omega1, d.delta_omega2
    return np.array([
        dw1 * IL1i - p.R1 / Lw1 * IL1r + wM / Lw1 * IL2i + S.S1r / Lw1 * p.V1,
        -dw1 * IL1r - p.R1 / Lw1 * IL1i - wM / Lw1 * IL2r + S.S1i / Lw1 * p.V1,
        dw2 * IL2i - p.R2 / Lw2 * IL2r + wM / Lw2 * IL1i + S.S2r / Lw2 * V2,
        -dw2 * IL2r - p.R2 / Lw2 * IL2i - wM / Lw2 * IL1r + S.S2i / Lw2 * V2,
        -(S.S2r * IL2r + S.S2i * IL2i) / p.Cf - V2 / (p.RL * p.Cf),
    ])


def rhs_tuned5(x, d1: float, d2: float, p: SystemParams) -> np.ndarray:
    d1 = check_density(d1, "d1")
    d2 = check_density(d2, "d2")
    IL1r, IL1i, IL2r, IL2i, V2 = _finite(x)
    wM = p.omega_s * p.M
    return np.array([
        -p.R1 / (2 * p.L1) * IL1r + wM / (2 * p.L1) * IL2i + SQRT2_PI / p.L1 * d1 * p.V1,
        -p.R1 / (2 * p.L1) * IL1i - wM / (2 * p.L1) * IL2r,
        -p.R2 / (2 * p.L2) * IL2r + wM / (2 * p.L2) * IL1i,
        -p.R2 / (2 * p.L2) * IL2i - wM / (2 * p.L2) * IL1r + SQRT2_PI / p.L2 * d2 * V2,
        -RATIO_GAIN / p.Cf * d2 * IL2i - V2 / (p.RL * p.Cf),
    ])


def rhs_reduced3(x, d1: float, d2: float, p: SystemParams) -> np.ndarray:
    d1 = check_density(d1, "d1")
    d2 = check_density(d2, "d2")
    IL1r, IL2i, V2 = _finite(x)
    wM = p.omega_s * p.M
    return np.array([
        -p.R1 / (2 * p.L1) * IL1r + wM / (2 * p.L1) * IL2i + SQRT2_PI / p.L1 * d1 * p.V1,
        -p.R2 / (2 * p.L2) * IL2i - wM / (2 * p.L2) * IL1r + SQRT2_PI / p.L2 * d2 * V2,
        -RATIO_GAIN / p.Cf * d2 * IL2i - V2 / (p.RL * p.Cf),
    ])


def residual_matrix(p: SystemParams) -> np.ndarray:
    """State matrix of the uncontrollable (IL1i, IL2r) subsystem."""
    wM = p.omega_s * p.M
    return np.array([
        [-p.R1 / (2 * p.L1), -wM / (2 * p.L1)],
        [wM / (2 * p.L2), -p.R2 / (2 * p.L2)],
    ])


def rhs_residual2(x, p: SystemParams) -> np.ndarray:
    return residual_matrix(p) @ _finite(x)


class ControlSchedule:
    """Piecewise-constant pulse densities, held from each breakpoint to the next."""

    def __init__(self, t, d1, d2):
        t = np.asarray(t, dtype=float).ravel()
        d1 = np.asarray(d1, dtype=float).ravel()
        d2 = np.asarray(d2, dtype=float).ravel()
        if not (len(t) == len(d1) == len(d2)) or len(t) == 0:
            raise ValueError("schedule columns must be non-empty and of equal length")
        if t[0] != 0.0:
            raise ValueError("first breakpoint must be at t = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        for name, d in (("d1", d1), ("d2", d2)):
            if np.any(~np.isfinite(d)) or np.any((d < 0) | (d > 1)):
                raise ValueError(f"{name} values outside [0, 1]")
        self.t, self.d1, self.d2 = t, d1, d2

    @classmethod
    def constant(cls, d1: float, d2: float) -> "ControlSchedule":
        return cls([0.0], [d1], [d2])

    @classmethod
    def steps(cls, rows) -> "ControlSchedule":
        t, d1, d2 = zip(*rows)
        return cls(t, d1, d2)

    @classmethod
    def read_csv(cls, path) -> "ControlSchedule":
        with open(path, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.lstrip().startswith("#"))
            if reader.fieldnames is None or set(reader.fieldnames) != {"t_s", "d1", "d2"}:
                raise ValueError(f"{path}: schedule header must be t_s,d1,d2")
            rows = [(float(r["t_s"]), float(r["d1"]), float(r["d2"])) for r in reader]
        if not rows:
            raise ValueError(f"{path}: empty schedule")
        return cls.steps(rows)

    def __len__(self):
        return len(self.t)

    def value_at(self, t: float) -> tuple[float, float]:
        i = max(int(np.searchsorted(self.t, t, side="right")) - 1, 0)
        return float(self.d1[i]), float(self.d2[i])

    def sample(self, times) -> tuple[np.ndarray, np.ndarray]:
        idx = np.searchsorted(self.t, np.asarray(times, dtype=float), side="right") - 1
        idx = np.clip(idx, 0, len(self.t) - 1)
        return self.d1[idx], self.d2[idx]

    def segments(self, t_end: float):
        """Yield (t_start, t_stop, d1, d2) for each constant piece inside [0, t_end]."""
        for i, t0 in enumerate(self.t):
            if t0 >= t_end:
                break
            t1 = self.t[i + 1] if i + 1 < len(self.t) else t_end
            yield float(t0), float(min(t1, t_end)), float(self.d1[i]), float(self.d2[i])


def fig3_schedule(input: str, low: float = 0.5, high: float = 1.0,
                  t_back: float = 0.5e-3, held: float = 0.5) -> ControlSchedule:
    """Step test: the chosen density goes low -> high at t = 0 and back at ``t_back``."""
    if input == "d1":
        return ControlSchedule.steps([(0.0, high, held), (t_back, low, held)])
    if input == "d2":
        return ControlSchedule.steps([(0.0, held, high), (t_back, held, low)])
    raise ValueError(f"input must be 'd1' or 'd2', got {input!r}")


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    columns: tuple[str, ...]

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape != (len(self.t), len(self.columns)):
            raise ValueError("trajectory shape does not match its columns")

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t_s":
            return self.t
        return self.x[:, self.columns.index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    def to_csv(self, dest=None) -> str | None:
        """Write ``t_s,<columns>`` with 9 significant digits.

        Returns the text when ``dest`` is None, otherwise writes to a path or
        open text stream.
        """
        buf = io.StringIO()
        buf.write(",".join(("t_s",) + tuple(self.columns)) + "\n")
        for t, row in zip(self.t, self.x):
            buf.write(f"{t:.9g}," + ",".join(f"{v:.9g}" for v in row) + "\n")
        text = buf.getvalue()
        if dest is None:
            return text
        if isinstance(dest, (str, Path)):
            Path(dest).write_text(text)
        else:
            dest.write(text)
        return None

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if header[0] != "t_s":
            raise ValueError(f"{path}: first column must be t_s")
        return cls(data[:, 0], data[:, 1:], tuple(header[1:]))


Rhs = Callable[[np.ndarray, float, float], np.ndarray]


def model_rhs(model: str, p: SystemParams, *, ratios=None, derived: DerivedParams | None = None) -> Rhs:
    """Return ``f(x, d1, d2)`` for a named model.

    For ``full5``, ``ratios`` maps (d1, d2) to ConversionRatios (default: the
    tuned mapping) and ``derived`` defaults to ``derive(p)`` including any detune.
    """
    if model == "full5":
        dp = derived if derived is not None else derive(p)
        to_ratios = ratios if ratios is not None else conversion_ratios_tuned
        return lambda x, d1, d2: rhs_full5(x, to_ratios(d1, d2), dp, p)
    if model == "tuned5":
        return lambda x, d1, d2: rhs_tuned5(x, d1, d2, p)
    if model == "reduced3":
        return lambda x, d1, d2: rhs_reduced3(x, d1, d2, p)
    if model == "residual2":
        A = residual_matrix(p)
        return lambda x, d1, d2: A @ x
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def _rk4_segment(f: Rhs, x, t0, t1, d1, d2, max_step, ts, xs):
    n = max(1, math.ceil((t1 - t0) / max_step - 1e-9))
    h = (t1 - t0) / n
    for k in range(n):
        t = t1 if k == n - 1 else t0 + (k + 1) * h
        try:
            k1 = f(x, d1, d2)
            k2 = f(x + 0.5 * h * k1, d1, d2)
            k3 = f(x + 0.5 * h * k2, d1, d2)
            k4 = f(x + h * k3, d1, d2)
        except ValueError:
            # an intermediate stage overflowed
            raise IntegrationError(t) from None
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError(t)
        ts.append(t)
        xs.append(x)
    return x


def _adaptive_segment(f: Rhs, x, t0, t1, d1, d2, rtol, ts, xs):
    n = max(1, math.ceil((t1 - t0) / MAX_SAMPLE_SPACING - 1e-9))
    grid = np.linspace(t0, t1, n + 1)
    sol = solve_ivp(lambda t, y: f(y, d1, d2), (t0, t1), x, method="DOP853",
                    t_eval=grid, rtol=rtol, atol=rtol * 1e-6 * max(1.0, float(np.max(np.abs(x)))))
    if not sol.success or not np.all(np.isfinite(sol.y)):
        bad = sol.t[-1] if len(sol.t) else t0
        raise IntegrationError(float(bad), sol.message if not sol.success else "non-finite state")
    ts.extend(grid[1:])
    xs.extend(sol.y[:, 1:].T)
    return sol.y[:, -1].copy()


def integrate_rhs(f: Rhs, x0, sched: ControlSchedule, t_end: float, columns,
                  *, step: float = DEFAULT_STEP, rtol: float | None = None) -> Trajectory:
    """Integrate ``f(x, d1, d2)`` under ``sched``, restarting at every breakpoint.

    Fixed-step RK4 with step at most ``step`` (adjusted so each piece holds an
    integer number of steps), or DOP853 at relative tolerance ``rtol`` sampled
    at least every microsecond.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if not (0 < step <= MAX_SAMPLE_SPACING):
        raise ValueError(f"step must be in (0, {MAX_SAMPLE_SPACING}] s")
    x = np.array(x0, dtype=float)
    if x.shape != (len(columns),):
        raise ValueError(f"x0 must have {len(columns)} entries")
    if not np.all(np.isfinite(x)):
        raise IntegrationError(0.0)
    ts, xs = [0.0], [x]
    for t0, t1, d1, d2 in sched.segments(t_end):
        if rtol is None:
            x = _rk4_segment(f, x, t0, t1, d1, d2, step, ts, xs)
        else:
            x = _adaptive_segment(f, x, t0, t1, d1, d2, rtol, ts, xs)
    return Trajectory(np.array(ts), np.array(xs), tuple(columns))


def integrate(model: str, x0, sched: ControlSchedule, t_end: float, p: SystemParams,
              *, step: float = DEFAULT_STEP, rtol: float | None = None,
              ratios=None, derived: DerivedParams | None = None) -> Trajectory:
    f = model_rhs(model, p, ratios=ratios, derived=derived)
    return integrate_rhs(f, x0, sched, t_end, column_labels(model), step=step, rtol=rtol)
