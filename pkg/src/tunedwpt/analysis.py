"""Equilibria, small-signal models, frequency responses and modal structure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import RATIO_GAIN, OperatingPoint, SystemParams, check_density
from .phasor_models import (
    DEFAULT_STEP,
    ControlSchedule,
    Trajectory,
    column_labels,
    integrate,
    integrate_rhs,
    rhs_reduced3,
)

SQRT2_PI = math.sqrt(2.0) / math.pi
INPUTS = ("d1", "d2")
FULL_LABELS = ("IL1r", "IL1i", "IL2r", "IL2i", "V2")

EQUILIBRIUM_TOL = 1e-6
RANK_RTOL = 1e-8


class ResolventError(ArithmeticError):
    """j*omega coincides with an eigenvalue of the state matrix."""


def _input_index(input: str) -> int:
    try:
        return INPUTS.index(input)
    except ValueError:
        raise ValueError(f"input must be 'd1' or 'd2', got {input!r}") from None


def steady_state(p: SystemParams, d1: float, d2: float) -> OperatingPoint:
    """Closed-form equilibrium of the controllable model for constant densities.

    Eliminating V2 = -RL*k*d2*IL2i (k = 2*sqrt(2)/pi) leaves a 2x2 linear
    system in (IL1r, IL2i).
    """
    d1 = check_density(d1, "d1")
    d2 = check_density(d2, "d2")
    X = p.omega_s * p.M
    R2_eff = p.R2 + p.RL * RATIO_GAIN**2 * d2**2
    det = p.R1 * R2_eff + X * X
    if det == 0:
        raise ArithmeticError("singular equilibrium system")
    U1 = RATIO_GAIN * d1 * p.V1
    # -R1*IL1r + X*IL2i = -U1 ;  -X*IL1r - R2_eff*IL2i = 0
    IL1r = U1 * R2_eff / det
    IL2i = -X * U1 / det
    V2 = -p.RL * RATIO_GAIN * d2 * IL2i
    return OperatingPoint(d1=d1, d2=d2, V1=p.V1, IL1r=IL1r, IL2i=IL2i, V2=V2)


def reduced_matrices(p: SystemParams, op: OperatingPoint) -> tuple[np.ndarray, np.ndarray]:
    """Small-signal (A, B) of the controllable model about ``op``."""
    wM = p.omega_s * p.M
    A = np.array([
        [-p.R1 / (2 * p.L1), wM / (2 * p.L1), 0.0],
        [-wM / (2 * p.L2), -p.R2 / (2 * p.L2), SQRT2_PI * op.d2 / p.L2],
        [0.0, -2 * SQRT2_PI * op.d2 / p.Cf, -1.0 / (p.RL * p.Cf)],
    ])
    B = np.array([
        [SQRT2_PI * op.V1 / p.L1, 0.0],
        [0.0, SQRT2_PI * op.V2 / p.L2],
        [0.0, -2 * SQRT2_PI * op.IL2i / p.Cf],
    ])
    return A, B


def equilibrium_residual(p: SystemParams, op: OperatingPoint) -> float:
    """Relative size of the controllable-model derivative at ``op``."""
    x = np.array(op.reduced_state)
    f = rhs_reduced3(x, op.d1, op.d2, p)
    A, B = reduced_matrices(p, op)
    scale = np.abs(A) @ np.abs(x) + np.abs(B) @ np.array([op.d1, op.d2])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(scale > 0, np.abs(f) / scale, np.abs(f))
    return float(np.max(r))


@dataclass(frozen=True)
class LtiModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    op: OperatingPoint

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)


def linearize(p: SystemParams, op: OperatingPoint) -> LtiModel:
    if op.V1 != p.V1:
        raise ValueError("operating point V1 differs from the parameter set")
    res = equilibrium_residual(p, op)
    if res > EQUILIBRIUM_TOL:
        raise ValueError(f"operating point is not an equilibrium (relative residual {res:.3g})")
    A, B = reduced_matrices(p, op)
    return LtiModel(A=A, B=B, C=np.array([0.0, 0.0, 1.0]), op=op)


def transfer_function(m: LtiModel, input: str, omega: float) -> complex:
    """V2 small-signal gain per unit density, C (jw I - A)^-1 B[:, input]."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    return _resolvent_gain(m, _input_index(input), complex(0.0, omega))


def _resolvent_gain(m: LtiModel, col: int, s: complex) -> complex:
    n = m.A.shape[0]
    M = s * np.eye(n) - m.A
    scale = max(abs(s), float(np.max(np.abs(m.A))), 1.0)
    dist = np.min(np.abs(m.eigenvalues - s))
    if dist <= 1e-12 * scale:
        raise ResolventError(f"s = {s} coincides with an eigenvalue of A")
    x = np.linalg.solve(M, m.B[:, col].astype(complex))
    return complex(m.C @ x)


def dc_gain(m: LtiModel, input: str) -> float:
    """-C A^-1 B[:, input]."""
    return float((-m.C @ np.linalg.solve(m.A, m.B[:, _input_index(input)])).real)


def mag_db(g) -> np.ndarray:
    return 20.0 * np.log10(np.abs(g))


def log_grid(fmin: float, fmax: float, points: int) -> np.ndarray:
    if not (0 < fmin < fmax):
        raise ValueError("frequency bounds must satisfy 0 < fmin < fmax")
    if points < 2:
        raise ValueError("need at least two frequency points")
    return np.logspace(math.log10(fmin), math.log10(fmax), points)


def bode(m: LtiModel, input: str, f_hz) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complex gain, magnitude (dB) and unwrapped phase (deg) on a frequency grid."""
    f_hz = np.asarray(f_hz, dtype=float)
    g = np.array([transfer_function(m, input, 2 * math.pi * f) for f in f_hz])
    return g, mag_db(g), np.degrees(np.unwrap(np.angle(g)))


def tuned5_matrices(p: SystemParams, op: OperatingPoint) -> tuple[np.ndarray, np.ndarray]:
    """5-state small-signal (A, B) of the tuned model about ``op`` (residual states at 0)."""
    Ar, Br = reduced_matrices(p, op)
    A = np.zeros((5, 5))
    B = np.zeros((5, 2))
    idx = [0, 3, 4]
    A[np.ix_(idx, idx)] = Ar
    B[idx, :] = Br
    res = [1, 2]
    wM = p.omega_s * p.M
    A[np.ix_(res, res)] = [
        [-p.R1 / (2 * p.L1), -wM / (2 * p.L1)],
        [wM / (2 * p.L2), -p.R2 / (2 * p.L2)],
    ]
    return A, B


def controllability_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


@dataclass(frozen=True)
class ModalReport:
    eigenvalues: np.ndarray
    rank: int
    singular_values: np.ndarray
    controllable_basis: np.ndarray
    uncontrollable_basis: np.ndarray
    uncontrollable_eigenvalues: np.ndarray
    labels: tuple[str, ...] = FULL_LABELS

    def format(self) -> str:
        def vec(v):
            return "[" + ", ".join(f"{c: .6f}" for c in np.round(v, 6) + 0.0) + "]"

        def eig(z):
            return f"{z.real:.6g} {'+' if z.imag >= 0 else '-'} j{abs(z.imag):.6g}"

        lines = [f"states: {', '.join(self.labels)}", "eigenvalues (1/s):"]
        lines += [f"  {eig(z)}" for z in self.eigenvalues]
        lines.append(f"controllability rank: {self.rank} of {len(self.labels)}")
        lines.append("controllable subspace basis:")
        lines += [f"  {vec(v)}" for v in self.controllable_basis.T]
        lines.append("uncontrollable subspace basis:")
        lines += [f"  {vec(v)}" for v in self.uncontrollable_basis.T]
        lines.append("uncontrollable eigenvalues (1/s):")
        lines += [f"  {eig(z)}" for z in self.uncontrollable_eigenvalues]
        return "\n".join(lines)


def _sorted_eigs(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((z.imag, z.real))]


def controllability_rank(A: np.ndarray, B: np.ndarray, rtol: float = RANK_RTOL):
    """Numerical rank of the Kalman matrix and its left singular vectors.

    A and B are normalised first; rank is invariant under time scaling and
    this keeps the high powers of A from swamping the singular values.
    """
    a = float(np.linalg.norm(A, 2)) or 1.0
    b = float(np.linalg.norm(B, 2)) or 1.0
    K = controllability_matrix(A / a, B / b)
    U, s, _ = np.linalg.svd(K)
    rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
    return rank, s, U


def modal_analysis(p: SystemParams, op: OperatingPoint) -> ModalReport:
    A, B = tuned5_matrices(p, op)
    rank, s, U = controllability_rank(A, B)
    Uc, Uu = U[:, :rank], U[:, rank:]
    # canonical sign: largest component positive
    for V in (Uc, Uu):
        for j in range(V.shape[1]):
            if V[np.argmax(np.abs(V[:, j])), j] < 0:
                V[:, j] *= -1
    Auu = Uu.T @ A @ Uu
    return ModalReport(
        eigenvalues=_sorted_eigs(np.linalg.eigvals(A)),
        rank=rank,
        singular_values=s,
        controllable_basis=Uc,
        uncontrollable_basis=Uu,
        uncontrollable_eigenvalues=_sorted_eigs(np.linalg.eigvals(Auu)) if Uu.size else np.array([]),
    )


def slowest_decay_rate(m: LtiModel) -> float:
    """|Re| of the eigenvalue closest to the imaginary axis."""
    return float(np.min(np.abs(m.eigenvalues.real)))


ENVELOPE_COLUMNS = ("IL1r_A", "IL2i_A", "V2_V", "env_iL1_A", "env_iL2_A")


def _with_envelopes(t, x) -> Trajectory:
    env = math.sqrt(2.0) * np.abs(x[:, :2])
    return Trajectory(t, np.hstack([x, env]), ENVELOPE_COLUMNS)


def step_response(p: SystemParams, input: str, from_: float, to: float, t_end: float,
                  *, t_back: float | None = None, linear: bool = False, held: float = 0.5,
                  step: float = DEFAULT_STEP, rtol: float | None = None) -> Trajectory:
    """Response to stepping one density from ``from_`` to ``to`` at t = 0.

    Starts at the equilibrium for ``from_`` (the other density held at
    ``held``). With ``t_back`` the density returns to ``from_`` at that time.
    ``linear`` integrates the small-signal model about the starting
    equilibrium and adds the operating point back. Columns hold the states
    and the predicted envelopes sqrt(2)|IL1r|, sqrt(2)|IL2i|.
    """
    col = _input_index(input)
    from_ = check_density(from_, "from")
    to = check_density(to, "to")
    held = check_density(held, "held")

    def dens(v):
        return (v, held) if col == 0 else (held, v)

    rows = [(0.0, *dens(to))]
    if t_back is not None:
        rows.append((t_back, *dens(from_)))
    sched = ControlSchedule.steps(rows)
    op = steady_state(p, *dens(from_))
    x0 = np.array(op.reduced_state)

    if not linear:
        traj = integrate("reduced3", x0, sched, t_end, p, step=step, rtol=rtol)
        return _with_envelopes(traj.t, traj.x)

    m = linearize(p, op)
    d_op = np.array(dens(from_))

    def f(x, d1, d2):
        return m.A @ x + m.B @ (np.array([d1, d2]) - d_op)

    traj = integrate_rhs(f, np.zeros(3), sched, t_end, column_labels("reduced3"),
                         step=step, rtol=rtol)
    return _with_envelopes(traj.t, traj.x + x0)
