"""Physical parameters of a series-series WPT link and their derived quantities.

Covers the resonant/beat frequencies, the equivalent inductances used by the
phasor models, the tuned conversion ratios of the PDM bridges, operating-point
records and the tuned-condition check. Also reads the ``key = value`` config
format used by the command line.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

# fundamental RMS of a unit square wave: (4/pi)/sqrt(2)
RATIO_GAIN = 2.0 * math.sqrt(2.0) / math.pi

CONFIG_KEYS = ("omega_s", "L1", "L2", "C1", "C2", "R1", "R2", "M", "Cf", "RL", "V1")


class ConfigError(ValueError):
    """Raised for malformed, incomplete or unknown configuration entries."""


def check_density(value: float, name: str = "d") -> float:
    """Return ``value`` as float, raising if it is not a pulse density in [0, 1]."""
    v = float(value)
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"pulse density {name}={value!r} outside [0, 1]")
    return v


@dataclass(frozen=True)
class SystemParams:
    L1: float
    L2: float
    C1: float
    C2: float
    R1: float
    R2: float
    M: float
    Cf: float
    RL: float
    omega_s: float
    V1: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v!r}")
            # M = 0 is allowed: it describes a fully decoupled receiver.
            if f.name == "M":
                if v < 0:
                    raise ValueError(f"M must be non-negative, got {v!r}")
            elif v <= 0:
                raise ValueError(f"{f.name} must be strictly positive, got {v!r}")
        if self.M > math.sqrt(self.L1 * self.L2):
            raise ValueError("mutual inductance exceeds sqrt(L1*L2)")

    @property
    def coupling(self) -> float:
        return self.M / math.sqrt(self.L1 * self.L2)

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


TABLE_I = SystemParams(
    L1=75.2e-6,
    L2=75.2e-6,
    C1=400e-12,
    C2=400e-12,
    R1=1.1,
    R2=1.1,
    M=1.17e-6,
    Cf=1e-6,
    RL=21.4,
    omega_s=5.76e6,
    V1=20.0,
)

# Measured operating point of the reference hardware (d1 = d2 = 0.5, V1 = 20 V).
TABLE_II = {"V1": 20.0, "d1": 0.5, "d2": 0.5, "IL1r": 0.93, "IL2i": -1.16, "V2": 11.1}


@dataclass(frozen=True)
class DerivedParams:
    omega_r1: float
    omega_r2: float
    delta_omega1: float
    delta_omega2: float
    L_w1: float
    L_w2: float
    omega_s_M: float


def derive(params: SystemParams, *, force_tuned: bool = False) -> DerivedParams:
    """Resonant and beat frequencies, equivalent inductances and the coupling reactance.

    With ``force_tuned`` the resonances are taken equal to ``omega_s`` so the
    beat frequencies vanish and the equivalent inductances become ``2*L``.
    """
    p = params
    if min(p.L1, p.L2, p.C1, p.C2) <= 0:
        raise ValueError("inductances and capacitances must be positive")
    if force_tuned:
        wr1 = wr2 = p.omega_s
    else:
        wr1 = 1.0 / math.sqrt(p.L1 * p.C1)
        wr2 = 1.0 / math.sqrt(p.L2 * p.C2)
    return DerivedParams(
        omega_r1=wr1,
        omega_r2=wr2,
        delta_omega1=p.omega_s - wr1,
        delta_omega2=p.omega_s - wr2,
        L_w1=(p.omega_s + wr1) / p.omega_s * p.L1,
        L_w2=(p.omega_s + wr2) / p.omega_s * p.L2,
        omega_s_M=p.omega_s * p.M,
    )


def tuned_params(params: SystemParams) -> SystemParams:
    """Copy of ``params`` with C1, C2 adjusted so both tanks resonate exactly at omega_s."""
    w2 = params.omega_s**2
    return params.replace(C1=1.0 / (w2 * params.L1), C2=1.0 / (w2 * params.L2))


@dataclass(frozen=True)
class ConversionRatios:
    S1r: float
    S1i: float
    S2r: float
    S2i: float

    @property
    def S1(self) -> complex:
        return complex(self.S1r, self.S1i)

    @property
    def S2(self) -> complex:
        return complex(self.S2r, self.S2i)


def conversion_ratios_tuned(d1: float, d2: float) -> ConversionRatios:
    """Conversion ratios of the tuned PDM bridges: S1 real, S2 purely imaginary."""
    d1 = check_density(d1, "d1")
    d2 = check_density(d2, "d2")
    return ConversionRatios(RATIO_GAIN * d1, 0.0, 0.0, RATIO_GAIN * d2)


@dataclass(frozen=True)
class OperatingPoint:
    d1: float
    d2: float
    V1: float
    IL1r: float
    IL2i: float
    V2: float

    @property
    def reduced_state(self) -> tuple[float, float, float]:
        return (self.IL1r, self.IL2i, self.V2)

    @property
    def full_state(self) -> tuple[float, float, float, float, float]:
        return (self.IL1r, 0.0, 0.0, self.IL2i, self.V2)


@dataclass(frozen=True)
class TunedReport:
    detune1: float
    detune2: float
    rel_tol: float

    @property
    def passed(self) -> bool:
        return self.detune1 <= self.rel_tol and self.detune2 <= self.rel_tol

    def __str__(self):
        verdict = "tuned" if self.passed else "DETUNED"
        return (
            f"{verdict}: |dw1|/ws = {self.detune1:.4g}, |dw2|/ws = {self.detune2:.4g}"
            f" (tolerance {self.rel_tol:g})"
        )


def validate_tuned(params: SystemParams, rel_tol: float = 0.01) -> TunedReport:
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    d = derive(params)
    return TunedReport(
        detune1=abs(d.delta_omega1) / params.omega_s,
        detune2=abs(d.delta_omega2) / params.omega_s,
        rel_tol=rel_tol,
    )


def parse_config(text: str) -> SystemParams:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} is not a number: {val!r}") from None
    missing = [k for k in CONFIG_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing key(s): {', '.join(missing)}")
    try:
        return SystemParams(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> SystemParams:
    return parse_config(Path(path).read_text())


def format_config(params: SystemParams) -> str:
    d = params.as_dict()
    return "".join(f"{k} = {d[k]!r}\n" for k in CONFIG_KEYS)
