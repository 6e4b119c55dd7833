import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tunedwpt.analysis import steady_state
from tunedwpt.phasor_models import ControlSchedule, IntegrationError
from tunedwpt.signals import cycle_average, extract_envelope
from tunedwpt.switched import (
    WAVEFORM_COLUMNS,
    circuit_state_from_phasor,
    energy_audit,
    inverter_voltage,
    inverter_waveform,
    pdm_from_densities,
    pdm_pattern,
    rectifier_voltage,
    settle,
    simulate_switched,
)


def test_pdm_examples():
    assert pdm_pattern(1.0, 6).all()
    assert list(pdm_pattern(0.5, 4)) == [False, True, False, True]
    assert list(pdm_pattern(0.75, 4)) == [False, True, True, True]
    assert not pdm_pattern(0.0, 10).any()
    with pytest.raises(ValueError):
        pdm_pattern(1.1, 4)
    with pytest.raises(ValueError):
        pdm_pattern(0.5, 0)


@given(st.floats(0, 1), st.integers(1, 400))
def test_pdm_window_error_below_one_over_n(d, n):
    pat = pdm_pattern(d, 1200)
    # any window of n cycles holds within one pulse of d*n
    c = np.concatenate([[0], np.cumsum(pat)])
    counts = c[n:] - c[:-n]
    assert np.all(np.abs(counts / n - d) < 1.0 / n + 1e-12)


@pytest.mark.parametrize("d", [0.1, 0.37, 0.5, 0.731, 0.999])
def test_pdm_density_over_1000_cycles(d):
    pat = pdm_pattern(d, 5000)
    c = np.concatenate([[0], np.cumsum(pat)])
    frac = (c[1000:] - c[:-1000]) / 1000
    assert np.max(np.abs(frac - d)) <= 1e-3 + 1e-12


def test_pdm_time_varying_tracks_mean():
    ds = 0.5 + 0.3 * np.sin(np.linspace(0, 20, 4000))
    pat = pdm_from_densities(ds)
    assert abs(pat.sum() - ds.sum()) < 1.0


def test_inverter_voltage():
    w = 2 * math.pi * 1e5
    assert inverter_voltage(0.0, True, 20.0, w) == 20.0
    assert inverter_voltage(0.3e-5, True, 20.0, w) == -20.0
    assert inverter_voltage(0.123e-5, False, 20.0, w) == 0.0


@pytest.mark.parametrize("d", [0.25, 0.5, 0.8, 1.0])
def test_inverter_fundamental_rms(d):
    w = 5.76e6
    T = 2 * math.pi / w
    # 640 cycles holds a whole number of pattern periods for each density here
    n_cycles, n = 640, 512
    t = (np.arange(n_cycles * n) + 0.5) * (T / n)
    u = inverter_waveform(t, pdm_pattern(d, n_cycles), 20.0, w)
    # DFT bin at the switching frequency
    c = 2 * np.mean(u * np.exp(-1j * w * t))
    assert abs(c) / math.sqrt(2) == pytest.approx(2 * math.sqrt(2) / math.pi * d * 20.0, rel=1e-3)
    assert abs(np.angle(c)) < 1e-2


def test_rectifier_voltage_convention():
    assert rectifier_voltage(0.7, 10.0, True) == (-10.0, 0.7)
    assert rectifier_voltage(-0.7, 10.0, True) == (10.0, 0.7)
    assert rectifier_voltage(0.7, 10.0, False) == (0.0, 0.0)
    for i in (-2.0, -0.1, 0.0, 0.3, 5.0):
        u2, ir = rectifier_voltage(i, 7.0, True)
        assert u2 * i == pytest.approx(-7.0 * ir)


@pytest.fixture(scope="module")
def tuned_run():
    from tunedwpt.params import TABLE_I, tuned_params

    q = tuned_params(TABLE_I)
    op = steady_state(q, 0.5, 0.5)
    run = simulate_switched(q, ControlSchedule.constant(0.5, 0.5), 2e-3,
                            x0=circuit_state_from_phasor(q, op))
    return q, op, run


def test_oracle_steady_state_table_i(p, op):
    run = simulate_switched(p, ControlSchedule.constant(0.5, 0.5), 2e-3)
    assert run.traj.columns == WAVEFORM_COLUMNS
    tc, v2 = cycle_average(run.traj.t, run.traj["v2_V"], p.omega_s)
    assert np.mean(v2[-100:]) == pytest.approx(op.V2, rel=0.05)
    env = extract_envelope(run.traj.t, run.traj["iL1_A"], p.omega_s)
    assert np.mean(env.amp[-100:]) == pytest.approx(math.sqrt(2) * op.IL1r, rel=0.05)


def test_oracle_grid_alignment(tuned_run):
    q, op, run = tuned_run
    assert run.steps_per_cycle == 512
    T = 2 * math.pi / q.omega_s
    assert run.dt == T / 512
    assert run.traj.t[-1] == pytest.approx(len(run.pattern1) * T, rel=1e-12)


def test_oracle_phase_quadrature(tuned_run):
    q, op, run = tuned_run
    e1 = extract_envelope(run.traj.t, run.traj["iL1_A"], q.omega_s)
    e2 = extract_envelope(run.traj.t, run.traj["iL2_A"], q.omega_s)
    dphi = np.degrees(np.angle(np.exp(1j * (e2.phase[-200:] - e1.phase[-200:]))))
    assert np.mean(np.abs(dphi)) == pytest.approx(90, abs=3)


def test_rectifier_fundamental_opposes_current(tuned_run):
    q, op, run = tuned_run
    tr = run.traj
    n = 512 * 200
    t, u2, i2 = tr.t[-n:], tr["u2_V"][-n:], tr["iL2_A"][-n:]
    ph = np.exp(-1j * q.omega_s * t)
    cu, ci = np.mean(u2 * ph), np.mean(i2 * ph)
    corr = cu * np.conj(ci)
    assert corr.real < 0
    assert abs(corr.imag) < 0.05 * abs(corr.real)


def test_energy_audit(tuned_run):
    q, op, run = tuned_run
    audit = energy_audit(run, q, 400)
    assert audit.imbalance < 0.02
    assert audit.p_in > 0 and audit.p_out > 0 and audit.p_esr > 0


def test_decoupled_receiver(p):
    q = p.replace(M=0.0)
    v0 = 5.0
    run = simulate_switched(q, ControlSchedule.constant(0.5, 0.0), 1e-4,
                            x0=[0, 0, 0, 0, v0])
    assert np.all(run.traj["iL2_A"] == 0.0)
    tau = q.RL * q.Cf
    np.testing.assert_allclose(run.traj["v2_V"], v0 * np.exp(-run.traj.t / tau), rtol=1e-9)


def test_v2_stays_nonnegative(p):
    run = simulate_switched(p, ControlSchedule.steps([(0, 1, 1), (3e-4, 0, 1)]), 6e-4,
                            record_every=4)
    assert np.all(run.traj["v2_V"] >= 0)


def test_settle_returns_state(p, op):
    x = settle(p, 0.5, 0.5, 1e-4, x0=circuit_state_from_phasor(p, op))
    assert x.shape == (5,) and np.all(np.isfinite(x))


def test_oracle_input_validation(p):
    sched = ControlSchedule.constant(0.5, 0.5)
    T = 2 * math.pi / p.omega_s
    with pytest.raises(ValueError, match="dt"):
        simulate_switched(p, sched, 1e-5, dt=T / 64)
    with pytest.raises(ValueError, match="singular"):
        simulate_switched(p.replace(M=math.sqrt(p.L1 * p.L2)), sched, 1e-5)
    with pytest.raises(ValueError):
        simulate_switched(p, sched, 1e-5, record_every=3)
    with pytest.raises(IntegrationError):
        simulate_switched(p, sched, 1e-5, x0=[math.inf, 0, 0, 0, 0])


def test_circuit_state_from_phasor(p, op):
    x = circuit_state_from_phasor(p, op)
    assert x[0] == pytest.approx(math.sqrt(2) * op.IL1r)
    assert x[2] == 0.0 and x[1] == 0.0
    assert x[3] == pytest.approx(math.sqrt(2) * op.IL2i / (p.omega_s * p.C2))
    assert x[4] == op.V2
