"""Command-line front end: ``tunedwpt {steady,sim,bode,modes,envelope}``.

Exit codes: 0 success, 1 numerical failure, 2 input or configuration error.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import (
    bode,
    dc_gain,
    linearize,
    log_grid,
    mag_db,
    modal_analysis,
    steady_state,
)
from .params import TABLE_II, ConfigError, load_config, validate_tuned
from .phasor_models import MODELS, ControlSchedule, Trajectory, integrate
from .signals import cycle_average, extract_envelope, measure_frequency_response
from .switched import circuit_state_from_phasor, settle, simulate_switched

BUNDLED = ("tableI.cfg", "fig3a.csv", "fig3b.csv")
SWITCHED_AMPLITUDE = 0.1


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("tunedwpt") / "data" / name))


def _resolve(arg: str) -> Path:
    """A filesystem path, or the name of a bundled asset (with or without suffix)."""
    path = Path(arg)
    if path.exists():
        return path
    for name in BUNDLED:
        if arg in (name, Path(name).stem):
            return bundled_path(name)
    raise FileNotFoundError(f"no such file: {arg}")


def _write(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",")]


def cmd_steady(args) -> int:
    p = load_config(_resolve(args.config))
    op = steady_state(p, args.d1, args.d2)
    print(f"operating point: d1 = {op.d1:g}, d2 = {op.d2:g}, V1 = {op.V1:g} V")
    print(f"  IL1r = {op.IL1r:.6g} A")
    print(f"  IL2i = {op.IL2i:.6g} A")
    print(f"  V2   = {op.V2:.6g} V")
    if op.d1 > 0:
        m = linearize(p, op)
        print(f"  dc gain V2/d1 = {dc_gain(m, 'd1'):.6g} V, V2/d2 = {dc_gain(m, 'd2'):.6g} V")
    print(f"  {validate_tuned(p, args.rel_tol)}")
    r = TABLE_II
    print(f"reference (measured, d1 = d2 = {r['d1']}, V1 = {r['V1']} V): "
          f"IL1r {r['IL1r']} A, IL2i {r['IL2i']} A, V2 {r['V2']} V")
    return 0


def cmd_sim(args) -> int:
    p = load_config(_resolve(args.config))
    sched = (ControlSchedule.read_csv(_resolve(args.schedule)) if args.schedule
             else ControlSchedule.constant(args.d1, args.d2))
    op = steady_state(p, args.d1, args.d2)
    x0 = _floats(args.x0) if args.x0 else None
    if args.model == "switched":
        if x0 is None:
            x0 = circuit_state_from_phasor(p, op)
        if args.settle > 0:
            x0 = settle(p, args.d1, args.d2, args.settle, x0=x0, dt=args.dt)
        run = simulate_switched(p, sched, args.t_end, args.dt, x0=x0,
                                record_every=args.record_every)
        traj = run.traj
    else:
        if x0 is None:
            if args.model == "residual2":
                x0 = [1.0, 1.0]
            elif args.model == "reduced3":
                x0 = op.reduced_state
            else:
                x0 = op.full_state
        kw = {"rtol": args.rtol}
        if args.step is not None:
            kw["step"] = args.step
        traj = integrate(args.model, x0, sched, args.t_end, p, **kw)
    _write(traj.to_csv(), args.out)
    return 0


def cmd_bode(args) -> int:
    p = load_config(_resolve(args.config))
    f = log_grid(args.fmin, args.fmax, args.points)
    op = steady_state(p, args.d1, args.d2)
    m = linearize(p, op)
    buf = io.StringIO()
    if args.source == "analytic":
        _, mag, ph = bode(m, args.input, f)
        buf.write("f_Hz,mag_dB,phase_deg\n")
        if args.dc:
            g0 = dc_gain(m, args.input)
            buf.write(f"0,{20 * math.log10(abs(g0)):.9g},{180.0 if g0 < 0 else 0.0:.9g}\n")
        for row in zip(f, mag, ph):
            buf.write(",".join(f"{v:.9g}" for v in row) + "\n")
    else:
        amp = args.amplitude
        if amp is None:
            amp = SWITCHED_AMPLITUDE if args.source == "switched" else 0.02
        g = np.array([measure_frequency_response(args.source, args.input, fi, p, op,
                                                 amplitude=amp) for fi in f])
        ph = np.degrees(np.unwrap(np.angle(g)))
        buf.write("f_Hz,mag_dB,phase_deg,source\n")
        for fi, mi, pi in zip(f, mag_db(g), ph):
            buf.write(f"{fi:.9g},{mi:.9g},{pi:.9g},{args.source}\n")
    _write(buf.getvalue(), args.out)
    return 0


def cmd_modes(args) -> int:
    p = load_config(_resolve(args.config))
    report = validate_tuned(p, args.rel_tol)
    if not report.passed:
        print(f"error: {report}; the tuned decomposition does not apply", file=sys.stderr)
        return 2
    op = steady_state(p, args.d1, args.d2)
    print(f"# {report}")
    print(f"# operating point: d1 = {op.d1:g}, d2 = {op.d2:g}, "
          f"IL1r = {op.IL1r:.6g} A, IL2i = {op.IL2i:.6g} A, V2 = {op.V2:.6g} V")
    print(modal_analysis(p, op).format())
    return 0


def cmd_envelope(args) -> int:
    p = load_config(_resolve(args.config))
    traj = Trajectory.read_csv(args.waveform)
    if args.column not in traj.columns:
        raise ValueError(f"column {args.column!r} not in {traj.columns}")
    x = traj[args.column]
    if args.mean:
        t, v = cycle_average(traj.t, x, p.omega_s)
        text = "t_s,mean\n" + "".join(f"{a:.9g},{b:.9g}\n" for a, b in zip(t, v))
    else:
        text = extract_envelope(traj.t, x, p.omega_s).to_csv()
    _write(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tunedwpt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, densities=True):
        sp.add_argument("--config", default="tableI.cfg",
                        help="parameter file or bundled name (default: tableI.cfg)")
        if densities:
            sp.add_argument("--d1", type=float, default=0.5, help="operating inverter density")
            sp.add_argument("--d2", type=float, default=0.5, help="operating rectifier density")
        sp.add_argument("--rel-tol", type=float, default=0.01, help="tuned-condition tolerance")

    sp = sub.add_parser("steady", help="closed-form operating point")
    common(sp)
    sp.set_defaults(func=cmd_steady)

    sp = sub.add_parser("sim", help="time-domain simulation to CSV")
    common(sp)
    sp.add_argument("--model", choices=MODELS + ("switched",), default="reduced3")
    sp.add_argument("--schedule", help="CSV t_s,d1,d2 or bundled fig3a/fig3b "
                    "(default: constant --d1/--d2)")
    sp.add_argument("--t-end", type=float, default=1e-3)
    sp.add_argument("--x0", help="comma-separated initial state "
                    "(default: equilibrium at --d1/--d2; (1,1) for residual2)")
    sp.add_argument("--step", type=float, help="fixed RK4 step for phasor models (s)")
    sp.add_argument("--rtol", type=float, help="use the adaptive integrator at this tolerance")
    sp.add_argument("--dt", type=float, help="switched-model step (s), default T_s/512")
    sp.add_argument("--settle", type=float, default=0.0,
                    help="switched model: pre-run at --d1/--d2 for this long (s)")
    sp.add_argument("--record-every", type=int, default=1)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("bode", help="small-signal V2 frequency response to CSV")
    common(sp)
    sp.add_argument("--input", choices=("d1", "d2"), default="d1")
    sp.add_argument("--fmin", type=float, default=1e3)
    sp.add_argument("--fmax", type=float, default=1e5)
    sp.add_argument("--points", type=int, default=121)
    sp.add_argument("--source", choices=("analytic", "nonlinear", "switched"), default="analytic")
    sp.add_argument("--amplitude", type=float,
                    help=f"injection amplitude (default 0.02; {SWITCHED_AMPLITUDE} for switched)")
    sp.add_argument("--dc", action="store_true", help="prepend the dc gain as an f = 0 row")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_bode)

    sp = sub.add_parser("modes", help="eigenvalues and controllability decomposition")
    common(sp)
    sp.set_defaults(func=cmd_modes)

    sp = sub.add_parser("envelope", help="envelope or cycle mean of a switched waveform CSV")
    common(sp, densities=False)
    sp.add_argument("--waveform", required=True, help="CSV written by 'sim --model switched'")
    sp.add_argument("--column", default="iL1_A")
    sp.add_argument("--mean", action="store_true", help="per-cycle mean instead of envelope")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_envelope)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        # overflow is reported as a numerical failure below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
