"""Command-line interface: sweeps, pulse traces, fits, array workloads, reports.

Exit codes: 0 success, 2 configuration error, 3 fit failure.  All outputs are
CSV with header rows and SI units; identical config and seed give
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import conduction as cnd
from . import crossbar as xb
from . import device as dev
from . import inference as inf
from . import variability as var
from .config import (
    STREAM_EVAL_BASE,
    STREAM_TRAINING,
    STREAM_WORKLOAD,
    SimConfig,
    apply_master_seed,
    load_config,
)
from .errors import ConfigError, FitError

IV_CSV_HEADER = ("voltage_V", "temperature_K", "state", "current_A", "resistance_ohm")


def _write_csv(path: Path, header: tuple, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.12e}"


def _parse_temps(raw: str | None, default: float) -> list[float]:
    if not raw:
        return [default]
    try:
        temps = [float(s) for s in raw.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid --temps value {raw!r}: {exc}") from exc
    if not temps or any(t <= 0 for t in temps):
        raise ConfigError(f"temperatures must be positive, got {raw!r}")
    return temps


def cmd_iv(config: SimConfig, out: Path, temps: list[float]) -> None:
    """Voltage/current/resistance grid for both endpoint states."""
    params = config.device
    grid = [v for v in np.linspace(-cnd.V_READ_SWEEP_MAX, cnd.V_READ_SWEEP_MAX, 61) if v != 0]
    rows = []
    for t in temps:
        for name, g in (("lrs", params.g_lrs), ("hrs", params.g_hrs)):
            for v in grid:
                i = cnd.current(v, g, t, params.conduction)
                rows.append([_fmt(v), _fmt(t), name, _fmt(i), _fmt(v / i)])
    _write_csv(out / "iv_sweep.csv", IV_CSV_HEADER, rows)
    print(f"wrote {out / 'iv_sweep.csv'} ({len(rows)} rows)")


def cmd_pulse(config: SimConfig, out: Path, n_pot: int, n_dep: int) -> None:
    """Potentiation/depression staircase under the configured scheme."""
    params = config.device
    n_pot = n_pot if n_pot >= 0 else params.n_levels
    n_dep = n_dep if n_dep >= 0 else params.n_levels
    noise = None
    if config.variability.sigma_c2c > 0:
        rng = np.random.default_rng(config.variability.seed)
        noise = var.step_sampler(config.variability, rng)
    trace, _ = dev.run_sequence(dev.DeviceState.fresh(params), config.scheme,
                                n_pot, n_dep, params, noise=noise)
    dev.write_trace_csv(out / "pulse_trace.csv", trace)
    print(f"wrote {out / 'pulse_trace.csv'} ({len(trace)} rows)")


def _fit_sweep_file(config: SimConfig, path: Path, rows: list) -> None:
    p = config.device.conduction
    data = cnd.SweepRecord.from_csv(path)
    low = data.restrict(0.0, p.v_ohmic_max)
    if len(low):
        fit = cnd.fit_ohmic(low)
        rows += [
            [path.name, "ohmic", "e_a_eV", _fmt(fit.e_a)],
            [path.name, "ohmic", "ln_prefactor", _fmt(fit.ln_prefactor)],
            [path.name, "ohmic", "max_flatness_residual", _fmt(fit.max_flatness_residual)],
            [path.name, "ohmic", "r_squared", _fmt(fit.r_squared)],
        ]
        rows += [[path.name, "ohmic", "warning", w] for w in fit.warnings]
    high = data.restrict(p.v_pf_min, cnd.V_READ_SWEEP_MAX)
    if len(high):
        fit = cnd.fit_poole_frenkel(high)
        rows += [
            [path.name, "poole_frenkel", "phi_b_eV", _fmt(fit.phi_b)],
            [path.name, "poole_frenkel", "beta_eV_per_sqrtV", _fmt(fit.beta)],
            [path.name, "poole_frenkel", "ln_prefactor", _fmt(fit.ln_prefactor)],
            [path.name, "poole_frenkel", "r_squared", _fmt(fit.r_squared)],
        ]
        rows += [[path.name, "poole_frenkel", "warning", w] for w in fit.warnings]
        rows += [[path.name, "poole_frenkel", "note", n] for n in fit.notes]
    if not len(low) and not len(high):
        raise FitError(f"{path}: no samples inside the configured fit windows")


def _fit_trace_file(path: Path, rows: list) -> None:
    points = dev.read_trace_csv(path)
    for direction in ("potentiation", "depression"):
        branch = [pt for pt in points if pt.direction == direction]
        if len(branch) < 5:
            continue
        fit = dev.fit_update_curve([pt.count for pt in branch],
                                   [pt.conductance for pt in branch])
        rows += [
            [path.name, f"update_{direction}", "nu", _fmt(fit.nu)],
            [path.name, f"update_{direction}", "sigma0", _fmt(fit.sigma0)],
            [path.name, f"update_{direction}", "rms_residual", _fmt(fit.rms_residual)],
        ]
        rows += [[path.name, f"update_{direction}", "warning", w] for w in fit.warnings]


def cmd_fit(config: SimConfig, out: Path, files: list[str]) -> None:
    """Extract model parameters from sweep and trace CSV files."""
    if not files:
        raise ConfigError("fit requires at least one input file")
    rows: list = []
    for name in files:
        path = Path(name)
        try:
            header = tuple(next(csv.reader(open(path, newline=""))))
        except (OSError, StopIteration) as exc:
            raise FitError(f"cannot read {path}: {exc}") from exc
        if header == cnd.SweepRecord.CSV_HEADER:
            _fit_sweep_file(config, path, rows)
        elif header == dev.TRACE_CSV_HEADER:
            _fit_trace_file(path, rows)
        else:
            raise FitError(f"{path}: unrecognized header {header!r}")
    _write_csv(out / "fit_report.csv", ("file", "model", "parameter", "value"), rows)
    for row in rows:
        print(" ".join(str(c) for c in row))
    print(f"wrote {out / 'fit_report.csv'}")


def cmd_xbar(config: SimConfig, out: Path, n_writes: int) -> None:
    """Program, read and disturb-count a crossbar of the configured geometry."""
    params = config.device
    xbar = xb.Crossbar.create(config.crossbar.rows, config.crossbar.cols, params,
                              config.variability, config.crossbar.bias, config.scheme)
    rng = np.random.default_rng(var.derive_seed(config.seed, STREAM_WORKLOAD))

    # Closed-loop programming of a random mid-range pattern.
    t_norm = rng.uniform(0.3, 0.95, size=xbar.w.shape)
    target = params.g_hrs + t_norm * (params.g_lrs - params.g_hrs)
    report = xb.program_write_verify(xbar, target, tol=0.05)
    _write_csv(out / "xbar_program.csv", ("metric", "value"), [
        ["rows", xbar.rows],
        ["cols", xbar.cols],
        ["converged_fraction", _fmt(report.converged_fraction)],
        ["mean_iterations", _fmt(report.mean_iterations)],
        ["max_iterations", report.max_iterations],
        ["clipped_cells", report.clipped_cells],
    ])

    # One analog read with a random input vector.
    v_in = config.crossbar.bias.v_read * rng.uniform(-1.0, 1.0, size=xbar.rows)
    currents = xb.read_vmm(xbar, v_in)
    _write_csv(out / "xbar_read.csv", ("col", "current_A"),
               [[j, _fmt(i)] for j, i in enumerate(currents)])

    # Random single-cell writes under the half-bias scheme.
    disturbed = 0
    for _ in range(n_writes):
        r = int(rng.integers(xbar.rows))
        c = int(rng.integers(xbar.cols))
        amp = config.crossbar.bias.v_write_pot if rng.random() < 0.5 else config.crossbar.bias.v_write_dep
        pulse = dev.PulseSpec(amp, params.t_width_ref, config.scheme)
        disturbed += xb.write_cell(xbar, r, c, pulse).disturbed
    sneak = xb.sneak_ratio(xbar, xbar.rows // 2, xbar.cols // 2, 0.5)
    _write_csv(out / "xbar_disturb.csv", ("metric", "value"), [
        ["writes", n_writes],
        ["disturbed_cells", disturbed],
        ["sneak_ratio_at_0.5V", _fmt(sneak)],
    ])
    xbar.snapshot_csv(out / "xbar_snapshot.csv")
    print(f"wrote {out / 'xbar_program.csv'}, xbar_read.csv, xbar_disturb.csv, xbar_snapshot.csv")


def cmd_infer(config: SimConfig, out: Path, dataset: str | None, n_seeds: int,
              hidden: list[int], mode: str) -> None:
    """Analog-vs-float accuracy over Monte-Carlo device replicas."""
    if dataset:
        x, y = inf.load_dataset_csv(dataset)
    else:
        x, y = inf.make_blobs_dataset()
    n_classes = int(y.max()) + 1
    spec = inf.MLPSpec((x.shape[1], *hidden, n_classes))
    weights = inf.train_mlp(x, y, spec, seed=var.derive_seed(config.seed, STREAM_TRAINING))

    rows = []
    per_class_header = [f"class_{k}_analog" for k in range(n_classes)]
    for s in range(n_seeds):
        vp = replace(config.variability, seed=var.derive_seed(config.seed, STREAM_EVAL_BASE + s))
        net = inf.program_network(weights, config.device, vp, mode=mode, scheme=config.scheme)
        report = inf.evaluate(net, x, y, weights)
        rows.append([s, _fmt(report.analog_accuracy), _fmt(report.baseline_accuracy),
                     _fmt(report.degradation_points)]
                    + [_fmt(a) for a in report.per_class_analog])
        print(f"seed {s}: analog {report.analog_accuracy:.4f} "
              f"baseline {report.baseline_accuracy:.4f} "
              f"degradation {report.degradation_points:+.2f} points")
    _write_csv(out / "infer_report.csv",
               ("seed", "analog_accuracy", "baseline_accuracy", "degradation_points",
                *per_class_header), rows)
    print(f"wrote {out / 'infer_report.csv'}")


def cmd_bench(config: SimConfig, out: Path) -> None:
    """One-page device summary, every figure computed from simulation."""
    params = config.device
    p = params.conduction
    lrs = dev.DeviceState.fresh(params, w=1.0)
    hrs = dev.DeviceState.fresh(params, w=0.0)
    t_ref = p.t_ref

    i_lrs = cnd.current(0.1, lrs.conductance, t_ref, p)
    i_hrs = cnd.current(0.1, hrs.conductance, t_ref, p)
    r_on = dev.read_resistance(lrs, 0.1, t_ref, params)

    trace, _ = dev.run_sequence(dev.DeviceState.fresh(params), config.scheme,
                                params.n_levels, params.n_levels, params)
    pot = [pt for pt in trace if pt.direction == "potentiation"]
    dep = [pt for pt in trace if pt.direction == "depression"]
    nu_p = dev.fit_update_curve([pt.count for pt in pot], [pt.conductance for pt in pot]).nu
    nu_d = dev.fit_update_curve([pt.count for pt in dep], [pt.conductance for pt in dep]).nu

    e_dep = dev.write_energy(hrs, dev.PulseSpec(params.v_reset_full, params.t_width_ref))
    e_pot = dev.write_energy(lrs, dev.PulseSpec(params.v_set_full, params.t_width_ref))

    rng = np.random.default_rng(config.variability.seed)
    steps = var.truncated_normal(rng, config.variability.sigma_c2c, size=10_000)
    c2c = float(np.std(steps)) if config.variability.sigma_c2c > 0 else 0.0
    g_hrs_pop, _ = var.sample_endpoint_arrays(10_000, params, config.variability, rng)
    d2d = float(np.std(np.log(g_hrs_pop)))

    coercive_field_mv_cm = abs(params.v_set_full) / (params.hzo_thickness_nm * 1e-7) / 1e6
    loop = dev.hysteresis_loop(params, params.v_set_full - 0.4, params.v_reset_full + 0.6, 101)
    _, _, window = dev.extract_memory_window(loop)

    rows = [
        ("nonlinearity_potentiation", f"{nu_p:.3g}", "dimensionless"),
        ("nonlinearity_depression", f"{-nu_d:.3g}", "dimensionless"),
        ("r_on", _fmt(r_on), "ohm"),
        ("on_off", _fmt(i_lrs / i_hrs), "dimensionless"),
        ("depression_write", f"{params.v_reset_full:g} V / {params.t_width_ref:g} s", ""),
        ("potentiation_write", f"{params.v_set_full:g} V / {params.t_width_ref:g} s", ""),
        ("depression_energy", _fmt(e_dep), "J"),
        ("potentiation_energy", _fmt(e_pot), "J"),
        ("cycle_to_cycle_sigma", _fmt(c2c), "relative"),
        ("device_to_device_sigma", _fmt(d2d), "ln(S)"),
        ("memory_window", _fmt(window), "V"),
        ("coercive_field", f"{coercive_field_mv_cm:.3g}", "MV/cm"),
        ("nonlinearity_ratio_0.5V", _fmt(cnd.nonlinearity_ratio(0.5, t_ref, p)), "dimensionless"),
        ("area", f"{params.area:g}", "um^2"),
    ]
    _write_csv(out / "bench.csv", ("metric", "value", "unit"), rows)
    width = max(len(r[0]) for r in rows)
    for name, value, unit in rows:
        print(f"{name:<{width}}  {value} {unit}".rstrip())
    print(f"wrote {out / 'bench.csv'}")


def _add_common_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Registered on the main parser and again on every subparser (with
    # suppressed defaults) so the flags work on either side of the subcommand.
    kwargs = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", help="JSON config file (defaults used when omitted)", **kwargs)
    parser.add_argument("--seed", type=int, help="master seed overriding the config", **kwargs)
    parser.add_argument("--out", help="output directory (default from config)", **kwargs)
    parser.add_argument("--temps", help="comma-separated temperatures in K (iv)", **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftjsim",
        description="Ferroelectric analog-memory simulator: device, array and inference studies.",
    )
    _add_common_flags(parser, suppress=False)
    parser.set_defaults(config=None, seed=None, out=None, temps=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p, suppress=True)
        return p

    add_command("iv", "endpoint I(V) grid across temperatures")
    p_pulse = add_command("pulse", "potentiation/depression staircase trace")
    p_pulse.add_argument("--pot", type=int, default=-1, help="potentiation pulse count")
    p_pulse.add_argument("--dep", type=int, default=-1, help="depression pulse count")
    p_fit = add_command("fit", "extract parameters from sweep/trace CSVs")
    p_fit.add_argument("files", nargs="+", help="sweep or trace CSV files")
    p_xbar = add_command("xbar", "program/read/disturb a crossbar")
    p_xbar.add_argument("--writes", type=int, default=1000, help="random write count")
    p_infer = add_command("infer", "analog inference accuracy report")
    p_infer.add_argument("--dataset", help="dataset CSV (bundled blobs when omitted)")
    p_infer.add_argument("--seeds", type=int, default=10, help="Monte-Carlo replicas")
    p_infer.add_argument("--hidden", default="24",
                         help="comma-separated hidden layer widths ('' for linear)")
    p_infer.add_argument("--mode", default="open_loop",
                         choices=("continuous", "open_loop", "write_verify"))
    add_command("bench", "one-page simulated device summary")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = apply_master_seed(config, args.seed)
        out = Path(args.out) if args.out else Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "iv":
            cmd_iv(config, out, _parse_temps(args.temps, config.device.conduction.t_ref))
        elif args.command == "pulse":
            cmd_pulse(config, out, args.pot, args.dep)
        elif args.command == "fit":
            cmd_fit(config, out, args.files)
        elif args.command == "xbar":
            cmd_xbar(config, out, args.writes)
        elif args.command == "infer":
            hidden = [int(h) for h in args.hidden.split(",") if h.strip()]
            cmd_infer(config, out, args.dataset, args.seeds, hidden, args.mode)
        elif args.command == "bench":
            cmd_bench(config, out)
    except ConfigError as exc:
        print(f"ftjsim: config-error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:
        print(f"ftjsim: fit-error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
