"""Command-line front end.

Every subcommand reads a run configuration (``--config`` plus ``--set``
overrides), runs one experiment family and writes CSV files and a
``manifest.json`` into the output directory. Exit status is 0 on success, 1 on
configuration or input errors and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bathgen import load_bath, preset_bath, sample_bath, write_bath
from .config import load_config
from .engine import KAPPA_DEFAULT, EngineOptions, LaserParams
from .errors import NumericalError, NVDNPError
from .experiments import (
    Variant,
    dnp_protocol,
    fid_experiment,
    laser_study,
    rabi_frequency_sweep,
    run_sequence,
)
from .analysis import fit_gaussian_fid
from .pulsedsl import PRESETS, parse_sequence, preset_text

__all__ = ["main", "write_csv"]

TWO_PI = 2.0 * math.pi


# ----------------------------------------------------------------- output


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return "%.12g" % x


def write_csv(path, columns, rows, meta):
    """CSV with a ``#`` metadata header and 12 significant digits."""
    lines = [f"# nvdnp {__version__}"]
    lines += [f"# {k}={v}" for k, v in meta.items()]
    lines.append("# columns: " + ", ".join(columns))
    lines.append(",".join(c.split(" ")[0] for c in columns))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _write_manifest(out, cfg, command, artifacts, extra=None):
    manifest = dict(
        artifact="nvdnp",
        version=__version__,
        command=command,
        config_hash=cfg.digest(),
        seed=cfg["seed"],
        bath_seed=cfg["bath_seed"],
        effective_config=cfg.effective(),
        artifacts=sorted(artifacts),
    )
    if extra:
        manifest.update(extra)
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "effective.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def _plot(out, name, x, ys, xlabel, ylabel, labels=None, logy=False):
    """Simple polyline SVG; skipped with a note when matplotlib is missing."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("note: matplotlib not installed, --plot ignored", file=sys.stderr)
        return None
    matplotlib.rcParams["svg.hashsalt"] = "nvdnp"
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, y in enumerate(ys):
        ax.plot(x, y, marker="." if len(x) < 40 else None, label=labels[i] if labels else None)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if labels:
        ax.legend()
    path = os.path.join(out, name + ".svg")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return os.path.basename(path)


# ---------------------------------------------------------------- helpers


def _bath(cfg):
    source = cfg["bath_source"]
    if source == "preset":
        bath = preset_bath(cfg["bath_preset"])
    elif source == "file":
        try:
            bath = load_bath(cfg["bath_file"])
        except NVDNPError as exc:
            exc.source = cfg["bath_file"]
            raise
    else:
        bath = sample_bath(
            cfg["bath_seed"],
            cfg["abundance"],
            cfg.si("r_min"),
            cfg.si("r_max"),
            cfg["max_spins"],
            cfg.si("b_field") or 0.05,
        )
    if cfg["b_field"] > 0:
        bath = bath.with_field(cfg.si("b_field"))
    if cfg["pure_dephasing"]:
        bath = bath.pure_dephasing()
    return bath


def _options(cfg):
    kappa = cfg["kappa"] if cfg["kappa"] >= 0 else KAPPA_DEFAULT
    return EngineOptions(
        backend=cfg["backend"],
        n_trajectories=cfg["n_trajectories"],
        krylov_tolerance=cfg["krylov_tolerance"],
        cache_size=cfg["cache_size"],
        dipolar=cfg["dipolar"],
        seed=cfg["seed"],
        p_init=cfg["p_init"],
        kappa=kappa,
        n_shots=cfg["n_shots"] or None,
        chunk_size=cfg["chunk_size"],
        workers=cfg["workers"],
    )


def _probe(cfg):
    return cfg.si("probe_rabi") or None


def _fid_grid(cfg):
    return np.linspace(0.0, cfg.si("t_max"), cfg["n_points"])


def _meta(cfg, bath, **extra):
    meta = dict(config_hash=cfg.digest(), seed=cfg["seed"], bath_seed=bath.seed, n_spins=bath.n_spins)
    meta["b_field_gauss"] = "%.12g" % (bath.b_field * 1e4)
    meta.update(extra)
    return meta


def _fit_row(fit):
    if fit is None:
        return [math.nan, math.nan, False]
    return [fit.decay_time * 1e6, fit.decay_uncertainty * 1e6, fit.converged]


def _fid_rows(ts):
    rows = []
    for i, t in enumerate(ts.abscissa):
        row = [t * 1e6, ts.values[i], ts.channels["p0_x"][i], ts.channels["p0_y"][i]]
        if "p0_x_stderr" in ts.channels:
            row += [ts.channels["p0_x_stderr"][i], ts.channels["p0_y_stderr"][i]]
        rows.append(row)
    cols = ["t_us", "envelope", "p0_x", "p0_y"]
    if "p0_x_stderr" in ts.channels:
        cols += ["p0_x_stderr", "p0_y_stderr"]
    return cols, rows


def _parse_variant(text):
    parts = [p.strip() for p in text.split(":")]
    kind = parts[0]
    from .config import parse_value

    if kind == "extra_laser":
        duration = parse_value("laser_time", parts[1]) * 1e-6 if len(parts) > 1 else 100e-6
        power = parse_value("laser_power", parts[2]) * 1e-6 if len(parts) > 2 else 1e-3
        return Variant(kind, duration, power)
    if kind == "extra_wait":
        duration = parse_value("lock_time", parts[1]) * 1e-6 if len(parts) > 1 else 100e-6
        return Variant(kind, duration)
    return Variant(kind)


# ------------------------------------------------------------ subcommands


def cmd_bath_sample(cfg, args, out):
    bath = sample_bath(
        cfg["bath_seed"],
        cfg["abundance"],
        cfg.si("r_min"),
        cfg.si("r_max"),
        cfg["max_spins"],
        cfg.si("b_field") or 0.05,
    )
    write_bath(bath, os.path.join(out, "bath.bath"))
    rows = [
        [k, *(np.array(s.position) * 1e9), s.a_par / TWO_PI / 1e3, s.a_perp / TWO_PI / 1e3]
        for k, s in enumerate(bath.spins)
    ]
    cols = ["index", "x_nm", "y_nm", "z_nm", "a_par_khz (a_par/2pi, kHz)", "a_perp_khz (a_perp/2pi, kHz)"]
    write_csv(os.path.join(out, "bath.csv"), cols, rows, _meta(cfg, bath))
    print(f"sampled {bath.n_spins} spins (seed {bath.seed}) -> {out}")
    return ["bath.bath", "bath.csv"]


def cmd_run(cfg, args, out):
    target = args.sequence
    if os.path.isfile(target):
        with open(target, encoding="utf-8") as fh:
            text = fh.read()
    elif target in PRESETS or target.removesuffix(".seq") in PRESETS:
        text = preset_text(target)
    else:
        raise FileNotFoundError(f"sequence file {target!r} not found")
    try:
        seq = parse_sequence(text)
    except NVDNPError as exc:
        exc.source = target
        raise
    bindings = {}
    for item in args.bind or ():
        if "=" not in item:
            raise NVDNPError(f"--bind expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        bindings[name.strip()] = value.strip()
    bath = _bath(cfg)
    state, record = run_sequence(seq, bindings, bath, None, _options(cfg))
    n = bath.n_spins
    cols = ["index", "label", "p0", "p0_stderr"] + [f"pz_{k}" for k in range(n)]
    rows = [
        [i, label or "-", obs.p0, obs.p0_stderr, *obs.nuclear_pz]
        for i, (label, obs) in enumerate(record.readouts)
    ]
    meta = _meta(cfg, bath, sequence=os.path.basename(target), total_time_us="%.12g" % (record.total_time * 1e6))
    meta.update({f"bind_{k}": v for k, v in sorted(bindings.items())})
    write_csv(os.path.join(out, "run.csv"), cols, rows, meta)
    print(f"{len(rows)} readouts, total time {record.total_time * 1e6:.6g} us")
    return ["run.csv"]


def cmd_rabi_sweep(cfg, args, out):
    bath = _bath(cfg)
    options = _options(cfg)
    rabi = np.linspace(cfg.si("rabi_min"), cfg.si("rabi_max"), cfg["n_rabi"])
    t = np.linspace(0.0, cfg.si("rabi_t_max"), cfg["rabi_points"])
    sweep = rabi_frequency_sweep(bath, rabi, t, options)
    rows = []
    for r, fit in zip(rabi, sweep.fits):
        row = [r / TWO_PI / 1e3, *_fit_row(fit)]
        row.append(fit.no_decay if fit is not None else True)
        rows.append(row)
    cols = ["rabi_khz (Omega/2pi, kHz)", "t_rho1_us", "t_rho1_err_us", "converged", "no_decay"]
    larmor_khz = bath.larmor / TWO_PI / 1e3
    write_csv(
        os.path.join(out, "rabi_sweep.csv"), cols, rows, _meta(cfg, bath, larmor_khz="%.12g" % larmor_khz)
    )
    trace_cols = ["t_us"] + [f"p0_{r / TWO_PI / 1e3:.6g}kHz" for r in rabi]
    trace_rows = [[ti * 1e6, *(ts.values[i] for ts in sweep.raw)] for i, ti in enumerate(t)]
    write_csv(os.path.join(out, "rabi_traces.csv"), trace_cols, trace_rows, _meta(cfg, bath))
    times = sweep.decay_times()
    artifacts = ["rabi_sweep.csv", "rabi_traces.csv"]
    if np.any(np.isfinite(times)):
        best = int(np.nanargmin(times))
        print(
            f"T_rho1 minimum {times[best] * 1e6:.4g} us at {rabi[best] / TWO_PI / 1e3:.4g} kHz "
            f"(Larmor {larmor_khz:.4g} kHz)"
        )
    if args.plot:
        p = _plot(out, "rabi_sweep", rabi / TWO_PI / 1e3, [times * 1e6], "Rabi frequency (kHz)", "T_rho1 (us)")
        artifacts += [p] if p else []
    return artifacts


def cmd_fid(cfg, args, out):
    bath = _bath(cfg)
    options = _options(cfg)
    pol = [cfg["polarization"]] * bath.n_spins
    ts = fid_experiment(bath, pol, _fid_grid(cfg), options, probe_rabi=_probe(cfg))
    fit = fit_gaussian_fid(ts, cfg["n_components"])
    cols, rows = _fid_rows(ts)
    meta = _meta(cfg, bath)
    write_csv(os.path.join(out, "fid.csv"), cols, rows, meta)
    write_csv(
        os.path.join(out, "fit.csv"),
        ["t2star_us", "t2star_err_us", "converged", "no_decay", "residual_rms"],
        [[*_fit_row(fit), fit.no_decay, fit.residual_rms]],
        meta,
    )
    print(f"T2* = {fit.decay_time * 1e6:.4g} us (converged={fit.converged})")
    artifacts = ["fid.csv", "fit.csv"]
    if args.plot:
        p = _plot(out, "fid", ts.abscissa * 1e6, [ts.values], "t (us)", "FID contrast")
        artifacts += [p] if p else []
    return artifacts


def _dnp_settings(cfg, bath, options):
    laser = LaserParams(cfg.si("laser_time"), cfg.si("laser_power"), options.p_init, options.kappa)
    lock_rabi = cfg.si("lock_rabi") or bath.larmor
    return dict(
        n_cycles=cfg["n_cycles"], lock_duration=cfg.si("lock_time"), lock_rabi=lock_rabi, laser=laser
    )


def cmd_dnp(cfg, args, out):
    bath = _bath(cfg)
    options = _options(cfg)
    settings = _dnp_settings(cfg, bath, options)
    state, history = dnp_protocol(bath, options=options, probe_rabi=_probe(cfg), **settings)
    n = bath.n_spins
    rows = [[c + 1, *pz, sum(abs(p) for p in pz)] for c, pz in enumerate(history)]
    meta = _meta(cfg, bath)
    write_csv(
        os.path.join(out, "dnp_history.csv"),
        ["cycle"] + [f"pz_{k}" for k in range(n)] + ["sum_abs_pz"],
        rows,
        meta,
    )
    t = _fid_grid(cfg)
    before = fid_experiment(bath, None, t, options, probe_rabi=_probe(cfg))
    after = fid_experiment(bath, None, t, options, initial=state, probe_rabi=_probe(cfg))
    cols, fid_rows = _fid_rows(after)
    write_csv(os.path.join(out, "fid_after_dnp.csv"), cols, fid_rows, meta)
    fits = [fit_gaussian_fid(ts, cfg["n_components"]) for ts in (before, after)]
    write_csv(
        os.path.join(out, "fit.csv"),
        ["case", "t2star_us", "t2star_err_us", "converged"],
        [["no_dnp", *_fit_row(fits[0])], ["dnp", *_fit_row(fits[1])]],
        meta,
    )
    ratio = fits[1].decay_time / fits[0].decay_time
    print(
        f"T2* {fits[0].decay_time * 1e6:.4g} us -> {fits[1].decay_time * 1e6:.4g} us after "
        f"{settings['n_cycles']} cycles (ratio {ratio:.3g})"
    )
    artifacts = ["dnp_history.csv", "fid_after_dnp.csv", "fit.csv"]
    if args.plot:
        p = _plot(
            out, "fid_dnp", t * 1e6, [before.values, after.values], "t (us)", "FID contrast", ["no DNP", "DNP"]
        )
        artifacts += [p] if p else []
    return artifacts


def cmd_laser_study(cfg, args, out):
    bath = _bath(cfg)
    options = _options(cfg)
    settings = _dnp_settings(cfg, bath, options)
    variants = [_parse_variant(v) for v in cfg["variants"].split(",") if v.strip()]
    variants = [
        Variant(v.kind, v.duration, v.power, cfg["wait_dipolar"]) if v.kind == "extra_wait" else v
        for v in variants
    ]
    sweep = laser_study(
        bath,
        variants,
        t_grid=_fid_grid(cfg),
        options=options,
        n_components=cfg["n_components"],
        probe_rabi=_probe(cfg),
        **settings,
    )
    rows = [[label, *_fit_row(fit)] for label, fit in zip(sweep.parameters, sweep.fits)]
    meta = _meta(cfg, bath)
    write_csv(
        os.path.join(out, "laser_study.csv"), ["variant", "t2star_us", "t2star_err_us", "converged"], rows, meta
    )
    t = sweep.raw[0].abscissa
    trace_rows = [[ti * 1e6, *(ts.values[i] for ts in sweep.raw)] for i, ti in enumerate(t)]
    write_csv(os.path.join(out, "laser_traces.csv"), ["t_us", *sweep.parameters], trace_rows, meta)
    for label, fit in zip(sweep.parameters, sweep.fits):
        print(f"{label:>28s}: T2* = {fit.decay_time * 1e6:.4g} us" if fit else f"{label}: fit failed")
    artifacts = ["laser_study.csv", "laser_traces.csv"]
    if args.plot:
        p = _plot(out, "laser_study", t * 1e6, [ts.values for ts in sweep.raw], "t (us)", "FID contrast", sweep.parameters)
        artifacts += [p] if p else []
    return artifacts


COMMANDS = {
    "bath": cmd_bath_sample,
    "run": cmd_run,
    "rabi-sweep": cmd_rabi_sweep,
    "fid": cmd_fid,
    "dnp": cmd_dnp,
    "laser-study": cmd_laser_study,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", metavar="DIR", help="output directory (default from config)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--backend", choices=("density", "trajectory"))
    common.add_argument("--plot", action="store_true", help="also write SVG plots")

    parser = argparse.ArgumentParser(prog="nvdnp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nvdnp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    bath = sub.add_parser("bath", help="bath utilities")
    bath_sub = bath.add_subparsers(dest="bath_command", required=True)
    bath_sub.add_parser("sample", parents=[common], help="sample a 13C bath and write a bath file")
    run = sub.add_parser("run", parents=[common], help="execute a pulse program")
    run.add_argument("sequence", help="sequence file or preset name")
    run.add_argument("--bind", action="append", default=[], metavar="NAME=VALUE", help="bind a $variable")
    sub.add_parser("rabi-sweep", parents=[common], help="Rabi decay time versus drive strength")
    sub.add_parser("fid", parents=[common], help="Ramsey FID and T2* fit")
    sub.add_parser("dnp", parents=[common], help="DNP pumping followed by FID")
    sub.add_parser("laser-study", parents=[common], help="T2* after DNP with extra laser or wait")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = list(args.set)
        for key in ("seed", "workers", "backend", "out"):
            value = getattr(args, key)
            if value is not None:
                overrides.append(f"{key}={value}")
        cfg = load_config(args.config, overrides)
        out = cfg["out"]
        os.makedirs(out, exist_ok=True)
        artifacts = COMMANDS[args.command](cfg, args, out)
        command = args.command + (" " + args.bath_command if args.command == "bath" else "")
        _write_manifest(out, cfg, command, artifacts)
    except NumericalError as exc:
        print(f"nvdnp: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (NVDNPError, OSError, ValueError, KeyError) as exc:
        source = getattr(exc, "source", None)
        prefix = f"{source}: " if source and source not in str(exc) else ""
        print(f"nvdnp: error: {prefix}{exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
