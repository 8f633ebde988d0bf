"""Batch front-end: ``martinet <subcommand> --config CONFIG.json --out DIR``.

Every run writes its outputs plus ``manifest_<hash>.json`` into ``--out``.
``<hash>`` is a short SHA-256 of the resolved configuration, so identical
configs give identically named, byte-identical files. Manifests carry no
timestamp.

Config schemas (JSON objects; omitted keys take the defaults shown):

eigen
    ``{"mu": [0.0], "k": [1], "tol": 1e-10, "dump_psi": true}``
    -> ``eigen_<hash>.csv`` (mu,k,lambda,lambda_prime,residual,error_estimate)
    and ``eigen_<hash>_psi.csv`` (mu,k,x,psi).
dispersion
    ``{"k": [1], "mu_min": -50.0, "mu_max": 50.0, "n_nodes": 33,
    "plot_points": 1001, "find_min": true}``
    -> ``dispersion_<hash>_k<k>.csv`` (mu,F,Fprime), ``..._table.json`` and
    ``dispersion_<hash>.json`` (minimum of ``F'`` per ``k``).
asymptotics
    ``{"k": 1, "cases": [{"regime": "plus", "quantity": "dF", "mu": [25, 50, 100]}],
    "gap_mu": [-5, -10, -20]}`` -> ``asymptotics_<hash>.json``.
propagate
    ``{"model": "martinet", "packet": {...}, "times": [0, 0.5, 1],
    "y_grid": null, "strict": false}`` -> ``front_<hash>.json`` and
    ``profile_<hash>.csv`` (t,y,density). ``packet`` follows
    ``PacketSpec`` (``{"bump": {"center": 5, "half_width": 0.25}, "zeta_max": 2000, ...}``)
    or, for ``"model": "quasi_contact"``, ``QuasiContactSpec`` with
    ``bump_eta``/``bump_zeta``/``sigma_max``. ``y_grid`` is
    ``{"lo": ..., "hi": ..., "n": ...}``. With ``strict`` an uncontained
    window exits with code 3.
probe
    ``{"packet": {...}, "rays": [...], "off_front": [...], "stationary_phase": [...]}``
    -> ``probe_<hash>.json``. Ray entries: ``{"kind": "core", "a": 0.5, "b": 0.2,
    "t": 0, "samples": [10, 100, 1000]}`` or ``{"kind": "cone",
    "direction": [1, 0, 1], "t": 0, "samples": [...]}``. Off-front entries:
    ``{"t": 1, "y_off": -1, "x_off": 0, "zeta_max": [...]}``. Stationary-phase
    entries: ``{"t": 1, "c": 0, "zeta": [...]}``.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence,
3 invariant failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (experiment_manifest, front_speed, off_front_decay, ray_decay, stationary_phase_check,
                       track_front, default_y_grid, energy_profile_y)
from .asymptotics import cross_validate, pairing_gap
from .dispersion import build_table, export_plot, find_min_speed
from .exceptions import MartinetError, NonConverged, ResolutionError
from .io import config_hash, csv_text, atomic_write_text, json_text
from .oscillator import DEFAULT_TOL, eigenpair, hellmann_feynman
from .wavepacket import PacketSpec, QuasiContactSpec, quasi_contact_synthesize, synthesize

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class InvariantFailure(MartinetError):
    pass


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _resolve(cfg: dict, defaults: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(cfg)
    return out


class Run:
    """Output directory bound to one resolved config."""

    def __init__(self, command, config, out_dir):
        self.command = command
        self.config = config
        self.hash = config_hash({"command": command, "config": config})
        self.out = Path(out_dir)
        self.files = []

    def name(self, stem, suffix):
        return f"{stem}_{self.hash}{suffix}"

    def write(self, fname, text):
        atomic_write_text(self.out / fname, text)
        self.files.append(fname)

    def manifest(self, extra=None):
        doc = {"command": self.command, "config": self.config, "config_hash": self.hash,
               "version": __version__, "outputs": sorted(self.files)}
        if extra:
            doc.update(extra)
        atomic_write_text(self.out / self.name("manifest", ".json"), json_text(doc))


def cmd_eigen(cfg, out, threads=None, doubling=False):
    cfg = _resolve(cfg, {"mu": [0.0], "k": [1], "tol": DEFAULT_TOL, "dump_psi": True})
    cfg["mu"] = [float(m) for m in _as_list(cfg["mu"])]
    cfg["k"] = [int(k) for k in _as_list(cfg["k"])]
    run = Run("eigen", cfg, out)
    rows, psi_rows = [], []
    for mu in cfg["mu"]:
        for k in cfg["k"]:
            pair = eigenpair(mu, k, float(cfg["tol"]))
            rows.append([mu, k, pair.lambda_, hellmann_feynman(pair), pair.residual, pair.error_estimate])
            if cfg["dump_psi"]:
                psi_rows.extend([mu, k, x, p] for x, p in zip(pair.x, pair.psi))
    run.write(run.name("eigen", ".csv"),
              csv_text(["mu", "k", "lambda", "lambda_prime", "residual", "error_estimate"], rows))
    if cfg["dump_psi"]:
        run.write(run.name("eigen", "_psi.csv"), csv_text(["mu", "k", "x", "psi"], psi_rows))
    run.manifest()
    return run


def cmd_dispersion(cfg, out, threads=None, doubling=False):
    cfg = _resolve(cfg, {"k": [1], "mu_min": -50.0, "mu_max": 50.0, "n_nodes": 33, "plot_points": 1001,
                         "find_min": True, "tol": DEFAULT_TOL})
    cfg["k"] = [int(k) for k in _as_list(cfg["k"])]
    run = Run("dispersion", cfg, out)
    summary = {}
    for k in cfg["k"]:
        table = build_table(k, cfg["mu_min"], cfg["mu_max"], cfg["n_nodes"], float(cfg["tol"]), n_jobs=threads)
        fname = run.name("dispersion", f"_k{k}.csv")
        export_plot(table, run.out / fname, int(cfg["plot_points"]))
        run.files.append(fname)
        run.write(run.name("dispersion", f"_k{k}_table.json"), json_text(table.to_dict()))
        entry = {"n_nodes": table.n_nodes, "table_hash": config_hash(table.to_dict())}
        if cfg["find_min"]:
            mu_star, a_k = find_min_speed(table)
            entry.update(mu_star=mu_star, a_k=a_k)
        summary[f"k{k}"] = entry
    run.write(run.name("dispersion", ".json"), json_text(summary))
    run.manifest()
    return run


def cmd_asymptotics(cfg, out, threads=None, doubling=False):
    cfg = _resolve(cfg, {"k": 1, "cases": [{"regime": "plus", "quantity": "dF", "mu": [25.0, 50.0, 100.0]}],
                         "gap_mu": [], "tol": DEFAULT_TOL})
    run = Run("asymptotics", cfg, out)
    reports = []
    for case in cfg["cases"]:
        case = _resolve(case, {"regime": "plus", "quantity": "dF", "mu": []})
        rep = cross_validate(int(cfg["k"]), case["regime"], case["mu"], case["quantity"], float(cfg["tol"]),
                             n_jobs=threads)
        reports.append(rep.to_dict())
    gaps = [{"mu": float(m), "gap": pairing_gap(float(m), int(cfg["k"]), float(cfg["tol"]))}
            for m in cfg["gap_mu"]]
    run.write(run.name("asymptotics", ".json"), json_text({"cross_validation": reports, "pairing_gap": gaps}))
    run.manifest()
    return run


def _packet(cfg_packet, model):
    if model == "martinet":
        return PacketSpec.from_dict(cfg_packet)
    if model == "quasi_contact":
        return QuasiContactSpec.from_dict(cfg_packet)
    raise ConfigError(f"model must be 'martinet' or 'quasi_contact', got {model!r}")


def cmd_propagate(cfg, out, threads=None, doubling=False):
    cfg = _resolve(cfg, {"model": "martinet", "packet": None, "times": [0.0, 0.5, 1.0], "y_grid": None,
                         "strict": False, "tol": DEFAULT_TOL})
    if cfg["packet"] is None:
        raise ConfigError("propagate needs a 'packet' block")
    spec = _packet(cfg["packet"], cfg["model"])
    times = [float(t) for t in cfg["times"]]
    tol = float(cfg["tol"])
    if cfg["y_grid"] is None:
        y = default_y_grid(spec, times, None, tol)
    else:
        g = _resolve(cfg["y_grid"], {"lo": None, "hi": None, "n": None})
        y = np.linspace(float(g["lo"]), float(g["hi"]), int(g["n"]))
    run = Run("propagate", cfg, out)
    reports = track_front(spec, times, y, tol=tol, check_resolution=doubling)
    speed, intercept, r2 = front_speed(reports)
    rows = []
    for t in times:
        grid = {"x": 0.0, "y": y}
        if isinstance(spec, PacketSpec):
            field = synthesize(spec, grid, t, spectral=True, tol=tol)
        else:
            field = quasi_contact_synthesize(spec, grid, t, spectral=True)
        prof = energy_profile_y(field)
        rows.extend([t, yy, d] for yy, d in zip(prof.y, prof.density))
    run.write(run.name("profile", ".csv"), csv_text(["t", "y", "density"], rows))
    doc = experiment_manifest(spec, reports, extra={"model": cfg["model"], "speed": speed,
                                                     "intercept": intercept, "r2": r2})
    run.write(run.name("front", ".json"), json_text(doc))
    run.manifest({"spec_hash": doc["spec_hash"]})
    if cfg["strict"] and not all(r.contained for r in reports):
        raise InvariantFailure("measured energy window leaves the inflated predicted window")
    return run


def cmd_probe(cfg, out, threads=None, doubling=False):
    cfg = _resolve(cfg, {"packet": None, "rays": [], "off_front": [], "stationary_phase": [], "tol": DEFAULT_TOL})
    if cfg["packet"] is None:
        raise ConfigError("probe needs a 'packet' block")
    spec = PacketSpec.from_dict(cfg["packet"])
    tol = float(cfg["tol"])
    run = Run("probe", cfg, out)
    rays = []
    for r in cfg["rays"]:
        r = _resolve(r, {"kind": "core", "a": None, "b": None, "direction": None, "t": 0.0, "samples": []})
        probe = ray_decay(spec, float(r["t"]), r["kind"], r["samples"], a=r["a"], b=r["b"],
                          direction=r["direction"], tol=tol)
        rays.append(probe.to_dict())
    offs = []
    for o in cfg["off_front"]:
        o = _resolve(o, {"t": 1.0, "y_off": None, "x_off": 0.0, "zeta_max": []})
        offs.append(off_front_decay(spec, float(o["t"]), o["zeta_max"], y_off=float(o["y_off"]),
                                    x_off=float(o["x_off"]), tol=tol).to_dict())
    sps = []
    for s in cfg["stationary_phase"]:
        s = _resolve(s, {"t": 1.0, "c": None, "zeta": []})
        sps.append(stationary_phase_check(spec, float(s["t"]), float(s["c"]), s["zeta"], tol=tol).to_dict())
    run.write(run.name("probe", ".json"),
              json_text({"spec": spec.to_dict(), "rays": rays, "off_front": offs, "stationary_phase": sps}))
    run.manifest()
    return run


COMMANDS = {
    "eigen": cmd_eigen,
    "dispersion": cmd_dispersion,
    "asymptotics": cmd_asymptotics,
    "propagate": cmd_propagate,
    "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="martinet",
        description="Quartic-oscillator dispersion curves and singularity propagation along Martinet singular curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eigen": "solve and dump eigenpairs",
        "dispersion": "tabulate F_k and F_k', locate the minimal speed",
        "asymptotics": "compare solver output with large-|mu| laws",
        "propagate": "propagate a packet and track its front",
        "probe": "ray decay, off-front decay and stationary-phase checks",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for independent solves")
        p.add_argument("--resolution-doubling", action="store_true",
                       help="recompute with doubled quadrature and fail if results move")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; exit code 2 is reserved for non-convergence
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    threads = None if args.threads == 1 else args.threads
    try:
        run = COMMANDS[args.command](cfg, args.out, threads, args.resolution_doubling)
    except (NonConverged, ResolutionError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MartinetError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    for f in sorted(run.files):
        print(Path(args.out) / f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
