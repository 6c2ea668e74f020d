"""Command-line driver: ``jrlattice <subcommand> --config FILE [options]``.

Every subcommand writes its tables and a ``manifest.json`` into ``--out``.
Options can also be set through environment variables prefixed ``JRL_``
(``JRL_SEED``, ``JRL_THREADS``, ``JRL_OUT``, ``JRL_STRIDE``,
``JRL_FERMION_MODE``, ``JRL_ZERO_MODE``, ``JRL_CONFIG``); command-line flags
take precedence over the environment, which takes precedence over the file.

Exit codes: 0 success, 1 physics-validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import adiabatic, io, ions, modes, twa
from .dynamics import RelaxationError
from .fermions import default_filling, gauge_eigensystem
from .lattice import site_coordinates, total_energy

__all__ = ["main", "build_parser", "ENV_PREFIX"]

ENV_PREFIX = "JRL_"

EXIT_OK = 0
EXIT_PHYSICS = 1
EXIT_USAGE = 2

_ENV_FLAGS = {
    "config": str,
    "seed": int,
    "threads": int,
    "out": str,
    "stride": int,
    "fermion_mode": str,
    "zero_mode": str,
}


class UsageError(Exception):
    """Bad invocation (missing input, wrong section set)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jrlattice", description="Lattice Jackiw-Rebbi simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "relax": "relaxed kink profile",
        "modes": "normal-mode spectrum and fermion levels of the relaxed kink",
        "pn-scan": "Peierls-Nabarro energy versus kink position",
        "kk-potential": "kink-antikink interaction energy versus separation",
        "zero-mode-scan": "last filled fermion level versus kink position",
        "evolve": "single classical or Born-Oppenheimer trajectory",
        "twa-kink": "truncated-Wigner ensemble around a static kink",
        "twa-move": "truncated-Wigner ensemble of a moving kink",
        "twa-collide": "kink-antikink collision ensemble",
        "fit": "kink-width and power-law fits of a stored ensemble",
        "ion-map": "effective couplings from trap and laser parameters",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--stride", type=int)
        p.add_argument("--fermion-mode", dest="fermion_mode", choices=("unitary", "adiabatic"))
        p.add_argument("--zero-mode", dest="zero_mode", choices=("default", "both", "one", "none"))
        if name == "fit":
            p.add_argument("--input", required=True, help="ensemble JSON-lines file written by a twa-* command")
        if name in ("twa-kink", "twa-move", "twa-collide", "evolve"):
            p.add_argument("--dump-trajectories", action="store_true", help="also write per-trajectory separation")
    return parser


def _apply_env(args, environ):
    for key, conv in _ENV_FLAGS.items():
        if getattr(args, key, None) is None:
            raw = environ.get(ENV_PREFIX + key.upper())
            if raw is not None:
                try:
                    setattr(args, key, conv(raw))
                except ValueError as exc:
                    raise UsageError(f"{ENV_PREFIX}{key.upper()}: {exc}") from exc
    if args.out is None:
        args.out = "."
    return args


def _load(args) -> io.Config:
    if args.config is None:
        raise UsageError("--config is required")
    cfg = io.parse_config(args.config)
    return cfg.with_run(seed=args.seed, threads=args.threads, stride=args.stride, fermion_mode=args.fermion_mode, zero_mode=args.zero_mode)


def _need(cfg: io.Config, *sections):
    for s in sections:
        if not cfg.has(s):
            raise UsageError(f"this command needs a [{s}] section")


class _Outputs:
    def __init__(self, args, cfg: io.Config, command: str):
        os.makedirs(args.out, exist_ok=True)
        self.dir = args.out
        self.hash = io.config_hash(cfg, {"command": command})
        self.manifest = io.RunManifest(self.hash, cfg.run.seed, command)

    def path(self, name):
        self.manifest.outputs.append(name)
        return os.path.join(self.dir, name)

    def table(self, name, columns):
        io.write_table(self.path(name), columns, self.hash)

    def long(self, name, times, x, fields, errors=None):
        io.write_long_table(self.path(name), times, x, fields, self.hash, errors)

    def close(self):
        self.manifest.finish()
        self.manifest.write(self.dir)


def _scan_grid(run: io.RunSettings):
    n = int(np.floor((run.scan_max - run.scan_min) / run.scan_step + 1e-9)) + 1
    return run.scan_min + run.scan_step * np.arange(n)


def _center(cfg):
    return cfg.get("lattice", "center", 0.5)


def cmd_relax(cfg, out):
    spec = cfg.spec
    kink = adiabatic.relaxed_kink(spec, _center(cfg))
    x = site_coordinates(spec.N) * spec.a
    out.table("relaxed.csv", {"x": x, "phi": kink.phi})
    out.table("energy.csv", {"energy": np.array([total_energy(spec, kink)])})


def cmd_modes(cfg, out):
    spec = cfg.spec
    kink = adiabatic.relaxed_kink(spec, _center(cfg))
    basis = modes.normal_modes(modes.elasticity_matrix(kink, spec), spec.a)
    out.table("spectrum.csv", {"index": np.arange(spec.N), "omega_sq": basis.omega_sq})
    k = min(cfg.run.n_modes, spec.N)
    x = site_coordinates(spec.N) * spec.a
    out.table("modes.csv", {"x": x, **{f"mode{j}": basis.modes[:, j] for j in range(k)}})
    p = cfg.fermions
    if p is not None:
        eps, v = gauge_eigensystem(kink.phi, p)
        out.table("fermion_spectrum.csv", {"index": np.arange(spec.N), "eps": eps})
        zm = default_filling(spec.N) - 1
        out.table("zero_mode.csv", {"x": x, "density": v[:, zm] ** 2})


def _scan_table(out, name, scan, xname):
    cols = {xname: scan.positions, "value": scan.values}
    cols.update({k: np.asarray(v, dtype=float) for k, v in scan.components.items()})
    out.table(name, cols)


def cmd_pn_scan(cfg, out):
    run = cfg.run
    scan = adiabatic.pn_scan(cfg.spec, cfg.fermions, _scan_grid(run), base_center=_center(cfg), method=run.method, threads=run.threads)
    _scan_table(out, "pn_scan.csv", scan, "x0")
    b = adiabatic.pn_barrier(scan)
    subs = b["sub_barriers"] or [np.nan]
    out.table("pn_barrier.csv", {"barrier": np.array([b["barrier"]] * len(subs)), "sub_barrier": np.array(subs)})


def cmd_kk_potential(cfg, out):
    run = cfg.run
    occ = run.zero_mode if run.zero_mode != "default" else "both"
    scan = adiabatic.kink_antikink_potential(cfg.spec, cfg.fermions, _scan_grid(run), occupation=occ, threads=run.threads)
    _scan_table(out, "kk_potential.csv", scan, "d")


def cmd_zero_mode_scan(cfg, out):
    _need(cfg, "fermions")
    run = cfg.run
    scan = adiabatic.zero_mode_energy_scan(cfg.spec, cfg.fermions, _scan_grid(run), base_center=_center(cfg), method=run.method, threads=run.threads)
    _scan_table(out, "zero_mode_scan.csv", scan, "x0")


def _experiment(cfg, wigner, n_traj=None, observables=None):
    run = cfg.run
    return twa.ExperimentConfig(
        cfg.spec,
        cfg.fermions,
        wigner,
        run.dt,
        run.t_max,
        record_stride=run.stride,
        n_traj=run.n_traj if n_traj is None else n_traj,
        seed=run.seed,
        fermion_mode=run.fermion_mode,
        zero_mode_occupation=run.zero_mode,
        splitting=run.splitting,
        propagator=run.propagator,
        observables=run.observables if observables is None else observables,
        exclusion=run.exclusion,
        threads=run.threads,
    )


def _kink_wigner(cfg, moving: bool, frozen_all: bool = False):
    spec = cfg.spec
    kink = adiabatic.relaxed_kink(spec, _center(cfg))
    basis = modes.normal_modes(modes.elasticity_matrix(kink, spec), spec.a)
    frozen = set(cfg.get("wigner", "frozen", ()))
    if cfg.get("wigner", "freeze_goldstone", moving):
        frozen.add(0)
    if frozen_all or cfg.get("wigner", "frozen_all", False):
        frozen = set(range(spec.N))
    p_mean = {0: cfg.get("wigner", "p_bar", 0.0)} if moving else None
    return modes.wigner_ground_state(kink, spec, frozen=sorted(frozen), p_mean=p_mean, basis=basis)


def _write_ensemble(out, cfg, res, stem):
    res.to_jsonl(out.path(stem + ".jsonl"), out.hash)
    spec = cfg.spec
    x_sites = site_coordinates(spec.N) * spec.a
    x_links = twa.link_coordinates(spec.N, 0, spec.a)
    site_fields = {k: res.mean[k] for k in ("phi", "energy") if k in res.mean}
    if site_fields:
        out.long(stem + "_sites.csv", res.times, x_sites, site_fields, {k: res.stderr[k] for k in site_fields})
    if "rho" in res.mean:
        out.long(stem + "_rho.csv", res.times, x_links, {"rho": res.mean["rho"]}, {"rho": res.stderr["rho"]})
    if "dq" in res.mean:
        x_dq = twa.link_coordinates(spec.N, cfg.run.exclusion, spec.a)
        out.long(stem + "_dq.csv", res.times, x_dq, {"dq": res.mean["dq"]}, {"dq": res.stderr["dq"]})
    if "condensate" in res.mean:
        x_cells = x_sites[0 : 2 * (spec.N // 2) : 2] + 0.5 * spec.a
        out.long(stem + "_condensate.csv", res.times, x_cells, {"condensate": res.mean["condensate"]}, {"condensate": res.stderr["condensate"]})
    diag = {k: np.array([float(v)]) for k, v in res.diagnostics.items() if np.ndim(v) == 0}
    if diag:
        out.table(stem + "_invariants.csv", diag)


def _widths(out, res, spec, name="widths.csv"):
    if "phi" not in res.mean:
        return
    t, xi, fits = twa.width_series(res.times, res.mean["phi"], site_coordinates(spec.N) * spec.a)
    if t.size:
        out.table(name, {"t": t, "xi": xi, "Phi0": np.array([f.params["Phi0"] for f in fits]), "n0": np.array([f.params["n0"] for f in fits])})


def cmd_evolve(cfg, out, dump=False):
    moving = cfg.get("wigner", "p_bar", 0.0) != 0.0
    w = _kink_wigner(cfg, moving, frozen_all=True)
    res = twa.run_ensemble(_experiment(cfg, w, n_traj=1))
    _write_ensemble(out, cfg, res, "trajectory")


def cmd_twa_kink(cfg, out, dump=False):
    w = _kink_wigner(cfg, moving=False)
    res = twa.run_ensemble(_experiment(cfg, w))
    _write_ensemble(out, cfg, res, "ensemble")
    _widths(out, res, cfg.spec)


def cmd_twa_move(cfg, out, dump=False):
    w = _kink_wigner(cfg, moving=True)
    res = twa.run_ensemble(_experiment(cfg, w))
    _write_ensemble(out, cfg, res, "ensemble")
    _widths(out, res, cfg.spec)


def cmd_twa_collide(cfg, out, dump=False):
    d = cfg.get("wigner", "d")
    p_bar = cfg.get("wigner", "p_bar")
    if d is None or p_bar is None:
        raise UsageError("twa-collide needs [wigner] d and p_bar")
    w, _ = twa.collision_setup(cfg.spec, d, p_bar, frozen_all=cfg.get("wigner", "frozen_all", False), center=_center(cfg))
    exp = _experiment(cfg, w)
    res, summary = twa.collision_experiment(exp, d, p_bar)
    _write_ensemble(out, cfg, res, "collision")
    out.table("separation.csv", {"t": res.times, "mean_field_separation": summary["mean_field_separation"]})
    classes = summary["classes"]
    out.table("classes.csv", {"trajectory": np.arange(len(classes)), "class": np.array(classes)})
    if dump:
        seps = res.per_trajectory["separation"]
        out.long("separation_trajectories.csv", res.times, np.arange(seps.shape[0]), {"separation": seps.T})


def cmd_fit(cfg, out, input_path):
    data = io.read_jsonl(input_path)
    if "phi" not in data:
        raise UsageError(f"{input_path} has no phi records")
    spec = cfg.spec
    t, xi, fits = twa.width_series(data["t"], data["phi"], site_coordinates(spec.N) * spec.a)
    if t.size < 3:
        raise ValueError("fewer than three valid kink fits")
    out.table("widths.csv", {"t": t, "xi": xi, "xi_ci95": np.array([f.ci95["xi"] for f in fits])})
    pl = twa.fit_power_law(t, xi)
    out.table(
        "power_law.csv",
        {
            "alpha": np.array([pl.params["alpha"]]),
            "alpha_ci95": np.array([pl.ci95["alpha"]]),
            "c": np.array([pl.params["c"]]),
            "rms_log_residual": np.array([pl.diagnostics["rms_log_residual"]]),
            "accepted": np.array([pl.diagnostics["accepted"]]),
            "bounded_oscillation": np.array([pl.diagnostics["bounded_oscillation"]]),
        },
    )


def cmd_ion_map(cfg, out):
    _need(cfg, "trap")
    trap = cfg.trap
    laser = cfg.laser if cfg.has("laser") else None
    res = ions.effective_couplings(trap, laser)
    table = res.pop("J_table", None)
    names = sorted(res)
    out.table("couplings.csv", {"quantity": np.array(names), "value": np.array([float(res[k]) for k in names])})
    if table is not None:
        out.table("spin_couplings.csv", {"range": np.arange(1, table.size + 1), "J": table})


_COMMANDS = {
    "relax": cmd_relax,
    "modes": cmd_modes,
    "pn-scan": cmd_pn_scan,
    "kk-potential": cmd_kk_potential,
    "zero-mode-scan": cmd_zero_mode_scan,
    "evolve": cmd_evolve,
    "twa-kink": cmd_twa_kink,
    "twa-move": cmd_twa_move,
    "twa-collide": cmd_twa_collide,
    "fit": cmd_fit,
    "ion-map": cmd_ion_map,
}


def run(args, environ=None) -> int:
    """Execute parsed arguments; returns the exit code."""
    environ = os.environ if environ is None else environ
    try:
        _apply_env(args, environ)
        cfg = _load(args)
        if args.command not in ("ion-map",):
            _need(cfg, "lattice")
        out = _Outputs(args, cfg, args.command)
        fn = _COMMANDS[args.command]
        if args.command == "fit":
            fn(cfg, out, args.input)
        elif args.command in ("evolve", "twa-kink", "twa-move", "twa-collide"):
            fn(cfg, out, getattr(args, "dump_trajectories", False))
        else:
            fn(cfg, out)
        out.close()
    except io.ConfigError as exc:
        print(f"jrlattice: {exc}", file=sys.stderr)
        return EXIT_PHYSICS if exc.kind == "invariant" else EXIT_USAGE
    except (UsageError, FileNotFoundError) as exc:
        print(f"jrlattice: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, FloatingPointError, RelaxationError, twa.TrajectoryError) as exc:
        print(f"jrlattice: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return run(args)


if __name__ == "__main__":
    sys.exit(main())
