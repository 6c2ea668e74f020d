"""Configuration files, run manifests and tabular writers.

Configuration files are flat ``[section]`` blocks of ``key = value`` lines;
``#`` starts a comment. Sections: ``lattice``, ``fermions``, ``wigner``,
``run``, ``trap``, ``laser``. Lists are comma separated.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .fermions import FermionParams
from .ions import LaserParams, TrapParams, lamb_dicke
from .lattice import LatticeSpec

__all__ = [
    "ConfigError",
    "Config",
    "RunSettings",
    "SCHEMA",
    "parse_config",
    "parse_config_text",
    "serialize_config",
    "config_hash",
    "RunManifest",
    "write_table",
    "write_long_table",
    "read_jsonl",
]


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and line numbers.

    ``kind`` is ``"syntax"``, ``"unknown"``, ``"missing"``, ``"duplicate"``
    or ``"invariant"``.
    """

    def __init__(self, message: str, key: str | None = None, lines=(), kind: str = "syntax"):
        where = ""
        if lines:
            where = " (line" + ("s " if len(lines) > 1 else " ") + ", ".join(str(n) for n in lines) + ")"
        super().__init__(message + where)
        self.key = key
        self.lines = tuple(lines)
        self.kind = kind


def _int(text):
    return int(text)


def _float(text):
    return float(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text):
    return text.strip()


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _str_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


SCHEMA = {
    "lattice": {
        "N": _int,
        "Phi0": _float,
        "xi0": _float,
        "m0_sq": _float,
        "lam": _float,
        "a": _float,
        "center": _float,
    },
    "fermions": {"J": _float, "g": _float, "m_f": _float},
    "wigner": {
        "frozen": _int_list,
        "freeze_goldstone": _bool,
        "frozen_all": _bool,
        "p_bar": _float,
        "d": _float,
    },
    "run": {
        "dt": _float,
        "t_max": _float,
        "stride": _int,
        "n_traj": _int,
        "seed": _int,
        "threads": _int,
        "fermion_mode": _str,
        "zero_mode": _str,
        "splitting": _str,
        "propagator": _str,
        "observables": _str_list,
        "exclusion": _int,
        "scan_min": _float,
        "scan_max": _float,
        "scan_step": _float,
        "method": _str,
        "n_modes": _int,
    },
    "trap": {
        "omega_x": _float,
        "omega_y": _float,
        "omega_z": _float,
        "N_ions": _int,
        "a": _float,
        "m_a": _float,
        "ell": _float,
    },
    "laser": {
        "Omega_L": _float,
        "delta_L": _float,
        "Delta_k": _float,
        "Omega_tilde": _float,
        "Delta_k_tilde": _float,
        "z0": _float,
        "q_z": _float,
        "eta_x": _float,
    },
}

_REQUIRED = {
    "lattice": ("N",),
    "fermions": ("J",),
    "wigner": (),
    "run": (),
    "trap": ("omega_x", "omega_y", "omega_z", "N_ions", "a", "m_a"),
    "laser": ("Omega_L", "delta_L", "Delta_k", "Omega_tilde", "Delta_k_tilde", "z0", "q_z"),
}

_CHOICES = {
    ("run", "fermion_mode"): ("unitary", "adiabatic"),
    ("run", "zero_mode"): ("default", "both", "one", "none"),
    ("run", "splitting"): ("lie", "strang"),
    ("run", "propagator"): ("spectral", "taylor"),
    ("run", "method"): ("pchip", "linear"),
}


@dataclass(frozen=True)
class RunSettings:
    """Run-section values with defaults filled in."""

    dt: float = 0.01
    t_max: float = 10.0
    stride: int = 10
    n_traj: int = 1
    seed: int = 0
    threads: int = 1
    fermion_mode: str = "unitary"
    zero_mode: str = "default"
    splitting: str = "lie"
    propagator: str = "spectral"
    observables: tuple = ("phi", "energy", "rho", "dq", "condensate")
    exclusion: int = 3
    scan_min: float = -2.0
    scan_max: float = 2.0
    scan_step: float = 0.05
    method: str = "pchip"
    n_modes: int = 4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= 0:
            raise ValueError("t_max must be non-negative")
        if self.stride < 1 or self.n_traj < 1 or self.threads < 1:
            raise ValueError("stride, n_traj and threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.scan_step > 0 or self.scan_max < self.scan_min:
            raise ValueError("scan range must satisfy scan_min <= scan_max and scan_step > 0")


@dataclass(frozen=True)
class Config:
    """Parsed configuration: typed values per section plus their line numbers.

    Equality compares the values only, so ``parse(serialize(c)) == c``.
    """

    sections: dict
    lines: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        _validate(self)

    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def spec(self) -> LatticeSpec:
        s = self.sections["lattice"]
        a = s.get("a", 1.0)
        if "Phi0" in s:
            return LatticeSpec.from_kink(s["N"], s["Phi0"], s["xi0"], a)
        return LatticeSpec(s["N"], s["m0_sq"], s["lam"], a)

    @property
    def fermions(self) -> FermionParams | None:
        s = self.sections.get("fermions")
        if s is None:
            return None
        return FermionParams(s["J"], s.get("g", 0.0), s.get("m_f", 0.0))

    @property
    def run(self) -> RunSettings:
        return RunSettings(**self.sections.get("run", {}))

    @property
    def trap(self) -> TrapParams:
        s = dict(self.sections["trap"])
        if "ell" in s:
            return TrapParams(s["omega_x"], s["omega_y"], s["omega_z"], s["N_ions"], s["a"], s["ell"], s["m_a"])
        return TrapParams.from_mass(s["omega_x"], s["omega_y"], s["omega_z"], s["N_ions"], s["a"], s["m_a"])

    @property
    def laser(self) -> LaserParams:
        s = dict(self.sections["laser"])
        if "eta_x" not in s:
            t = self.sections["trap"]
            s["eta_x"] = lamb_dicke(s["Delta_k"], t["m_a"], t["omega_x"])
        return LaserParams(**s)

    def with_run(self, **changes) -> "Config":
        """Copy with run-section values replaced (used for command-line overrides)."""
        secs = {k: dict(v) for k, v in self.sections.items()}
        secs.setdefault("run", {}).update({k: v for k, v in changes.items() if v is not None})
        return Config(secs, self.lines)


def _line(cfg: Config, section: str, key: str | None = None):
    lines = cfg.lines.get(section, {})
    n = lines.get(key) if key is not None else lines.get("[section]")
    return (n,) if n is not None else ()


def _validate(cfg: Config):
    for sec, req in _REQUIRED.items():
        if sec not in cfg.sections:
            continue
        for key in req:
            if key not in cfg.sections[sec]:
                raise ConfigError(f"[{sec}] missing key {key!r}", key, _line(cfg, sec), "missing")
    if "lattice" in cfg.sections:
        s = cfg.sections["lattice"]
        kink_form = "Phi0" in s or "xi0" in s
        coupling_form = "m0_sq" in s or "lam" in s
        if kink_form and coupling_form:
            raise ConfigError("[lattice] give either Phi0/xi0 or m0_sq/lam, not both", "lattice", _line(cfg, "lattice"), "invariant")
        need = ("Phi0", "xi0") if kink_form else ("m0_sq", "lam")
        for key in need:
            if key not in s:
                raise ConfigError(f"[lattice] missing key {key!r}", key, _line(cfg, "lattice"), "missing")
        if kink_form:
            for key in ("Phi0", "xi0"):
                if not s[key] > 0:
                    raise ConfigError(f"[lattice] invariant {key} > 0 violated: {key} = {s[key]}", key, _line(cfg, "lattice", key), "invariant")
        elif not s["lam"] > 0 and not (s["lam"] == 0 and s["m0_sq"] > 0):
            raise ConfigError(
                f"[lattice] invariant lam > 0 violated: lam = {s['lam']}", "lam", _line(cfg, "lattice", "lam"), "invariant"
            )
    for (sec, key), allowed in _CHOICES.items():
        v = cfg.get(sec, key)
        if v is not None and v not in allowed:
            raise ConfigError(f"[{sec}] {key} must be one of {', '.join(allowed)}, got {v!r}", key, _line(cfg, sec, key), "invariant")
    for sec, build in (("lattice", "spec"), ("fermions", "fermions"), ("run", "run"), ("trap", "trap"), ("laser", "laser")):
        if sec in cfg.sections or sec == "run":
            try:
                getattr(cfg, build)
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"[{sec}] invariant violated: {exc}", sec, _line(cfg, sec), "invariant") from exc
            except KeyError as exc:
                raise ConfigError(f"[{sec}] missing key {exc.args[0]!r}", exc.args[0], _line(cfg, sec), "missing") from exc


def parse_config_text(text: str) -> Config:
    """Parse configuration text; see :func:`parse_config`."""
    sections: dict = {}
    lines: dict = {}
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", None, (n,))
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", current, (n,), "unknown")
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", current, (lines[current]["[section]"], n), "duplicate")
            sections[current] = {}
            lines[current] = {"[section]": n}
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", None, (n,))
        if current is None:
            raise ConfigError("key outside of any section", None, (n,))
        key, value = (part.strip() for part in line.split("=", 1))
        schema = SCHEMA[current]
        if key not in schema:
            raise ConfigError(f"[{current}] unknown key {key!r}", key, (n,), "unknown")
        if key in sections[current]:
            raise ConfigError(f"[{current}] duplicate key {key!r}", key, (lines[current][key], n), "duplicate")
        try:
            sections[current][key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"[{current}] bad value for {key!r}: {exc}", key, (n,)) from exc
        lines[current][key] = n
    return Config(sections, lines)


def parse_config(path) -> Config:
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        Unknown, missing or duplicate keys and physical invariant violations,
        with the key and line numbers.
    """
    with open(path) as fh:
        return parse_config_text(fh.read())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: Config) -> str:
    """Configuration text that parses back to an equal :class:`Config`."""
    out = []
    for sec in SCHEMA:
        if sec not in cfg.sections:
            continue
        out.append(f"[{sec}]")
        for key in SCHEMA[sec]:
            if key in cfg.sections[sec]:
                out.append(f"{key} = {_format(cfg.sections[sec][key])}")
        out.append("")
    return "\n".join(out)


def config_hash(cfg: Config, extra: dict | None = None) -> str:
    """SHA-256 of the canonical JSON of the configuration values (key order irrelevant)."""
    payload = {"config": cfg.sections, "extra": extra or {}}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(text.encode()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance record written next to every set of outputs."""

    config_hash: str
    seed: int
    command: str
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: str | None = None
    outputs: list = field(default_factory=list)

    def finish(self) -> None:
        self.finished = _now()

    def write(self, directory) -> str:
        path = os.path.join(directory, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns: dict, manifest_hash: str) -> None:
    """Comma-separated table with one header row; every row ends with the manifest hash.

    ``columns`` maps names to equal-length 1-d arrays; include a time column
    (``t``) for time series.
    """
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    if arrays and any(a.shape != arrays[0].shape or a.ndim != 1 for a in arrays):
        raise ValueError("columns must be 1-d arrays of equal length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["manifest"])
        for row in zip(*arrays):
            w.writerow([_cell(v) for v in row] + [manifest_hash])


def write_long_table(path, times, x, fields: dict, manifest_hash: str, errors: dict | None = None) -> None:
    """Long-format table ``t, x, field...`` of profiles with shape ``(n_times, n_x)``.

    ``errors`` adds ``<name>_err`` columns.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(x, dtype=float)
    cols = {"t": np.repeat(t, x.size), "x": np.tile(x, t.size)}
    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (t.size, x.size):
            raise ValueError(f"{name} has shape {arr.shape}, expected {(t.size, x.size)}")
        cols[name] = arr.ravel()
        if errors and name in errors:
            cols[name + "_err"] = np.asarray(errors[name], dtype=float).ravel()
    write_table(path, cols, manifest_hash)


def read_jsonl(path) -> dict:
    """Load an ensemble JSON-lines file into arrays keyed by field name."""
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    if not rows:
        raise ValueError(f"{path} holds no records")
    out = {}
    for key in rows[0]:
        if key == "manifest":
            out[key] = rows[0][key]
            continue
        out[key] = np.asarray([r[key] for r in rows], dtype=float)
    return out
