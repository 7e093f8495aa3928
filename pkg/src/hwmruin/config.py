"""Typed INI run configuration.

Flat key=value pairs in fixed sections, a mandatory schema version, and
strict rejection of unknown sections and keys. Parsing resolves every
default, so two configs with the same resolved content hash identically
regardless of key order or omitted defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, PiBox, ThetaSet
from .simulate import SimConfig
from .solver import SolverConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "config_hash"]

SCHEMA_VERSION = 1


class ConfigError(Exception):
    """Config or schema violation; rendered with a file:line anchor."""

    def __init__(self, message: str, key: str | None = None, section: str | None = None):
        super().__init__(message)
        self.message = message
        self.key = key
        self.section = section

    def render(self, path: str, text: str | None = None) -> str:
        line = 0
        if text is not None:
            line = _locate(text, self.key, self.section)
        return f"{path}:{line}: {self.message}" if line else f"{path}: {self.message}"


def _locate(text: str, key: str | None, section: str | None) -> int:
    sec_pat = re.compile(r"^\s*\[([^\]]+)\]")
    key_pat = re.compile(r"^\s*([^=:\s]+)\s*[=:]") if key else None
    current = None
    sec_line = 0
    for i, raw in enumerate(text.splitlines(), start=1):
        m = sec_pat.match(raw)
        if m:
            current = m.group(1)
            if section is not None and current == section:
                sec_line = i
            continue
        if key_pat and (section is None or current == section):
            k = key_pat.match(raw)
            if k and k.group(1) == key:
                return i
    return sec_line


def _parse_floats(raw: str, n: int, key: str, section: str) -> tuple[float, ...]:
    parts = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
    if len(parts) != n:
        raise ConfigError(f"key '{key}' needs {n} numbers, got {len(parts)}", key, section)
    try:
        return tuple(float(s) for s in parts)
    except ValueError:
        raise ConfigError(f"key '{key}' has a non-numeric entry: {raw!r}", key, section)


def _parse_probes(raw: str, key: str, section: str) -> tuple[tuple[float, float, float], ...]:
    groups = [g for g in raw.split(";") if g.strip()]
    return tuple(_parse_floats(g, 3, key, section) for g in groups)


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

# key -> (type tag, required, default); type tags: int float bool str
# floats2 floats4 ints12 probes choice:a|b|c
_SCHEMA: dict[str, dict[str, tuple[str, bool, object]]] = {
    "run": {
        "schema_version": ("int", True, None),
        "out_dir": ("str", False, ""),
        "threads": ("int", False, 1),
    },
    "model": {
        "r": ("float", True, None),
        "c": ("float", True, None),
        "R": ("float", True, None),
        "lambda_d": ("float", True, None),
        "mu": ("floats2", True, None),
        "sigma": ("floats4", True, None),
        "mu_b": ("floats2", False, None),
        "sigma_b": ("floats4", False, None),
        "q": ("floats2", False, (0.0, 0.0)),
        "epsilon": ("float", False, 1.0),
        "pi_lo": ("floats2", False, (-5.0, -5.0)),
        "pi_hi": ("floats2", False, (5.0, 5.0)),
        "theta_kind": ("choice:unconstrained|box|ball|zero", False, "unconstrained"),
        "theta_lo": ("floats2", False, None),
        "theta_hi": ("floats2", False, None),
        "theta_radius": ("float", False, None),
    },
    "grid": {
        "nx": ("int", False, 81),
        "ny1": ("int", False, 17),
        "ny2": ("int", False, 17),
        "y_max": ("float", False, None),
    },
    "solver": {
        "tol": ("float", False, 1e-7),
        "max_iters": ("int", False, 100),
        "max_sweeps": ("int", False, 40000),
        "pi_lattice": ("ints12", False, (11, 11)),
        "omega": ("float", False, 1.0),
    },
    "sim": {
        "dt": ("float", False, 1e-2),
        "t_max": ("float", False, 100.0),
        "n_paths": ("int", False, 100_000),
        "seed": ("int", False, 20240901),
        "x0": ("float", False, None),
        "y0": ("floats2", False, (0.0, 0.0)),
        "policy": ("choice:constant|table", False, "constant"),
        "pi_const": ("floats2", False, (0.0, 0.0)),
        "theta_const": ("floats2", False, (0.0, 0.0)),
        "policy_csv": ("str", False, ""),
        "store_trajectories": ("bool", False, False),
        "n_store": ("int", False, 10),
    },
    "verify": {
        "suite": ("choice:quick|full", False, "quick"),
        "c_disc": ("float", False, 1.0),
        "tol": ("float", False, 1.0),
        "probes": ("probes", False, ()),
    },
    "sweep": {
        "parameter": ("choice:epsilon|q", False, "epsilon"),
        "values": ("str", False, ""),
        "probes": ("probes", False, ()),
    },
}

_REQUIRED_SECTIONS = ("run", "model")


def _convert(tag: str, raw: str, key: str, section: str):
    if tag == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key '{key}' must be an integer, got {raw!r}", key, section)
    if tag == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key '{key}' must be a number, got {raw!r}", key, section)
    if tag == "bool":
        v = _BOOL.get(raw.strip().lower())
        if v is None:
            raise ConfigError(f"key '{key}' must be a boolean, got {raw!r}", key, section)
        return v
    if tag == "str":
        return raw.strip()
    if tag == "floats2":
        return _parse_floats(raw, 2, key, section)
    if tag == "floats4":
        return _parse_floats(raw, 4, key, section)
    if tag == "ints12":
        parts = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
        if len(parts) not in (1, 2):
            raise ConfigError(f"key '{key}' needs 1 or 2 integers", key, section)
        try:
            vals = tuple(int(s) for s in parts)
        except ValueError:
            raise ConfigError(f"key '{key}' has a non-integer entry: {raw!r}", key, section)
        return vals * 2 if len(vals) == 1 else vals
    if tag == "probes":
        return _parse_probes(raw, key, section)
    if tag.startswith("choice:"):
        allowed = tag.split(":", 1)[1].split("|")
        v = raw.strip()
        if v not in allowed:
            raise ConfigError(
                f"key '{key}' must be one of {', '.join(allowed)}, got {v!r}", key, section
            )
        return v
    raise AssertionError(tag)


@dataclass(eq=False)
class RunConfig:
    """Fully resolved run configuration (all defaults filled)."""

    data: dict
    path: str
    text: str

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    # -- builders ---------------------------------------------------------

    def model_params(self) -> ModelParams:
        m = self.data["model"]
        sig = np.array(m["sigma"], dtype=float).reshape(2, 2)
        sig_b = None if m["sigma_b"] is None else np.array(m["sigma_b"], dtype=float).reshape(2, 2)
        return ModelParams(
            r=m["r"], c=m["c"], ruin_level=m["R"], default_rate=m["lambda_d"],
            mu=m["mu"], sigma=sig, mu_b=m["mu_b"], sigma_b=sig_b,
            q=m["q"], eps=m["epsilon"],
        )

    def pi_set(self) -> PiBox:
        m = self.data["model"]
        return PiBox(lo=m["pi_lo"], hi=m["pi_hi"], n=self.data["solver"]["pi_lattice"])

    def theta_set(self) -> ThetaSet:
        m = self.data["model"]
        kind = m["theta_kind"]
        if kind == "zero":
            return ThetaSet.zero()
        if kind == "box":
            if m["theta_lo"] is None or m["theta_hi"] is None:
                raise ConfigError(
                    "theta_kind 'box' needs keys 'theta_lo' and 'theta_hi'",
                    "theta_kind", "model",
                )
            return ThetaSet.box(m["theta_lo"], m["theta_hi"])
        if kind == "ball":
            if m["theta_radius"] is None:
                raise ConfigError(
                    "theta_kind 'ball' needs key 'theta_radius'", "theta_kind", "model"
                )
            return ThetaSet.ball(m["theta_radius"])
        return ThetaSet()

    def solver_config(self) -> SolverConfig:
        g, s = self.data["grid"], self.data["solver"]
        return SolverConfig(
            pi_set=self.pi_set(), theta_set=self.theta_set(),
            nx=g["nx"], ny1=g["ny1"], ny2=g["ny2"], y_max=g["y_max"],
            tol=s["tol"], max_iters=s["max_iters"], max_sweeps=s["max_sweeps"],
            omega=s["omega"],
        )

    def sim_config(self, threads: int | None = None) -> SimConfig:
        s = self.data["sim"]
        return SimConfig(
            n_paths=s["n_paths"], dt=s["dt"], t_max=s["t_max"], seed=s["seed"],
            n_workers=threads if threads is not None else self.data["run"]["threads"],
        )

    def canonical(self) -> dict:
        """JSON-ready resolved config; the identity that gets hashed."""
        out = {}
        for sec in sorted(self.data):
            out[sec] = {k: self.data[sec][k] for k in sorted(self.data[sec])}
        return out


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _validate_values(data: dict):
    def bad(msg, key, section):
        raise ConfigError(msg, key, section)

    if data["run"]["schema_version"] != SCHEMA_VERSION:
        bad(
            f"key 'schema_version' must be {SCHEMA_VERSION}, "
            f"got {data['run']['schema_version']}",
            "schema_version", "run",
        )
    if data["run"]["threads"] < 1:
        bad("key 'threads' must be >= 1", "threads", "run")
    g = data["grid"]
    for k in ("nx", "ny1", "ny2"):
        if g[k] < 3:
            bad(f"key '{k}' must be >= 3", k, "grid")
    if g["y_max"] is not None and not g["y_max"] > 0.0:
        bad(f"key 'y_max' must be > 0, got {g['y_max']}", "y_max", "grid")
    s = data["solver"]
    if not s["tol"] > 0.0:
        bad("key 'tol' must be > 0", "tol", "solver")
    if s["max_iters"] < 1:
        bad("key 'max_iters' must be >= 1", "max_iters", "solver")
    if any(n < 1 for n in s["pi_lattice"]):
        bad("key 'pi_lattice' entries must be >= 1", "pi_lattice", "solver")
    if not 0.0 < s["omega"] <= 1.0:
        bad("key 'omega' must lie in (0, 1]", "omega", "solver")
    sim = data["sim"]
    if not sim["dt"] > 0.0:
        bad("key 'dt' must be > 0", "dt", "sim")
    if not sim["t_max"] > 0.0:
        bad("key 't_max' must be > 0", "t_max", "sim")
    if sim["n_paths"] < 1:
        bad("key 'n_paths' must be >= 1", "n_paths", "sim")
    if sim["n_store"] < 0:
        bad("key 'n_store' must be >= 0", "n_store", "sim")
    v = data["verify"]
    if v["c_disc"] < 0.0:
        bad("key 'c_disc' must be >= 0", "c_disc", "verify")
    if v["tol"] < 0.0:
        bad("key 'tol' must be >= 0", "tol", "verify")
    m = data["model"]
    lo, hi = m["pi_lo"], m["pi_hi"]
    if not (lo[0] <= 0.0 <= hi[0] and lo[1] <= 0.0 <= hi[1]):
        bad("keys 'pi_lo'/'pi_hi' must bracket 0 in each coordinate", "pi_lo", "model")


def parse_config(path: str) -> RunConfig:
    """Parse and fully validate; ConfigError carries the offending key for
    line-anchored reporting."""
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}")

    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case-sensitive; 'R' stays 'R'
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}")

    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section '[{sec}]'", None, sec)
    for sec in _REQUIRED_SECTIONS:
        if not cp.has_section(sec):
            raise ConfigError(f"missing required section '[{sec}]'")

    data: dict = {}
    for sec, keys in _SCHEMA.items():
        got = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for k in got:
            if k not in keys:
                raise ConfigError(f"unknown key '{k}' in section [{sec}]", k, sec)
        out = {}
        for k, (tag, required, default) in keys.items():
            if k in got:
                out[k] = _convert(tag, got[k], k, sec)
            elif required:
                raise ConfigError(f"missing required key '{k}' in section [{sec}]", None, sec)
            else:
                out[k] = default
        data[sec] = out

    _validate_values(data)
    cfg = RunConfig(data=data, path=path, text=text)
    try:
        # surface model-level violations (R >= c/r, singular sigma, ...)
        # at parse time with exit-2 semantics
        from .model import validate_params

        validate_params(cfg.model_params())
        cfg.theta_set()
    except ValueError as e:
        msg = str(e)
        # surface the config-file key names, not the internal field names
        for field_name, key in (
            ("ruin_level", "R"),
            ("default_rate", "lambda_d"),
            ("eps", "epsilon"),
        ):
            msg = msg.replace(field_name, key)
        raise ConfigError(msg, None, "model")
    return cfg
