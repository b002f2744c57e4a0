"""Flat JSON run configuration.

Keys are dotted names ("grid.N", "scan.eps", ...). Every key has a type, a
default and a check; loading collects all violations before failing.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Callable


class ConfigError(ValueError):
    """Raised with every violated key listed."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


@dataclass(frozen=True)
class Key:
    name: str
    type: type | str   # python type, or "floats" / "ints" for lists
    default: Any
    doc: str
    check: Callable[[Any], bool] | None = None
    requirement: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


SCHEMA: tuple[Key, ...] = (
    Key("grid.N", int, 32, "grid points per axis", lambda n: n >= 8 and n % 2 == 0, "even integer >= 8"),
    Key("grid.L", float, 2 * math.pi, "box side", _pos, "> 0"),
    Key("fluid.nu", float, 0.05, "viscosity", _pos, "> 0"),
    Key("fluid.lam", float, 1.0, "mollifier parameter lambda", lambda x: x >= 1, ">= 1"),
    Key("stepper.dt", float, 1e-3, "time step", _pos, "> 0"),
    Key("stepper.T", float, 1.0, "final time", _nonneg, ">= 0"),
    Key("stepper.stride", int, 10, "keep every stride-th state", lambda x: x >= 1, ">= 1"),
    Key("init.kind", str, "random", "initial datum: random | beltrami | abc | snapshot",
        lambda s: s in ("random", "beltrami", "abc", "snapshot"), "one of random, beltrami, abc, snapshot"),
    Key("init.seed", int, 0, "seed of the random initial field"),
    Key("init.amplitude", float, 1.0, "spectrum amplitude or Beltrami amplitude", _nonneg, ">= 0"),
    Key("init.exponent", float, 5.0 / 3.0, "shell-energy power-law exponent"),
    Key("init.cutoff", int, 4, "largest excited shell", lambda x: x >= 1, ">= 1"),
    Key("init.path", str, "", "snapshot file when init.kind = snapshot"),
    Key("scan.eps", float, 1e-6, "flagging threshold on delta", _pos, "> 0"),
    Key("scan.spacing_x", float, 0.0, "lattice spacing in space (0: L/16)", _nonneg, ">= 0"),
    Key("scan.spacing_t", float, 0.0, "lattice spacing in time (0: T/16)", _nonneg, ">= 0"),
    Key("scan.n_min", int, 0, "finest scale index (0: finest resolved)", lambda x: x <= 0, "<= 0"),
    Key("scan.tail", int, 3, "number of finest scales that must all exceed eps", lambda x: x >= 1, ">= 1"),
    Key("scan.window", str, "backward", "cylinder window: backward | centered",
        lambda s: s in ("backward", "centered"), "backward or centered"),
    Key("scan.oversample", int, 1, "quadrature refinement factor", lambda x: x >= 1, ">= 1"),
    Key("diagnose.x0", "floats", [0.0, 0.0, 0.0], "point of the scale chain", lambda v: len(v) == 3, "three numbers"),
    Key("diagnose.t0", float, 0.0, "time of the scale chain (0: final time)", _nonneg, ">= 0"),
    Key("renorm.p", int, 20, "scale gap p", lambda x: x >= 1, ">= 1"),
    Key("renorm.C", float, 1.0, "map constant C", _pos, "> 0"),
    Key("renorm.rho", float, 1e-2, "target ball radius", _pos, "> 0"),
    Key("renorm.delta", float, 0.0, "delta used for the traces", _nonneg, ">= 0"),
    Key("renorm.delta_lo", float, 1e-80, "threshold search lower end", _pos, "> 0"),
    Key("renorm.delta_hi", float, 1.0, "threshold search upper end", _pos, "> 0"),
    Key("renorm.k_max", int, 200, "iteration cap", lambda x: x >= 1, ">= 1"),
    Key("renorm.net_radius", float, 1e3, "radius of the starting net", _pos, "> 0"),
    Key("renorm.net_points", int, 5, "net points per axis", lambda x: x >= 2, ">= 2"),
    Key("ensemble.seeds", "ints", [0, 1, 2], "seeds of the random-field ensemble", lambda v: len(v) >= 1, "nonempty"),
    Key("ensemble.N", "ints", [32], "resolutions of the ensemble",
        lambda v: len(v) >= 1 and all(n >= 8 and n % 2 == 0 for n in v), "even integers >= 8"),
    Key("verify.holder_trials", int, 1000, "random Holder tuples", lambda x: x >= 1, ">= 1"),
    Key("dimension.points", str, "", "item file for the dimension subcommand"),
    Key("dimension.levels", int, 4, "finest cover levels used in the slope fit", lambda x: x >= 2, ">= 2"),
    Key("cantor.min_generation", int, 4, "first Cantor generation", lambda x: x >= 0, ">= 0"),
    Key("cantor.max_generation", int, 12, "last Cantor generation", lambda x: x >= 0, ">= 0"),
    Key("io.out", str, "out", "output directory"),
)

KEYS = {k.name: k for k in SCHEMA}


def _coerce(key: Key, value):
    """Return (value, problem)."""
    t = key.type
    if t in ("floats", "ints"):
        if not isinstance(value, list):
            return None, f"{key.name}: expected a list, got {type(value).__name__}"
        want = float if t == "floats" else int
        out = []
        for v in value:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            if not ok or (want is int and float(v) != int(v)):
                return None, f"{key.name}: list entries must be {want.__name__}s"
            out.append(want(v))
        return out, None
    if t is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return None, f"{key.name}: expected a finite number, got {value!r}"
        return float(value), None
    if t is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            return None, f"{key.name}: expected an integer, got {value!r}"
        return int(value), None
    if t is str:
        if not isinstance(value, str):
            return None, f"{key.name}: expected a string, got {value!r}"
        return value, None
    raise TypeError(t)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getitem__(self, name: str):
        return self.values[name]

    def get(self, name: str, default=None):
        return self.values.get(name, default)

    def to_json(self) -> str:
        return json.dumps(self.values, sort_keys=True, indent=2)

    @property
    def hash(self) -> str:
        canon = json.dumps(self.values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def validate(raw: dict) -> RunConfig:
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object of dotted keys"])
    for name in sorted(set(raw) - set(KEYS)):
        problems.append(f"{name}: unknown key")
    values = {k.name: k.default for k in SCHEMA}
    for name in sorted(set(raw) & set(KEYS)):
        key = KEYS[name]
        v, err = _coerce(key, raw[name])
        if err:
            problems.append(err)
            continue
        if key.check is not None and not key.check(v):
            problems.append(f"{name}: {v!r} violates requirement ({key.requirement})")
            continue
        values[name] = v
    # cross-key checks
    if values["stepper.T"] > 0:
        n = values["stepper.T"] / values["stepper.dt"]
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            problems.append("stepper.T: must be a multiple of stepper.dt")
    if values["init.cutoff"] > values["grid.N"] / 3:
        problems.append("init.cutoff: exceeds grid.N / 3")
    if values["init.kind"] == "snapshot" and not values["init.path"]:
        problems.append("init.path: required when init.kind = snapshot")
    if values["renorm.delta_lo"] >= values["renorm.delta_hi"]:
        problems.append("renorm.delta_lo: must be below renorm.delta_hi")
    if values["cantor.min_generation"] > values["cantor.max_generation"]:
        problems.append("cantor.min_generation: must not exceed cantor.max_generation")
    if problems:
        raise ConfigError(problems)
    return RunConfig(values)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    raw: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError([f"{path}: not valid JSON ({e})"]) from None
        except OSError as e:
            raise ConfigError([f"{path}: unreadable ({e.strerror})"]) from None
    if overrides:
        if not isinstance(raw, dict):
            raise ConfigError(["top level must be an object of dotted keys"])
        raw = {**raw, **overrides}
    return validate(raw)


def parse_override(name: str, text: str):
    """Parse a command-line value for ``name``; lists are comma separated."""
    key = KEYS[name]
    if key.type in ("floats", "ints"):
        parts = [p for p in text.split(",") if p.strip()]
        try:
            return [float(p) for p in parts] if key.type == "floats" else [int(p) for p in parts]
        except ValueError:
            return text
    if key.type is str:
        return text
    try:
        return int(text) if key.type is int else float(text)
    except ValueError:
        return text


__all__ = ["ConfigError", "Key", "SCHEMA", "KEYS", "RunConfig", "validate", "load_config", "parse_override"]
