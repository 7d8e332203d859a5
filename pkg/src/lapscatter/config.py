"""Scenario configuration files.

INI files with the sections ``[scenario]``, ``[model]``, ``[rigging]``,
``[perturbation]``, ``[grid]`` and ``[timecheck]``.  A preset supplies
defaults; any key given in the file overrides them.  Numbers may be written
as arithmetic in ``pi`` (for example ``v = 1/pi``).
"""
from __future__ import annotations

import ast
import configparser
import hashlib
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import LATTICE, QUADRATURE, Perturbation, build_model, build_rigging, rank_one, site_potential
from .sheaf import lattice_grid

PRESETS = {
    "friedrichs": {
        "model": {"kind": QUADRATURE, "interval": "0, 1", "N": "64"},
        "rigging": {"weight": "unit", "m": "1"},
        "perturbation": {"v": "1/pi"},
        "grid": {"points": "25", "lo": "0.02", "hi": "0.98"},
    },
    "lattice": {
        "model": {"kind": LATTICE, "L": "40"},
        "rigging": {"weight": "decay", "m": "5"},
        "perturbation": {"v": "0.5", "site": "0"},
        "grid": {"points": "25", "lo": "-1.9", "hi": "1.9"},
    },
    "chain": {
        "model": {"kind": QUADRATURE, "interval": "0, 1", "N": "64"},
        "rigging": {"weight": "unit", "m": "1"},
        "perturbation": {"v": "0.3", "v2": "0.4", "site": "0"},
        "grid": {"points": "25", "lo": "0.02", "hi": "0.98"},
    },
    "timecheck": {
        "model": {"kind": LATTICE, "L": "40"},
        "rigging": {"weight": "decay", "m": "5"},
        "perturbation": {"v": "0.5", "site": "0"},
        "grid": {"points": "25", "lo": "-1.9", "hi": "1.9"},
        "timecheck": {"energies": "-1, 0, 1", "L_big": "2000", "sigma": "20", "center": "-150"},
    },
    "custom": {},
}

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def number(text: str) -> float:
    """Parse a real number, allowing arithmetic on literals and ``pi``."""
    try:
        return float(text)
    except ValueError:
        pass

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ConfigError(f"not a number: {text!r}")

    try:
        value = ev(ast.parse(str(text).strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"not a finite number: {text!r}")
    return value


def numbers(text: str) -> list[float]:
    return [number(t) for t in str(text).split(",") if t.strip()]


def complex_matrix(text: str) -> np.ndarray:
    """``re,im; re,im; ...`` row-major entries of a square matrix."""
    entries = [e for e in str(text).split(";") if e.strip()]
    vals = []
    for e in entries:
        parts = numbers(e)
        if len(parts) == 1:
            parts.append(0.0)
        if len(parts) != 2:
            raise ConfigError(f"matrix entry {e!r} must be 're,im'")
        vals.append(complex(parts[0], parts[1]))
    n = int(round(math.sqrt(len(vals))))
    if n * n != len(vals) or n == 0:
        raise ConfigError("J must have a square number of entries")
    return np.array(vals).reshape(n, n)


@dataclass
class ScenarioConfig:
    name: str
    preset: str
    kind: str
    interval: tuple | None
    N: int | None
    L: int | None
    weight: str
    m: int
    sites: list | None
    J: np.ndarray
    J2: np.ndarray | None
    grid: np.ndarray
    energies: list
    flight: dict
    input_hash: str
    echo: dict = field(default_factory=dict)

    def build(self):
        model = build_model(self.kind, self.interval, self.N, self.L)
        rig = build_rigging(model, self.weight, self.m, self.sites)
        P1 = Perturbation(self.J)
        P2 = Perturbation(self.J2) if self.J2 is not None else None
        for P in (P1, P2):
            if P is not None and P.m != rig.m:
                raise ConfigError(f"J is {P.m}x{P.m} but m={rig.m}")
        return model, rig, P1, P2


def _merged(parser: configparser.ConfigParser, preset: str) -> dict:
    out = {sec: dict(vals) for sec, vals in PRESETS[preset].items()}
    for sec in parser.sections():
        out.setdefault(sec, {}).update(parser[sec])
    return out


def load_config(path) -> ScenarioConfig:
    """Read and fully validate a scenario file (raises ConfigError)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
        text = raw.decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    known = {"scenario", "model", "rigging", "perturbation", "grid", "timecheck"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    preset = parser.get("scenario", "preset", fallback="custom").strip().lower()
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = _merged(parser, preset)
    sc = cfg.get("scenario", {})
    name = sc.get("name", path.stem).strip()
    try:
        return _resolve(name, preset, cfg, hashlib.sha256(raw).hexdigest())
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def _resolve(name, preset, cfg, digest) -> ScenarioConfig:
    mod = cfg.get("model", {})
    rig = cfg.get("rigging", {})
    pert = cfg.get("perturbation", {})
    grid = cfg.get("grid", {})
    kind = mod["kind"].strip().lower()
    interval = tuple(numbers(mod["interval"])) if "interval" in mod else None
    if interval is not None and len(interval) != 2:
        raise ConfigError("interval needs two endpoints")
    N = int(number(mod["N"])) if "N" in mod else None
    L = int(number(mod["L"])) if "L" in mod else None
    model = build_model(kind, interval, N, L)
    m = int(number(rig.get("m", "1")))
    weight = rig.get("weight", "unit").strip()
    sites = [int(number(s)) for s in rig["sites"].split(",")] if "sites" in rig else None
    rigging = build_rigging(model, weight, m, sites)

    def strength(key):
        if key not in pert:
            return None
        v = number(pert[key])
        if model.kind == LATTICE:
            return site_potential(rigging, {int(number(pert.get("site", "0"))): v}).J
        return rank_one(rigging, v, int(number(pert.get("index", "0")))).J

    if "J" in pert:
        J = complex_matrix(pert["J"])
    else:
        J = strength("v")
        if J is None:
            raise ConfigError("perturbation needs J or v")
    J2 = complex_matrix(pert["J2"]) if "J2" in pert else strength("v2")
    Perturbation(J)
    if J2 is not None:
        Perturbation(J2)

    pts = int(number(grid.get("points", "25")))
    if pts < 1:
        raise ConfigError("grid needs at least one point")
    a, b = model.interval
    lo = number(grid.get("lo", str(a + 0.02 * (b - a))))
    hi = number(grid.get("hi", str(b - 0.02 * (b - a))))
    if not a < lo < hi < b:
        raise ConfigError("grid must lie strictly inside the spectrum")
    spacing = grid.get("spacing", "uniform").strip().lower()
    if spacing == "uniform":
        lam = np.linspace(lo, hi, pts)
    elif spacing == "gauss" and model.kind == LATTICE:
        lam = lattice_grid(pts, lo, hi)[0]
    else:
        raise ConfigError(f"unsupported grid spacing {spacing!r}")

    tc = cfg.get("timecheck", {})
    energies = numbers(tc["energies"]) if "energies" in tc else []
    flight = {k: number(tc[k]) for k in ("L_big", "sigma", "center") if k in tc}
    if energies and model.kind != LATTICE:
        raise ConfigError("time checks need the lattice model")
    if any(not -2 < e < 2 for e in energies):
        raise ConfigError("time-check energies must lie in (-2, 2)")

    echo = {"name": name, "preset": preset}
    for sec in ("model", "rigging", "perturbation", "grid", "timecheck"):
        if cfg.get(sec):
            echo[sec] = dict(sorted(cfg[sec].items()))
    return ScenarioConfig(name, preset, model.kind, interval, N, L, weight, m, sites, J, J2,
                          lam, energies, flight, digest, echo)
