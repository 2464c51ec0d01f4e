"""Scenario configuration: YAML blocks, validation and the canonical hash.

A configuration has the blocks ``equation``, ``grid``, ``data``,
``solver``, ``mode`` and ``seed``, plus the mode-specific blocks
``critical`` (``R_max``), ``scan`` and ``verify`` (``suite``).  Data
entries are presets (``gaussian``, ``sine``, ``zero``) or ``file``
references to plain-text tables in the dump format.  ``data.h`` is the
boundary control used by ``simulate``; the control modes compute it.
"""
import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import ComplexField, EquationParams, GridSpec, SpaceTimeField, TimeSeries
from .errors import ConfigError
from .problem import ControlProblem
from .scenarios import PRESETS, preset

MODES = ("simulate", "control-linear", "control-nonlinear", "critical-lengths", "scan", "verify")
SUITES = ("all", "duality", "energy", "gramian", "criticality", "picard")
SCAN_KINDS = ("interpolation", "L7", "L8", "L9", "observability", "smallness")
DATA_KEYS = ("u0", "uT", "mu", "nu", "f", "h")

DEFAULTS = {
    "mode": "simulate",
    "seed": 0,
    "equation": {"a": 0.0, "b": 1.0, "lambda": 0.0, "beta": 0.0, "gamma": 0.0, "p0": 2.0, "p1": 1.0},
    "grid": {"R": 3.0, "T": 0.5, "Nx": 24, "Nt": 96},
    "data": {k: {"preset": "zero"} for k in DATA_KEYS},
    "solver": {
        "cg_tol": 1e-10, "cg_max_iter": None, "eps": 0.0, "method": "auto",
        "fp_tol": 1e-9, "terminal_tol": 1e-6, "pde_tol": 1e-6, "under_relaxation": 1.0,
        "picard_max_iter": 50, "radius": None, "linear_terminal_tol": 1e-8,
    },
    "critical": {"R_max": 10.0},
    "scan": {"kind": "interpolation", "samples": 1000, "p": 2.0, "scales": [0.1, 1.0, 10.0],
             "cutoff": 60.0},
    "verify": {"suite": "all"},
}

_INT_KEYS = {("grid", "Nx"), ("grid", "Nt"), ("solver", "cg_max_iter"), ("solver", "picard_max_iter"),
             ("scan", "samples")}
_STR_KEYS = {("solver", "method"), ("scan", "kind"), ("verify", "suite")}


def _number(value, where, integer=False):
    if value is None:
        return None
    if isinstance(value, bool):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    try:
        # PyYAML reads 1e-10 (no dot) as a string
        num = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a number, got {value!r}") from None
    if not math.isfinite(num):
        raise ConfigError(f"{where} must be finite, got {value!r}")
    if integer:
        if num != int(num):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return int(num)
    return num


def _merge(defaults, given, where):
    out = copy.deepcopy(defaults)
    if given is None:
        return out
    if not isinstance(given, dict):
        raise ConfigError(f"block {where!r} must be a mapping")
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {where}.{key}; known: {', '.join(defaults)}")
        out[key] = value
    return out


def _normalise_data(entry, key, base_dir):
    if entry is None:
        return {"preset": "zero"}
    if not isinstance(entry, dict):
        raise ConfigError(f"data.{key} must be a mapping with 'preset' or 'file'")
    entry = dict(entry)
    if "file" in entry:
        if set(entry) != {"file"}:
            raise ConfigError(f"data.{key}: 'file' takes no other parameters")
        path = Path(entry["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return {"file": str(path)}
    name = entry.get("preset")
    if name not in PRESETS:
        raise ConfigError(f"data.{key}: unknown preset {name!r}; known presets: {', '.join(PRESETS)}")
    for k, v in entry.items():
        if k == "preset":
            continue
        if k == "amplitude" and isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ConfigError(f"data.{key}.amplitude must be a number or a (re, im) pair")
            entry[k] = [_number(v[0], f"data.{key}.amplitude"), _number(v[1], f"data.{key}.amplitude")]
        else:
            entry[k] = _number(v, f"data.{key}.{k}", integer=(k == "n"))
    return entry


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved configuration (all defaults filled in)."""

    raw: dict = field(repr=False)
    declared_mode: str = None

    @property
    def mode(self):
        return self.raw["mode"]

    @property
    def seed(self):
        return self.raw["seed"]

    @property
    def solver(self):
        return self.raw["solver"]

    def params(self):
        e = self.raw["equation"]
        return EquationParams(a=e["a"], b=e["b"], lam=e["lambda"], beta=e["beta"], gamma=e["gamma"],
                              p0=e["p0"], p1=e["p1"])

    def grid(self):
        g = self.raw["grid"]
        return GridSpec(g["R"], g["T"], g["Nx"], g["Nt"])

    def problem(self):
        """The control problem described by the equation, grid and data blocks."""
        grid = self.grid()
        d = self.raw["data"]
        u0 = _field(d["u0"], grid, "space")
        uT = _field(d["uT"], grid, "space")
        mu = _field(d["mu"], grid, "time")
        nu = _field(d["nu"], grid, "time")
        f = _field(d["f"], grid, "spacetime")
        return ControlProblem(self.params(), grid, u0, uT, mu, nu, f)

    def control(self):
        grid = self.grid()
        return _field(self.raw["data"]["h"], grid, "time")

    def canonical(self):
        """Canonical JSON; referenced data files enter through their SHA-256."""
        raw = copy.deepcopy(self.raw)
        for entry in raw["data"].values():
            if "file" in entry:
                try:
                    entry["sha256"] = hashlib.sha256(Path(entry["file"]).read_bytes()).hexdigest()
                except OSError:
                    entry["sha256"] = None
        return json.dumps(raw, sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, mode=None, seed=None, suite=None):
        raw = copy.deepcopy(self.raw)
        if mode is not None:
            raw["mode"] = mode
        if seed is not None:
            raw["seed"] = int(seed)
        if suite is not None:
            raw["verify"]["suite"] = suite
        return from_dict(raw, declared_mode=self.declared_mode)


def _load_table(path, ncols, nrows, what):
    try:
        arr = np.loadtxt(path, comments="#", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"malformed {what} file {path}: {exc}") from None
    if arr.shape != (nrows, ncols):
        raise ConfigError(f"{what} file {path} must have {nrows} rows and {ncols} columns, got {arr.shape}")
    return arr[:, -2] + 1j * arr[:, -1]


def _field(entry, grid, kind):
    if "file" in entry:
        path = entry["file"]
        if kind == "space":
            return ComplexField(_load_table(path, 3, grid.Nx + 2, "spatial"), grid)
        if kind == "time":
            return TimeSeries(_load_table(path, 3, grid.Nt + 1, "time series"), grid)
        vals = _load_table(path, 4, (grid.Nt + 1) * (grid.Nx + 2), "space-time")
        return SpaceTimeField(vals.reshape(grid.Nt + 1, grid.Nx + 2), grid)
    if kind == "space":
        return ComplexField(preset(entry, grid.x, grid.R), grid)
    if kind == "time":
        return TimeSeries(preset(entry, grid.t, grid.T), grid)
    # space-time sources from presets are constant in time
    row = preset(entry, grid.x, grid.R)
    return SpaceTimeField(np.tile(row, (grid.Nt + 1, 1)), grid)


def from_dict(given, base_dir=None, declared_mode=None):
    """Validate a configuration mapping and fill in defaults."""
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError("configuration must be a mapping")
    if declared_mode is None:
        declared_mode = given.get("mode")
    unknown = set(given) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration blocks: {', '.join(sorted(unknown))}")
    raw = {"mode": given.get("mode", DEFAULTS["mode"]), "seed": given.get("seed", DEFAULTS["seed"])}
    if raw["mode"] not in MODES:
        raise ConfigError(f"unknown mode {raw['mode']!r}; known modes: {', '.join(MODES)}")
    raw["seed"] = _number(raw["seed"], "seed", integer=True)
    if raw["seed"] < 0:
        raise ConfigError("seed must be non-negative")
    for block in ("equation", "grid", "solver", "critical", "scan", "verify"):
        merged = _merge(DEFAULTS[block], given.get(block), block)
        for k, v in merged.items():
            if (block, k) in _STR_KEYS:
                merged[k] = str(v)
            elif block == "scan" and k == "scales":
                if not isinstance(v, (list, tuple)):
                    raise ConfigError("scan.scales must be a list")
                merged[k] = [_number(s, "scan.scales") for s in v]
            else:
                merged[k] = _number(v, f"{block}.{k}", integer=(block, k) in _INT_KEYS)
        raw[block] = merged
    data = _merge(DEFAULTS["data"], given.get("data"), "data")
    raw["data"] = {k: _normalise_data(v, k, base_dir) for k, v in data.items()}
    if raw["verify"]["suite"] not in SUITES:
        raise ConfigError(f"unknown verify suite {raw['verify']['suite']!r}; known suites: {', '.join(SUITES)}")
    if raw["scan"]["kind"] not in SCAN_KINDS:
        raise ConfigError(f"unknown scan kind {raw['scan']['kind']!r}; known kinds: {', '.join(SCAN_KINDS)}")
    if raw["solver"]["method"] not in ("auto", "cg", "direct"):
        raise ConfigError("solver.method must be auto, cg or direct")
    cfg = ScenarioConfig(raw, declared_mode)
    # surfaces grid and equation invariant violations as ConfigError
    cfg.params()
    cfg.grid()
    return cfg


def load_config(path):
    """Read a YAML configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    try:
        given = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration {path} is not valid YAML: {exc}") from None
    return from_dict(given, base_dir=path.parent)
