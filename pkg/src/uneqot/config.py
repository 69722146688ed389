"""Run configuration: strict YAML parsing and problem builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .best_reply import InteractionSpec
from .costs import FAMILIES, CostModel
from .exceptions import ConfigurationError
from .measures import DOMAINS, SourceMeasure, TargetDensity
from ._validation import check_interval, check_positive

COMMANDS = ("solve-nested", "solve-congestion", "best-reply", "hedonic", "check-nestedness", "oracle-validate",
            "reproduce-paper")

_TOP_KEYS = ("command", "grid", "tol", "seed", "output_dir", "threads", "problem")

COST_DEFAULT = {"family": "bilinear_arc", "params": {}, "m": None}
DOMAIN_DEFAULT = {"kind": "quarter_disk", "bounds": None, "density": "uniform", "values": None}
TARGET_DEFAULT = {"kind": "uniform", "interval": [0.0, 0.5 * math.pi], "rate": 1.0, "values": None}

PROBLEM_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "solve-nested": {"cost": COST_DEFAULT, "domain": DOMAIN_DEFAULT, "target": TARGET_DEFAULT,
                     "n_samples": 100_000},
    "check-nestedness": {"cost": COST_DEFAULT, "domain": DOMAIN_DEFAULT, "target": TARGET_DEFAULT,
                         "dmin_pairs": []},
    "solve-congestion": {"cost": COST_DEFAULT, "domain": DOMAIN_DEFAULT, "f": "entropy", "p": 2.0,
                         "allow_nonconforming": False, "y_lo": 0.0, "ybar": 0.5},
    "best-reply": {"cost": {"family": "quadratic", "params": {}, "m": None},
                   "domain": {"kind": "unit_interval", "bounds": None, "density": "uniform", "values": None},
                   "V": {"kind": "quadratic", "alpha": 1.0, "y0": [0.0], "coeffs": []},
                   "W": {"kind": "quadratic_interaction", "beta": 1.0},
                   "n": 1, "Y": [-1.0, 2.0], "n_particles": 1000, "max_iter": 200},
    "hedonic": {"buyer": {"cost": {"family": "hedonic_buyer", "params": {}, "m": None},
                          "domain": {"kind": "rectangle", "bounds": None, "density": "uniform", "values": None}},
                "seller": {"cost": {"family": "hedonic_seller", "params": {}, "m": None},
                           "domain": {"kind": "unit_interval", "bounds": None, "density": "uniform",
                                      "values": None}},
                "interval": [-3.0, 3.0]},
    "oracle-validate": {"n_pairs": 50, "n_samples": 1_000_000},
    "reproduce-paper": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9]},
}

DEFAULT_GRID = {"solve-nested": 512, "check-nestedness": 512, "solve-congestion": 512, "hedonic": 1024}
DEFAULT_TOL = {"solve-congestion": 1e-13, "best-reply": 1e-8, "check-nestedness": 1e-9}


def _merge(defaults: Dict[str, Any], given: Any, path: str) -> Dict[str, Any]:
    """Fill ``defaults`` from ``given``; unknown keys raise with their full path."""
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigurationError(f"{path or 'config'} must be a mapping, got {type(given).__name__}")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigurationError("unknown field(s): " + ", ".join(where + str(k) for k in unknown))
    out = {}
    for key, dflt in defaults.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(dflt, dict) and dflt and key != "params":
            out[key] = _merge(dflt, given.get(key), sub)
        elif key in given:
            out[key] = given[key]
        else:
            out[key] = dflt.copy() if isinstance(dflt, (dict, list)) else dflt
    return out


@dataclass
class RunConfig:
    """One command with its problem description and numerical controls."""

    command: str
    problem: Dict[str, Any] = field(default_factory=dict)
    grid: Optional[int] = None
    tol: Optional[float] = None
    seed: int = 0
    output_dir: str = "out"
    threads: Optional[int] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        self.problem = _merge(PROBLEM_DEFAULTS[self.command], self.problem, "problem")
        if self.grid is None:
            self.grid = DEFAULT_GRID.get(self.command)
        if self.grid is not None:
            if isinstance(self.grid, bool) or not isinstance(self.grid, (int, np.integer)) or self.grid < 8:
                raise ConfigurationError(f"grid must be an integer >= 8, got {self.grid!r}")
            self.grid = int(self.grid)
        if self.tol is None:
            self.tol = DEFAULT_TOL.get(self.command)
        if self.tol is not None:
            self.tol = check_positive("tol", self.tol)
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.threads is not None and (not isinstance(self.threads, int) or self.threads < 1):
            raise ConfigurationError(f"threads must be a positive integer, got {self.threads!r}")
        self._validate_enums()

    def _validate_enums(self):
        p = self.problem
        for side in ("cost",), ("buyer", "cost"), ("seller", "cost"):
            node = p
            for key in side:
                node = node.get(key) if isinstance(node, dict) else None
            if node is not None and node["family"] not in FAMILIES:
                raise ConfigurationError(f"problem.{'.'.join(side)}.family must be one of {FAMILIES}")
        for side in ("domain",), ("buyer", "domain"), ("seller", "domain"):
            node = p
            for key in side:
                node = node.get(key) if isinstance(node, dict) else None
            if node is not None and node["kind"] not in DOMAINS:
                raise ConfigurationError(f"problem.{'.'.join(side)}.kind must be one of {DOMAINS}")
        if "target" in p and p["target"]["kind"] not in ("uniform", "exponential", "values"):
            raise ConfigurationError("problem.target.kind must be uniform, exponential or values")
        if "f" in p and p["f"] not in ("entropy", "power"):
            raise ConfigurationError("problem.f must be entropy or power")
        if self.command == "reproduce-paper":
            bad = [c for c in p["criteria"] if c not in range(1, 10)]
            if bad:
                raise ConfigurationError(f"problem.criteria entries must be in 1..9, got {bad}")

    def as_dict(self) -> Dict[str, Any]:
        return {"command": self.command, "grid": self.grid, "tol": self.tol, "seed": self.seed,
                "output_dir": self.output_dir, "threads": self.threads, "problem": self.problem}


def parse_config(data: Any) -> RunConfig:
    """Build a :class:`RunConfig` from a parsed YAML tree, rejecting unknown fields."""
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping at top level")
    unknown = sorted(set(data) - set(_TOP_KEYS))
    if unknown:
        raise ConfigurationError("unknown field(s): " + ", ".join(map(str, unknown)))
    if "command" not in data:
        raise ConfigurationError("missing required field: command")
    return RunConfig(**{k: data[k] for k in _TOP_KEYS if k in data})


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed YAML in {path}: {exc}") from exc
    return parse_config(data)


# -- builders ------------------------------------------------------------------

def build_cost(spec: Dict[str, Any], dim: Optional[int] = None) -> CostModel:
    """Cost model; the source dimension defaults to ``dim`` (the domain's)."""
    params = dict(spec.get("params") or {})
    m = spec.get("m")
    if m is None:
        m = dim if dim is not None else (1 if spec["family"] == "hedonic_seller" else 2)
    return CostModel(spec["family"], params, int(m))


def build_domain(spec: Dict[str, Any]) -> SourceMeasure:
    bounds = tuple(spec["bounds"]) if spec.get("bounds") is not None else None
    values = np.asarray(spec["values"], dtype=float) if spec.get("values") is not None else None
    return SourceMeasure(spec["kind"], bounds, spec.get("density", "uniform"), values)


def build_target(spec: Dict[str, Any], grid: int) -> TargetDensity:
    interval = check_interval(spec["interval"])
    kind = spec["kind"]
    if kind == "uniform":
        return TargetDensity.uniform(interval, grid)
    if kind == "exponential":
        rate = float(spec["rate"])
        return TargetDensity.from_function(lambda y: np.exp(-rate * y), interval, grid)
    if spec.get("values") is None:
        raise ConfigurationError("problem.target.values is required for kind 'values'")
    vals = np.asarray(spec["values"], dtype=float)
    g = np.linspace(*interval, vals.size)
    return TargetDensity(interval, np.interp(np.linspace(*interval, grid), g, vals))


def build_interaction(problem: Dict[str, Any]) -> InteractionSpec:
    V, W = problem["V"], problem["W"]
    return InteractionSpec(V=V["kind"], alpha=float(V["alpha"]), y0=tuple(float(v) for v in np.atleast_1d(V["y0"])),
                           coeffs=tuple(float(c) for c in V["coeffs"]), W=W["kind"], beta=float(W["beta"]),
                           n=int(problem["n"]))
