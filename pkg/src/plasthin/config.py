"""Scenario configuration: JSON schema, validation and problem builders.

A scenario file is a JSON object with ``"schema_version": 1``.  Unknown keys
at any level are rejected so that a misspelt tolerance cannot silently fall
back to its default.  :meth:`ScenarioConfig.to_dict` returns the fully
resolved form, which the CLI echoes into every run manifest.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .discretization import BoundaryDatum, PlateMesh
from .errors import ConfigurationError, PlasthinError
from .materials import MaterialLibrary, PhaseMaterial
from .microstructure import PhaseMap, build_phase_map, read_phase_raster
from .solver import PlateProblem, SolverConfig

SCHEMA_VERSION = 1
PERIOD_TOL = 1e-9

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "omega": [0.4, 0.4],
    "cells_per_period": 2,
    "n_layers": 4,
    "microstructure": {"generator": "laminate", "resolution": 8, "fractions": [0.5, 0.5]},
    "materials": [
        {"mu2": 2.0, "k": 1.0, "yield_radius": 1.0},
        {"mu2": 4.0, "k": 2.0, "yield_radius": 0.5},
    ],
    "gamma": 1.0,
    "h": [0.1],
    "time": {"T": 1.0, "n_steps": 20},
    "load": {"stretch": 1.0, "shear": 0.0, "bend": 0.0, "profile": [[0.0, 0.0], [1.0, 1.0]]},
    "hom": {"macro_cells": None},
    "solver": {},
    "seed": 0,
    "output": "run",
    "jobs": 1,
}

MICRO_KEYS = {
    "laminate": {"fractions", "offset"},
    "checkerboard": set(),
    "inclusion": {"center", "radius"},
    "raster": {"path"},
}
MATERIAL_KEYS = {"mu2", "k", "yield_radius", "c_dev"}
LOAD_KEYS = {"stretch", "shear", "bend", "profile", "tabulated"}
TABLE_KEYS = {"x1", "x2", "w1", "w2", "w3"}
TIME_KEYS = {"T", "n_steps"}
HOM_KEYS = {"macro_cells"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{where}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("microstructure", "load"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _periods(L, eps):
    n = L / eps
    m = round(n)
    if m < 1 or abs(n - m) > PERIOD_TOL * max(1.0, n):
        return None
    return int(m)


def _table_field(tab, name):
    x1 = np.asarray(tab["x1"], dtype=float)
    x2 = np.asarray(tab["x2"], dtype=float)
    vals = tab.get(name)
    if vals is None:
        return lambda a, b: np.zeros(np.broadcast(a, b).shape)
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (x1.size, x2.size):
        raise ConfigurationError(f"load.tabulated.{name}: expected shape {(x1.size, x2.size)}, got {vals.shape}")
    spline = RectBivariateSpline(x1, x2, vals, kx=min(3, x1.size - 1), ky=min(3, x2.size - 1))
    return lambda a, b: spline(np.asarray(a, dtype=float), np.asarray(b, dtype=float), grid=False)


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; ``raw`` holds the resolved JSON object."""

    raw: dict = field(repr=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("scenario must be a JSON object")
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(
                f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}"
            )
        _check_keys(data, DEFAULTS, "config")
        cfg = cls(_merge(DEFAULTS, data))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        raw = copy.deepcopy(self.raw)
        for k, v in kw.items():
            if v is not None:
                raw[k] = v
        cfg = ScenarioConfig(raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["solver"] = {
            f.name: getattr(self.solver_config(), f.name) for f in fields(SolverConfig) if f.name != "seed"
        }
        out["hom"] = {"macro_cells": list(self.macro_cells())}
        return out

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        r = self.raw
        omega = r["omega"]
        if not (isinstance(omega, list) and len(omega) == 2 and all(float(v) > 0 for v in omega)):
            raise ConfigurationError("omega must be [L1, L2] with positive entries")
        if not isinstance(r["cells_per_period"], int) or r["cells_per_period"] < 1:
            raise ConfigurationError("cells_per_period must be a positive integer")
        n3 = r["n_layers"]
        if not isinstance(n3, int) or n3 < 2 or n3 % 2:
            raise ConfigurationError("n_layers must be an even integer >= 2")
        if not float(r["gamma"]) > 0:
            raise ConfigurationError("gamma must be positive")
        hs = r["h"]
        if not isinstance(hs, list) or not hs or any(not float(h) > 0 for h in hs):
            raise ConfigurationError("h must be a non-empty list of positive numbers")
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ConfigurationError("h list must be strictly decreasing")
        for h in hs:
            for L in omega:
                if _periods(float(L), self.eps(h)) is None:
                    raise ConfigurationError(
                        f"h={h}: eps=h/gamma={self.eps(h):.6g} does not fit an integer number of periods in {L}"
                    )
        _check_keys(r["time"], TIME_KEYS, "time")
        if not float(r["time"]["T"]) > 0 or not isinstance(r["time"]["n_steps"], int) or r["time"]["n_steps"] < 1:
            raise ConfigurationError("time needs T > 0 and an integer n_steps >= 1")
        _check_keys(r["load"], LOAD_KEYS, "load")
        if "tabulated" in r["load"]:
            _check_keys(r["load"]["tabulated"], TABLE_KEYS, "load.tabulated")
        _check_keys(r["hom"], HOM_KEYS, "hom")
        _check_keys(r["solver"], {f.name for f in fields(SolverConfig)} - {"seed"}, "solver")
        if not isinstance(r["seed"], int) or r["seed"] < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if not isinstance(r["jobs"], int) or r["jobs"] < 1:
            raise ConfigurationError("jobs must be a positive integer")
        for i, m in enumerate(r["materials"]):
            _check_keys(m, MATERIAL_KEYS, f"materials[{i}]")
        micro = r["microstructure"]
        if not isinstance(micro, dict) or "generator" not in micro:
            raise ConfigurationError("microstructure needs a generator")
        gen = micro["generator"]
        if gen not in MICRO_KEYS:
            raise ConfigurationError(f"unknown generator {gen!r}")
        _check_keys(micro, MICRO_KEYS[gen] | {"generator", "resolution"}, "microstructure")
        try:
            pm = self.phase_map()
            mats = self.materials()
            self.solver_config()
            self.datum()
        except PlasthinError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"invalid scenario: {exc}") from None
        if pm.n_phases > len(mats):
            raise ConfigurationError(f"microstructure has {pm.n_phases} phases but only {len(mats)} materials")
        mc = self.macro_cells()
        if len(mc) != 2 or min(mc) < 2:
            raise ConfigurationError("hom.macro_cells must be two integers >= 2")

    # -- derived objects -----------------------------------------------------

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.raw["omega"][0]), float(self.raw["omega"][1])

    @property
    def h_list(self) -> list[float]:
        return [float(h) for h in self.raw["h"]]

    @property
    def gamma(self) -> float:
        return float(self.raw["gamma"])

    @property
    def cells_per_period(self) -> int:
        return int(self.raw["cells_per_period"])

    @property
    def n_layers(self) -> int:
        return int(self.raw["n_layers"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def eps(self, h: float) -> float:
        return float(h) / self.gamma

    def mesh(self, h: float) -> PlateMesh:
        L1, L2 = self.extent
        e = self.eps(h)
        m = self.cells_per_period
        return PlateMesh((L1, L2), (_periods(L1, e) * m, _periods(L2, e) * m, self.n_layers))

    def macro_cells(self) -> tuple[int, int]:
        mc = self.raw["hom"].get("macro_cells")
        if mc is None:
            e = self.eps(self.h_list[0])
            return _periods(self.extent[0], e), _periods(self.extent[1], e)
        return int(mc[0]), int(mc[1])

    def phase_map(self) -> PhaseMap:
        micro = dict(self.raw["microstructure"])
        gen = micro.pop("generator")
        if gen == "raster":
            return read_phase_raster(micro["path"])
        res = int(micro.pop("resolution", 8))
        return build_phase_map(gen, res, **micro)

    def materials(self) -> MaterialLibrary:
        phases = []
        for m in self.raw["materials"]:
            m = dict(m)
            if "c_dev" in m:
                m["c_dev"] = np.asarray(m["c_dev"], dtype=float)
            phases.append(PhaseMaterial(**m))
        return MaterialLibrary(tuple(phases))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.raw["solver"], seed=self.seed)

    def datum(self) -> BoundaryDatum:
        load = self.raw["load"]
        profile = load.get("profile", [[0.0, 0.0], [self.raw["time"]["T"], 1.0]])
        if "tabulated" in load:
            tab = load["tabulated"]
            return BoundaryDatum(
                w1=_table_field(tab, "w1"), w2=_table_field(tab, "w2"), w3=_table_field(tab, "w3"),
                profile=profile,
            )
        a_st = float(load.get("stretch", 0.0))
        a_sh = float(load.get("shear", 0.0))
        a_b = float(load.get("bend", 0.0))
        return BoundaryDatum(
            w1=lambda x1, x2: a_st * np.asarray(x1) + a_sh * np.asarray(x2),
            w2=lambda x1, x2: 0.0 * np.asarray(x1) + 0.0 * np.asarray(x2),
            w3=lambda x1, x2: 0.5 * a_b * np.asarray(x1) ** 2 + 0.0 * np.asarray(x2),
            profile=profile,
        )

    def time_grid(self) -> np.ndarray:
        t = self.raw["time"]
        grid = np.linspace(0.0, float(t["T"]), int(t["n_steps"]) + 1)
        prof = self.datum().profile
        if prof[0, 0] > 0 or prof[-1, 0] < grid[-1] - 1e-12:
            raise ConfigurationError("load profile must cover the time interval [0, T]")
        return grid


def build_plate_problem(cfg: ScenarioConfig, h: float | None = None) -> PlateProblem:
    h = cfg.h_list[0] if h is None else float(h)
    return PlateProblem(
        cfg.mesh(h), cfg.materials(), cfg.phase_map(), h, cfg.eps(h), cfg.datum(), cfg.solver_config()
    )


def build_twoscale_problem(cfg: ScenarioConfig):
    from .twoscale import TwoScaleProblem

    return TwoScaleProblem(
        cfg.extent, cfg.macro_cells(), cfg.cells_per_period, cfg.n_layers, cfg.gamma,
        cfg.materials(), cfg.phase_map(), cfg.datum(), cfg.solver_config(),
    )


def energy_scale(reports) -> float:
    """Largest elastic energy along a trajectory (floored to avoid zero division)."""
    return max([r.elastic_energy for r in reports] + [0.0]) or math.ulp(1.0)
