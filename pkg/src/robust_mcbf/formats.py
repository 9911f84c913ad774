"""Experiment config files, scenario files and solution records.

Config files are INI (``configparser``) with three sections; every key is
optional but unknown sections or keys are errors.  Scenario and solution
files are JSON.  Complex numbers are ``[re, im]`` pairs and arrays nest in
row-major order.  ``docs/formats.md`` in the repository documents both.
"""

from __future__ import annotations

import configparser
import json
import os
import tempfile
from dataclasses import fields
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import ScenarioConfig
from .experiments import ExperimentConfig
from .model import BeamformerSet, ChannelSet, ErrorEllipsoid, InvalidInputError, SystemConfig
from .problems import DesignKind, ExtractionReport, SdrSolution


class ConfigError(InvalidInputError):
    """Malformed configuration or scenario input."""


SOLUTION_FORMAT = "robust-mcbf-solution/1"
SCENARIO_FORMAT = "robust-mcbf-scenario/1"

_SCENARIO_KEYS = tuple(f.name for f in fields(ScenarioConfig))


# -- experiment config ---------------------------------------------------------

def _convert(section, key, raw, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "optfloat":
            return None if raw.strip().lower() in ("", "none") else float(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if kind == "methods":
            return tuple(DesignKind(v.strip()) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


_TYPES = {
    "scenario": {k: (int if k == "rng_seed" else float) for k in _SCENARIO_KEYS},
    "system": {"num_cells": int, "users_per_cell": int, "num_antennas": int,
               "power_weight": float, "interference_cap_dbm": "optfloat"},
    "experiment": {"gamma_grid_db": "floats", "num_channel_draws": int,
                   "num_error_draws": int, "methods": "methods", "base_seed": int,
                   "output_path": str, "randomization_trials": int,
                   "extraction_error_draws": int, "record_timing": bool},
}


def parse_config(text: str) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from INI text.

    The ``[experiment]`` section is mandatory, so an empty file is rejected.
    Missing keys take the documented defaults.  ``[scenario] rng_seed``
    doubles as ``base_seed`` when the latter is absent.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(cp.sections()) - set(_TYPES)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    if "experiment" not in cp:
        raise ConfigError("config needs an [experiment] section")
    values = {}
    for section in cp.sections():
        for key, raw in cp[section].items():
            if key not in _TYPES[section]:
                raise ConfigError(f"unknown key [{section}] {key}")
            values[(section, key)] = _convert(section, key, raw, _TYPES[section][key])
    scen = {k: v for (s, k), v in values.items() if s == "scenario"}
    system = {k: v for (s, k), v in values.items() if s == "system"}
    exp = {k: v for (s, k), v in values.items() if s == "experiment"}
    if "base_seed" not in exp and "rng_seed" in scen:
        exp["base_seed"] = scen["rng_seed"]
    try:
        scenario = ScenarioConfig(**scen)
        return ExperimentConfig(scenario=scenario, **system, **exp)
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Every effective parameter, grouped like the INI sections."""
    sc = cfg.scenario
    return {
        "scenario": {f.name: getattr(sc, f.name) for f in fields(ScenarioConfig)},
        "system": {"num_cells": cfg.num_cells, "users_per_cell": cfg.users_per_cell,
                   "num_antennas": cfg.num_antennas, "power_weight": cfg.power_weight,
                   "interference_cap_dbm": cfg.interference_cap_dbm},
        "experiment": {"gamma_grid_db": list(cfg.gamma_grid_db),
                       "num_channel_draws": cfg.num_channel_draws,
                       "num_error_draws": cfg.num_error_draws,
                       "methods": [m.value for m in cfg.methods],
                       "base_seed": cfg.base_seed, "output_path": cfg.output_path,
                       "randomization_trials": cfg.randomization_trials,
                       "extraction_error_draws": cfg.extraction_error_draws,
                       "record_timing": cfg.record_timing},
    }


def config_to_ini(cfg: ExperimentConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``cfg``."""
    out = []
    for section, items in config_to_dict(cfg).items():
        out.append(f"[{section}]")
        for key, v in items.items():
            if isinstance(v, list):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif v is None:
                v = "none"
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{key} = {v}")
        out.append("")
    return "\n".join(out)


# -- JSON helpers ----------------------------------------------------------------

def encode_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(obj, what="value") -> np.ndarray:
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: expected nested [re, im] pairs") from exc
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ConfigError(f"{what}: expected nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def write_json_atomic(path, obj) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path) -> dict:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj


# -- scenarios -------------------------------------------------------------------

_SCENARIO_FIELDS = {"format", "method", "num_cells", "users_per_cell", "num_antennas",
                    "channels", "sinr_targets", "sinr_targets_db", "noise_powers",
                    "power_weights", "interference_caps", "error_radius",
                    "error_shape_matrices", "large_scale_gains"}


class Scenario:
    """A fully specified single instance: channels, system and method."""

    def __init__(self, method: DesignKind, channels: ChannelSet, system: SystemConfig):
        self.method = DesignKind(method)
        self.channels = channels
        self.system = system


def _per_user(obj, n, what):
    arr = np.asarray(obj, dtype=float).ravel()
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(f"{what}: expected 1 or {n} values, got {arr.size}")
    return arr


def scenario_from_dict(d: dict) -> Scenario:
    unknown = set(d) - _SCENARIO_FIELDS
    if unknown:
        raise ConfigError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    for key in ("method", "channels", "noise_powers"):
        if key not in d:
            raise ConfigError(f"scenario is missing {key!r}")
    try:
        method = DesignKind(d["method"])
    except ValueError as exc:
        raise ConfigError(f"unknown method {d['method']!r}") from exc
    h = decode_complex(d["channels"], "channels")
    if h.ndim != 4:
        raise ConfigError("channels must be indexed [j][i][k][antenna]")
    nc, _, K, nt = h.shape
    for key, val in (("num_cells", nc), ("users_per_cell", K), ("num_antennas", nt)):
        if key in d and int(d[key]) != val:
            raise ConfigError(f"{key}={d[key]} does not match the channel array")
    if ("sinr_targets" in d) == ("sinr_targets_db" in d):
        raise ConfigError("give exactly one of sinr_targets or sinr_targets_db")
    n = nc * K
    if "sinr_targets" in d:
        gamma = _per_user(d["sinr_targets"], n, "sinr_targets")
    else:
        gamma = 10.0 ** (_per_user(d["sinr_targets_db"], n, "sinr_targets_db") / 10.0)
    sigma2 = _per_user(d["noise_powers"], n, "noise_powers")
    alpha = _per_user(d.get("power_weights", 1.0), nc, "power_weights")
    caps = d.get("interference_caps")
    if caps is not None:
        caps = np.asarray(caps, dtype=float)
        if caps.size == 1:
            caps = np.full((nc, nc, K), float(caps.ravel()[0]))
    if ("error_radius" in d) == ("error_shape_matrices" in d):
        raise ConfigError("give exactly one of error_radius or error_shape_matrices")
    try:
        if "error_radius" in d:
            ell = ErrorEllipsoid.sphere(float(d["error_radius"]), nt)
        else:
            C = decode_complex(d["error_shape_matrices"], "error_shape_matrices")
            if C.shape != (nc, nc, K, nt, nt):
                raise ConfigError("error_shape_matrices must be indexed [j][i][k][row][col]")
            ell = [[[ErrorEllipsoid(C[j, i, k]) for k in range(K)] for i in range(nc)]
                   for j in range(nc)]
        channels = ChannelSet(h, ell, d.get("large_scale_gains"))
        system = SystemConfig(nc, K, nt, alpha, gamma, sigma2, caps)
    except ConfigError:
        raise
    except (InvalidInputError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if not method.coordinated and caps is None:
        raise ConfigError(f"{method.value} needs interference_caps")
    return Scenario(method, channels, system)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(read_json(path))


def scenario_to_dict(sc: Scenario) -> dict:
    cfg, ch = sc.system, sc.channels
    nc, K, nt = cfg.num_cells, cfg.users_per_cell, cfg.num_antennas
    out = {"format": SCENARIO_FORMAT, "method": sc.method.value,
           "channels": encode_complex(ch.nominal),
           "sinr_targets": cfg.sinr_targets.ravel().tolist(),
           "noise_powers": cfg.noise_powers.ravel().tolist(),
           "power_weights": cfg.power_weights.tolist()}
    if cfg.interference_caps is not None:
        caps = np.where(np.isnan(cfg.interference_caps), 0.0, cfg.interference_caps)
        out["interference_caps"] = caps.tolist()
    C = np.zeros((nc, nc, K, nt, nt), dtype=complex)
    radii = set()
    for j in range(nc):
        for i in range(nc):
            for k in range(K):
                e = ch.ellipsoid(j, i, k)
                radii.add(e.spherical_radius)
                if not e.is_degenerate:
                    C[j, i, k] = e.shape_matrix
    if len(radii) == 1 and None not in radii:
        out["error_radius"] = radii.pop()
    else:
        out["error_shape_matrices"] = encode_complex(C)
    if not np.all(ch.large_scale_gains == 1.0):
        out["large_scale_gains"] = ch.large_scale_gains.tolist()
    return out


# -- solutions -------------------------------------------------------------------

def _id_list(key) -> list:
    return [str(key[0])] + [int(v) for v in key[1:]]


def solution_to_dict(sol: SdrSolution, beams: Optional[BeamformerSet] = None,
                     report: Optional[ExtractionReport] = None,
                     extraction_error: Optional[str] = None) -> dict:
    out = {"format": SOLUTION_FORMAT, "method": sol.kind.value, "status": sol.status,
           "solver": {"conic_status": sol.conic_status, "iterations": sol.iterations,
                      "residuals": [float(r) for r in sol.residuals]}}
    if sol.certificate:
        out["certificate"] = sol.certificate
    if not sol.is_optimal:
        return out
    out["objective_watts"] = sol.objective
    out["covariances"] = encode_complex(sol.covariances)
    out["rank_one_gap"] = sol.rank_one_gap.tolist()
    out["multipliers"] = [{"id": _id_list(k), "value": v} for k, v in sol.multipliers.items()]
    out["slacks"] = [{"id": _id_list(k), "value": v} for k, v in sol.slacks.items()]
    if beams is not None:
        out["beamformers"] = encode_complex(beams.vectors)
    if report is not None:
        out["extraction"] = {"randomized": report.randomized,
                             "verification": report.verification,
                             "power_watts": report.power,
                             "power_ratio": report.power_ratio,
                             "trials_used": report.trials_used}
    if extraction_error is not None:
        out["extraction"] = {"error": extraction_error}
    return out


def beamformers_from_dict(d: dict) -> BeamformerSet:
    if "beamformers" not in d:
        raise ConfigError("solution has no beamformers (status "
                          f"{d.get('status', 'unknown')!r})")
    return BeamformerSet(decode_complex(d["beamformers"], "beamformers"))
