"""Run configuration: YAML or JSON files merged onto per-command defaults.

Every key is validated against the defaults so that typos surface as a
ConfigError naming the full key path.
"""

from __future__ import annotations

import copy
import datetime as _dt
from pathlib import Path

import yaml

from rydkit.errors import ConfigError

GEOMETRY = {"file": None, "ladder": None, "chain": None}
INTERACTION = {"c6": None, "field_angle": None, "anisotropy_angles": None, "anisotropy_scales": None, "blockade_radius": None}
DECAY = {
    "gamma_per_us": 1.0 / 60.0,
    "branch_detected": 0.631,
    "branch_m0": 0.03,
    "branch_m1": 0.039,
    "branch_g": 0.3,
    "branch_other": 0.0,
    "mode": "r",
    "enabled": False,
}

DEFAULTS = {
    "ghz-optimize": {
        "geometry": GEOMETRY,
        "interaction": INTERACTION,
        "pulse": {
            "file": None,
            "duration_us": 2.0,
            "n_segments": 150,
            "omega_mhz": 3.0,
            "start_mhz": -8.0,
            "stop_mhz": 6.0,
            "taper_fraction": 0.1,
        },
        "grape": {
            "n_samples": 30,
            "delta_r_nm": 60.0,
            "eta": 1e-3,
            "dT": 0.1,
            "n_continuation": 0,
            "max_iter": 200,
            "tol": 1e-10,
            "seed": 0,
        },
    },
    "ghz-evolve": {
        "geometry": GEOMETRY,
        "interaction": INTERACTION,
        "pulse": {"file": None, "inject": None},
        "disorder": {"n_samples": 1, "delta_r_nm": 0.0, "seed": 0},
        "decay": DECAY,
        "analysis": {"shots": 1000, "parity_points": 11, "seed": 0, "max_oscillation_dn": 4},
    },
    "gate-bench": {
        "gate": {"omega_mhz": 2.5, "blockade_ratio": 100.0, "n_slices": 100},
        "noise": {
            "preset": "reference",
            "ac_intensity": None,
            "dc_intensity": None,
            "beam_pointing": None,
            "beam_sampling": None,
            "ac_phase": None,
            "doppler": None,
            "dc_field": None,
            "rin_spectrum": None,
            "frequency_spectrum": None,
            "n_realizations": 1000,
            "seed": 0,
        },
        "decay": dict(DECAY, enabled=True),
        "fidelity": {"n_states": 1000, "breakdown": True},
        "grb": {
            "depths": [1, 10, 20, 40, 60, 80],
            "instances": 40,
            "echo": False,
            "detection": ["raw", "erasure-decay", "loss"],
            "single_qubit_error": 0.0,
            "seed": 0,
            "realizations": 200,
        },
    },
    "decay": {
        "decay": DECAY,
        "p_det": None,
        "p0": [0.25, 0.5, 0.75, 1.0],
        "t_stop_us": 120.0,
        "t_points": 25,
        "shots": None,
        "seed": 0,
    },
    "mpp": {
        "traps": {"omega_g_mhz": 0.1, "k_per_um": None, "n_levels": 15, "omega_drive": None},
        "pulse": {"shape": "hann", "duration_us": 100.0, "n_steps": 4000},
        "grid": {"ratios": [0.9, 1.0, 1.1], "deltas": None, "pairs": None},
    },
    "analyze": {
        "geometry": GEOMETRY,
        "shots": None,
        "displacements": [[1, 0], [0, 1], [1, 1], [2, 0]],
        "measurement": {"counts": None, "e00": None, "e01": None, "e10": None, "e11": None, "spin_flip": True},
    },
}

# keys whose values are free-form mappings or lists rather than sub-sections
_LEAF_MAPPINGS = {"geometry.ladder", "geometry.chain"}


def _merge(default, given, path: str):
    if not isinstance(default, dict) or path in _LEAF_MAPPINGS:
        return copy.deepcopy(given)
    if given is None:
        return copy.deepcopy(default)
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", path)
    out = copy.deepcopy(default)
    for key, value in given.items():
        sub = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigError(f"unknown key {sub}", sub)
        out[key] = _merge(default[key], value, sub)
    return out


def load_config(command: str, path=None, overrides: dict | None = None) -> dict:
    """Defaults for ``command`` overlaid with the file at ``path``."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command}", "command")
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found", "--config")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}", "--config") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping", "config")
        # allow a whole-file config with the command as top-level key
        if command in data and set(data) <= set(DEFAULTS):
            data = data[command] or {}
    cfg = _merge(DEFAULTS[command], data, "")
    for key, value in (overrides or {}).items():
        cfg = set_path(cfg, key, value)
    return cfg


def set_path(cfg: dict, dotted: str, value) -> dict:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown key {dotted}", dotted)
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown key {dotted}", dotted)
    node[parts[-1]] = value
    return cfg


def require_file(cfg: dict, dotted: str) -> Path:
    node = cfg
    for part in dotted.split("."):
        node = node.get(part) if isinstance(node, dict) else None
    if node is None:
        raise ConfigError(f"{dotted} is required", dotted)
    p = Path(node)
    if not p.is_file():
        raise ConfigError(f"{dotted}: file {node} not found", dotted)
    return p


def snapshot(cfg: dict, command: str, path) -> None:
    """Write the resolved config; the timestamp lives only in the header."""
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    body = yaml.safe_dump({command: cfg}, sort_keys=True)
    Path(path).write_text(f"# resolved config, written {stamp}\n{body}")
