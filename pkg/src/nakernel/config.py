"""Experiment configuration: TOML files, defaults, validation, group building."""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, NAKernelError
from .liegroup import MetaAbelianGroup, RootSystem, group_from_triplets, heisenberg_instance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "seed": 0,
    "group": {
        "preset": "heisenberg",
        "n": 1,
        "xi1": [1.0, 0.0],
        "xi2": [0.0, 1.0],
        "xi": None,
        "theta": None,
        "ad": None,
        "H_o": None,
    },
    "alpha": [1.0, 1.0],
    "rho": [1.0, 1.0],
    "budget": {"n_sigma": 256, "n_eta": 64, "n_steps": 50, "T": 8.0},
    "dufresne": {
        "mus": [1.0, 2.0, 4.0],
        "n_samples": 20000,
        "n_steps_per_unit": 100,
        "tol": 1e-4,
        "ks_max": 0.03,
        "extra_forms": [[1.0, 0.0]],
        "extra_alpha": [1.0, 1.0],
    },
    "reflection": {
        "n_paths": 100000,
        "n_steps": 4000,
        "t": 1.0,
        "hit_queries": [[1.0, 0.5], [1.0, 1.5], [0.5, -0.5], [1.5, 1.0]],
        "interval_queries": [[2.0, -1.0, 1.0], [1.0, -3.0, -1.5], [0.5, 1.0, 2.5],
                             [1.0, 0.5, 2.0], [0.5, -0.5, 0.5], [1.5, -1.0, 0.0]],
        "tail_queries": [[0.0, 2.0], [0.0, 1.0], [0.0, 3.0]],
        "density_queries": [[0.0, 0.0], [1.0, 0.5], [1.0, 1.5], [2.0, 1.0]],
        "density_eps": 0.1,
        "exact_tol": 0.02,
        "bound_margin": 0.005,
    },
    "kernel": {"t": 1.0, "n_steps": 100, "box": 8.0, "h": 0.5, "n_eta": 256,
               "sigma_seed": None, "sigma_values": None, "normalization_tol": 0.05},
    "bounds": {"n_fit": 500, "n_holdout": 500, "t": 1.0, "n_steps": 100, "n_eta": 64,
               "box": 4.0, "strategy": "min_d", "max_violation_rate": 0.01,
               "c_max": 2.0 ** 40, "bounds": ["ubpsigma", "preest"]},
    "poisson": {"points": [], "direction": [0.0, 0.0, 1.0], "radii": [2.0, 4.0, 8.0, 16.0],
                "estimator": "mom", "slope_tolerance": 0.5, "region": "v_large"},
    "exponents": {"q": [2.0, 4.0], "regions": ["both", "v_large", "m_large"]},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults merged with a TOML file (or the ``config`` of a JSON record).

    Unknown keys anywhere raise :class:`ConfigError`.
    """
    user: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            if p.suffix == ".json":
                doc = json.loads(text)
                user = doc["config"] if "config" in doc and "command" in doc else doc
            else:
                user = tomllib.loads(text.decode())
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    cfg = _merge(DEFAULTS, user)
    if overrides:
        cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_group(cfg: dict) -> MetaAbelianGroup:
    """Group from the ``[group]`` table plus top-level ``alpha``."""
    g = cfg["group"]
    alpha = np.asarray(cfg["alpha"], dtype=float)
    try:
        if g["preset"] == "heisenberg":
            return heisenberg_instance(g["n"], g["xi1"], g["xi2"], alpha=alpha, H_o=g["H_o"])
        if g["preset"] not in (None, "", "none"):
            raise ConfigError(f"unknown group preset {g['preset']!r}")
        if g["xi"] is None or g["theta"] is None or g["ad"] is None:
            raise ConfigError("explicit groups need 'xi', 'theta' and 'ad'")
        xi = np.asarray(g["xi"], dtype=float)
        theta = np.asarray(g["theta"], dtype=float)
        H_o = g["H_o"]
        if H_o is None:
            forms = np.vstack([xi, theta])
            H_o = alpha if np.all(forms @ alpha > 0) else forms.sum(axis=0)
        roots = RootSystem(xi=xi, theta=theta, alpha=alpha, H_o=np.asarray(H_o, dtype=float))
        return group_from_triplets(roots, g["ad"])
    except ConfigError:
        raise
    except (NAKernelError, ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"invalid group specification: {exc}") from exc
