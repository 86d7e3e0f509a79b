"""Experiment configuration files (YAML) and provenance headers for emitted artifacts.

Layout::

    seed: 1                      # required
    N: 200000                    # optional, overrides model.N
    model:                       # inline mapping, or a path to a YAML file holding one
      N: 100000
      types:
        - {out: [2, 3, 1], in: [2, 3, 1], fraction: "1/2"}
        - {out: [2, 1, 2], in: [2, 1, 2], count: 50000}
    optimize: {tol: 1.0e-10, method: newton}
    simulate: {p: null, sources: 32, t_max: null, uniform_start: false}
    envelope: {grid_size: 21, grid_cap: 10000, sources: 32, t_max: null}
    props: {instances: 10000, quick: false, inject_bad_sigma: false}

``threads`` and ``out_dir`` may also appear; they do not enter the config hash.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .degree_model import DegreeModel, model_from_dict
from .errors import ConfigError

DEFAULTS: dict[str, dict[str, Any]] = {
    "optimize": {"tol": 1e-10, "method": "newton"},
    "simulate": {"p": None, "sources": 32, "t_max": None, "uniform_start": False},
    "envelope": {"grid_size": 21, "grid_cap": 10_000, "sources": 32, "t_max": None},
    "props": {"instances": 10_000, "quick": False, "inject_bad_sigma": False},
}
UNHASHED = ("threads", "out_dir")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    model_data: dict
    N: int | None
    sections: dict
    threads: int = 1
    out_dir: str = "out"

    def model(self) -> DegreeModel:
        return model_from_dict(self.model_data, self.N)

    def section(self, name: str) -> dict[str, Any]:
        return self.sections[name]

    def canonical(self) -> dict[str, Any]:
        """Everything that can change a result; this is what gets hashed."""
        return {"seed": self.seed, "N": self.N, "model": self.model_data, **self.sections}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def header(self, command: str) -> dict[str, Any]:
        return {"command": command, "config_hash": self.config_hash, "seed": self.seed}

    def header_text(self, command: str) -> str:
        return f"command={command} config_hash={self.config_hash} seed={self.seed}"


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None
                ) -> ExperimentConfig:
    """Read a YAML config and apply flag overrides.

    ``overrides`` keys are either top-level (``seed``, ``N``, ``threads``,
    ``out_dir``) or dotted section keys such as ``"simulate.sources"``;
    ``None`` values are ignored.
    """
    raw: dict[str, Any] = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        base = path.parent
    raw = copy.deepcopy(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if "." in key:
            sec, field = key.split(".", 1)
            raw.setdefault(sec, {})[field] = value
        else:
            raw[key] = value

    if raw.get("seed") is None:
        raise ConfigError("a seed is required (config 'seed' or --seed)")
    try:
        seed = int(raw["seed"])
    except (TypeError, ValueError):
        raise ConfigError(f"seed must be an integer, got {raw['seed']!r}") from None

    model = raw.get("model")
    if model is None:
        raise ConfigError("config needs a 'model' section or path")
    if isinstance(model, str):
        mpath = base / model
        try:
            model = yaml.safe_load(mpath.read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read model file {mpath}: {exc}") from None
    if not isinstance(model, dict):
        raise ConfigError("model must be a mapping")

    sections = {}
    for name, defaults in DEFAULTS.items():
        given = raw.get(name) or {}
        unknown = set(given) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
        sections[name] = {**defaults, **given}

    N = raw.get("N")
    cfg = ExperimentConfig(seed=seed, model_data=model, N=None if N is None else int(N),
                           sections=sections, threads=int(raw.get("threads", 1)),
                           out_dir=str(raw.get("out_dir", "out")))
    cfg.model()  # fail early on non-integer counts
    return cfg
