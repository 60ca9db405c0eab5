"""Run configuration files (TOML) with strict key checking."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .evolve import RunConfig
from .geometry import LoopSpec, loop_from_dict
from .spectral import SpectralModel, from_dict

DEFAULTS: dict[str, dict] = {
    "model": {},
    "loop": {},
    "field": {"b_lab": [0.0, 0.0, 0.0]},
    "evolve": {"kernel_method": "auto", "integrator_tolerance": 1e-10},
    "oracle": {"n_modes": 64, "n_realizations": 4000, "seed": 0, "dt_max": None,
               "n_bootstrap": 200, "dressed": True},
    "sweep": {"tp_min": 100.0, "tp_max": 1000.0, "n_points": 8,
              "methods": ["redfield", "closed_form"], "rates": "reference"},
    "compare": {"phi_tol": 1e-6, "d_tol": 1e-6, "k_sigma": 3.0},
}
MODEL_KEYS = set(SpectralModel.__dataclass_fields__)
LOOP_KEYS = set(LoopSpec.__dataclass_fields__)
OUTPUT_ENV = "ENVBERRY_OUTPUT_DIR"


@dataclass
class Config:
    data: dict
    base_dir: Path

    @property
    def model(self) -> SpectralModel:
        return from_dict(self.data["model"], self.base_dir)

    @property
    def loop(self) -> LoopSpec:
        return loop_from_dict(self.data["loop"], self.base_dir)

    def run_config(self, t_p: float | None = None) -> RunConfig:
        loop = self.loop if t_p is None else self.loop.with_tp(t_p)
        ev = self.data["evolve"]
        return RunConfig(self.model, loop, tuple(self.data["field"]["b_lab"]),
                         ev["kernel_method"], float(ev["integrator_tolerance"]))

    def section(self, name: str) -> dict:
        return self.data[name]

    def canonical(self) -> str:
        return canonical_json(self.data)

    def config_hash(self) -> str:
        """Digest of the configuration with loop.t_p removed (one value per t_p family)."""
        d = copy.deepcopy(self.data)
        d["loop"].pop("t_p", None)
        return hashlib.sha256(canonical_json(d).encode()).hexdigest()

    def with_override(self, dotted: str, value) -> "Config":
        d = copy.deepcopy(self.data)
        sec, _, key = dotted.partition(".")
        if not key:
            raise ConfigurationError(f"override {dotted!r} must look like section.key")
        _check_key(sec, key)
        d[sec][key] = value
        return Config(_validate(d), self.base_dir)


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def _check_key(section: str, key: str):
    if section not in DEFAULTS:
        raise ConfigurationError(f"unknown config section [{section}]")
    allowed = {"model": MODEL_KEYS, "loop": LOOP_KEYS}.get(section, set(DEFAULTS[section]))
    if key not in allowed:
        raise ConfigurationError(f"unknown key {key!r} in [{section}]")


def _validate(raw: dict) -> dict:
    out = {}
    for sec, vals in raw.items():
        if sec not in DEFAULTS:
            raise ConfigurationError(f"unknown config section [{sec}]")
        if not isinstance(vals, dict):
            raise ConfigurationError(f"[{sec}] must be a table")
        for k in vals:
            _check_key(sec, k)
    for sec, defaults in DEFAULTS.items():
        merged = dict(defaults)
        merged.update(raw.get(sec, {}))
        out[sec] = merged
    if not out["model"]:
        raise ConfigurationError("config needs a [model] table")
    if not out["loop"]:
        raise ConfigurationError("config needs a [loop] table")
    return out


def parse_value(text: str):
    """Interpret an override value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path: str | Path | None = None, text: str | None = None,
                overrides: list[str] | None = None) -> Config:
    if text is None:
        if path is None:
            raise ConfigurationError("no configuration given")
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    base = Path(path).parent if path is not None else Path.cwd()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    cfg = Config(_validate(raw), base)
    for item in overrides or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigurationError(f"override {item!r} must be key=value")
        cfg = cfg.with_override(key.strip(), parse_value(val.strip()))
    # constructing the objects validates values early
    cfg.run_config()
    return cfg
