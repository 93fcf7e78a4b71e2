"""Run configuration: a sectioned TOML file with globally unique keys.

Every key maps one-to-one onto a :class:`~chemolab.estimator.ChemotaxisSimulator`
parameter; sections only group them in the file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import tomli
import tomli_w


class ConfigError(ValueError):
    pass


# section -> key -> (type, default); None default means "optional, may be absent"
SCHEMA: dict = {
    "model": {
        "n": (int, 2),
        "kappa": (int, 0),
        "chi": (float, 5.0),
        "R": (float, 1.0),
        "diffusion": (str, "prototype"),
        "m": (float, 0.5),
        "coeff": (float, 1.0),
        "m_bar": (float, None),
    },
    "source": {
        "source": (str, "zero"),
        "source_amplitude": (float, 0.0),
        "source_radius": (float, 0.5),
        "source_omega": (float, 0.0),
    },
    "initial": {
        "mu": (float, 1.0),
        "alpha": (float, 1.0),
        "beta": (float, 1.0),
        "profile": (str, "bump"),
        "r_star": (float, 0.4),
        "r_star_auto": (bool, False),
        "w_profile": (str, "uniform"),
        "v0": (float, 0.0),
        "u_csv": (str, None),
        "noise": (float, 0.0),
        "seed": (int, 0),
    },
    "grid": {
        "cells": (int, 512),
        "grid": (str, "uniform"),
        "h0": (float, None),
        "h0_factor": (float, 1e-5),
    },
    "control": {
        "t_end": (float, 10.0),
        "time_unit": (str, "absolute"),
        "dt_init": (float, 1e-4),
        "dt_min": (float, 1e-12),
        "dt_max": (float, 1e-2),
        "safety": (float, 0.9),
        "growth": (float, 1.25),
        "u_cap": (float, None),
        "u_cap_factor": (float, 1e6),
        "max_rel_change": (float, 0.5),
        "max_steps": (int, None),
    },
    "scheme": {
        "chemotaxis_flux": (str, "upwind"),
        "face_average": (str, "arithmetic"),
        "picard_iterations": (int, 1),
        "picard_tol": (float, 1e-8),
    },
    "analysis": {
        "analysis": (bool, False),
        "epsilon": (float, 0.1),
        "eta": (float, 0.2),
        "lam": (float, 0.1),
        "p": (float, None),
    },
    "output": {
        "cadence": (float, 0.1),
        "every_steps": (int, 0),
        "snapshot_times": (list, []),
        "keep_states": (bool, False),
    },
}

KEY_SECTION = {key: sec for sec, keys in SCHEMA.items() for key in keys}

CHOICES = {
    "diffusion": ("prototype", "purepower"),
    "source": ("zero", "constant", "separable"),
    "profile": ("uniform", "bump", "gaussian"),
    "w_profile": ("uniform", "cosine"),
    "grid": ("uniform", "geometric"),
    "time_unit": ("absolute", "collapse"),
    "chemotaxis_flux": ("upwind", "vanleer"),
    "face_average": ("arithmetic", "harmonic"),
}


def defaults() -> dict:
    return {k: (list(d) if isinstance(d, list) else d) for keys in SCHEMA.values() for k, (_, d) in keys.items()}


def _coerce(key: str, value: Any) -> Any:
    typ = SCHEMA[KEY_SECTION[key]][key][0]
    if value is None:
        return None
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)) and not (isinstance(value, float) and value.is_integer()):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        if key in CHOICES and value not in CHOICES[key]:
            raise ConfigError(f"{key}: {value!r} is not one of {', '.join(CHOICES[key])}")
        return value
    if typ is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return [float(x) for x in value]
    raise AssertionError(typ)


def validate_flat(values: dict) -> dict:
    """Fill defaults, coerce types and check cross-key requirements."""
    out = defaults()
    for key, value in values.items():
        if key not in KEY_SECTION:
            raise ConfigError(f"unknown key {key!r}")
        out[key] = _coerce(key, value)
    for key in ("n", "kappa", "cells"):
        if out[key] is None:
            raise ConfigError(f"{key} is required")
    if out["diffusion"] == "purepower" and out["m"] <= 0 and out["m_bar"] is None:
        raise ConfigError(
            "m: a pure-power law with m <= 0 needs m_bar in (0, 1) to re-bound the "
            "diffusion as D <= K h^(m_bar - 1) before any blow-up analysis"
        )
    if out["m_bar"] is not None and not 0 < out["m_bar"] < 1:
        raise ConfigError("m_bar must lie in (0, 1)")
    if out["t_end"] < 0:
        raise ConfigError("t_end must be nonnegative")
    if out["cells"] < 2:
        raise ConfigError("cells must be at least 2")
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated flat configuration."""

    values: dict

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        return cls(validate_flat(values))

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        flat = {}
        for section, body in doc.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            if not isinstance(body, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, value in body.items():
                if key not in SCHEMA[section]:
                    hint = f" (belongs in [{KEY_SECTION[key]}])" if key in KEY_SECTION else ""
                    raise ConfigError(f"unknown key {section}.{key}{hint}")
                flat[key] = value
        return cls.from_flat(flat)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = tomli.loads(path.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_document(doc)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_document(tomli.loads(text))

    def to_document(self) -> dict:
        doc: dict = {}
        for section, keys in SCHEMA.items():
            body = {k: self.values[k] for k in keys if self.values[k] is not None}
            if body:
                doc[section] = body
        return doc

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_document())

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    def replace(self, **changes) -> "RunConfig":
        return RunConfig.from_flat({**self.values, **changes})

    def __getitem__(self, key):
        return self.values[key]


def resolve_key(path: str) -> str:
    """Accept ``key`` or ``section.key`` and return the flat key."""
    if "." in path:
        section, key = path.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown parameter path {path!r}")
        return key
    if path not in KEY_SECTION:
        raise ConfigError(f"unknown parameter {path!r}")
    return path


@dataclass(frozen=True)
class Axis:
    key: str
    start: float
    stop: float
    step: float

    @classmethod
    def parse(cls, text: str) -> "Axis":
        """``name=start:stop:step`` (stop inclusive)."""
        try:
            name, rng = text.split("=", 1)
            start, stop, step = (float(x) for x in rng.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad axis {text!r}; expected name=start:stop:step") from exc
        if not step > 0 or stop < start:
            raise ConfigError(f"axis {text!r}: need step > 0 and stop >= start")
        return cls(resolve_key(name.strip()), start, stop, step)

    @property
    def values(self) -> list:
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        typ = SCHEMA[KEY_SECTION[self.key]][self.key][0]
        vals = [round(self.start + k * self.step, 10) for k in range(count)]
        return [int(v) for v in vals] if typ is int else vals


@dataclass(frozen=True)
class SweepSpec:
    axes: tuple
    replicates: int = 1
    jobs: Optional[int] = None

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("a sweep needs at least one axis")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        keys = [a.key for a in self.axes]
        if len(set(keys)) != len(keys):
            raise ConfigError("duplicate sweep axis")

    @property
    def cells(self) -> list:
        """Cartesian product, first axis varying slowest."""
        cells = [{}]
        for axis in self.axes:
            cells = [{**c, axis.key: v} for c in cells for v in axis.values]
        return cells
