"""Experiment configuration files.

Format: one ``key = value`` per line, ``#`` starts a comment, lists are
comma-separated.  ``experiment`` selects the kind; every other key must
belong to that kind's schema (see ``SCHEMAS``) or to the common keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

__all__ = ["ConfigError", "ExperimentConfig", "SCHEMAS", "KINDS", "parse_config", "load_config"]


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _eta(text: str) -> float:
    v = float(text)
    if not (0.0 <= v < 2.0):
        raise ValueError(f"eta must satisfy 0 <= eta < 2, got {v}")
    return v


def _etas(text: str) -> list[float]:
    return [_eta(x) for x in text.split(",") if x.strip()]


def _positive(conv):
    def parse(text):
        v = conv(text)
        if v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    return parse


def _positive_list(text: str) -> list[float]:
    vals = _floats(text)
    if not vals:
        raise ValueError("list must not be empty")
    if any(v <= 0 for v in vals):
        raise ValueError("list entries must be positive")
    return vals


Field = tuple[Callable[[str], Any], Any]

COMMON: dict[str, Field] = {
    "experiment": (str, None),
    "r0": (_positive(float), 1.0),
    "R1": (_positive(float), 2.0),
    "Nr": (int, 65),
    "Ntheta": (int, 128),
    "seed": (int, 42),
}

SCHEMAS: dict[str, dict[str, Field]] = {
    "validate-weight": {
        "weight": (str, "quadratic"),
        "expression": (str, ""),
    },
    "carleman-sweep": {
        "metric": (str, "identity"),
        "coefficients": (str, "laplacian"),
        "weight": (str, "quadratic"),
        "expression": (str, ""),
        "gamma": (_positive_list, [1.0, 2.0, 4.0]),
        "s": (_positive_list, [8.0, 16.0, 32.0, 64.0]),
        "family_count": (int, 20),
        "max_degree": (int, 6),
        "max_frequency": (int, 6),
        "adversarial": (_bool, True),
        "complex": (_bool, True),
    },
    "stability-run": {
        "metric": (str, "identity"),
        "coefficients": (str, "laplacian"),
        "target": (str, "x1^2 - x2^2"),
        "delta": (_positive_list, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]),
        "eps_power": (_positive(float), 2.0),
        "eta": (_eta, 0.0),
        "data": (str, "consistent"),
    },
    "stokes-check": {
        "solution": (str, "quadratic-pressure"),
        "weight": (str, "quadratic"),
        "gamma": (_positive(float), 2.0),
        "s": (_positive_list, [8.0, 16.0, 32.0, 64.0]),
        "random_states": (int, 10),
    },
    "interp-norms": {
        "eta": (_etas, [0.5, 1.0, 1.5]),
        "family_count": (int, 20),
    },
    "suite": {},
}

KINDS = tuple(SCHEMAS)

# interp-norms needs a dense eigensolve; default to a grid that keeps it quick
KIND_GRID_DEFAULTS = {"interp-norms": {"Nr": 33, "Ntheta": 64}}


@dataclass
class ExperimentConfig:
    kind: str
    values: dict[str, Any]
    source: str = "<config>"
    lines: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def echo(self) -> dict:
        return {"experiment": self.kind, **{k: v for k, v in self.values.items() if k != "experiment"}}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {raw[key][1]})")
        raw[key] = (value, lineno)

    if "experiment" not in raw:
        raise ConfigError(f"{source}: missing required key 'experiment' (one of {', '.join(KINDS)})")
    kind, kind_line = raw["experiment"]
    if kind not in SCHEMAS:
        raise ConfigError(f"{source}:{kind_line}: key 'experiment': unknown kind {kind!r}; expected one of {', '.join(KINDS)}")

    schema = {**COMMON, **SCHEMAS[kind]}
    values: dict[str, Any] = {}
    for key, (conv, default) in schema.items():
        values[key] = KIND_GRID_DEFAULTS.get(kind, {}).get(key, default)
    lines = {}
    for key, (value, lineno) in raw.items():
        if key not in schema:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} for experiment {kind!r}")
        conv, _ = schema[key]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: key {key!r}: {exc}") from None
        lines[key] = lineno
    if values["R1"] <= values["r0"]:
        raise ConfigError(f"{source}: need r0 < R1, got r0={values['r0']}, R1={values['R1']}")
    return ExperimentConfig(kind, values, source, lines)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
