"""Flat dotted-key configuration with INI-style files.

A config file groups keys by their first dotted component::

    d_f = 64
    [rsbg]
    lambda = 0.5
    [loss]
    gamma = inf

Top-level keys (no dot) live before the first section header.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterator, Mapping

DEFAULTS: dict[str, Any] = {
    "d_f": 64,
    "encoder.bidirectional": True,
    "context.enabled": False,
    "context.d_ctx": 16,
    "context.patch_size": 32,
    "data.t_obs": 8,
    "data.t_pred": 12,
    "data.disp_scale": 4.0,
    "data.pos_scale": 0.25,
    "rsbg.enabled": True,
    "rsbg.depth": 3,
    "rsbg.d_feat": 32,
    "rsbg.d_r": 16,
    "rsbg.hidden": 64,
    "rsbg.loss": "row_ce",
    "rsbg.lambda": 1.0,
    "gcn.layers": 2,
    "gcn.d_g": 64,
    "gcn.self_loop": 1.0,
    "decoder.d_dec": 128,
    "decoder.teacher_forcing": False,
    "loss.gamma": 20.0,
    "optim.name": "adam",
    "optim.lr": 1e-3,
    "train.epochs": 200,
    "train.batch_size": 16,
    "train.seed": 0,
    "train.patience": 20,
    "train.val_fraction": 0.1,
}

_CHOICES = {"rsbg.loss": ("row_ce", "pairwise_bce"), "optim.name": ("adam", "sgd")}
_POSITIVE = {
    "d_f", "context.d_ctx", "context.patch_size", "data.t_obs", "data.t_pred", "rsbg.depth",
    "rsbg.d_feat", "rsbg.d_r", "gcn.d_g", "decoder.d_dec", "train.batch_size",
    "data.disp_scale", "data.pos_scale",
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if key == "loss.gamma":
        if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
            return math.inf
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a float or 'inf', got {value!r}") from None
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {value!r}") from None
    return str(value)


class Config(Mapping[str, Any]):
    def __init__(self, overrides: Mapping[str, Any] | None = None):
        self._values = dict(DEFAULTS)
        if overrides:
            self.update(overrides)

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def update(self, overrides: Mapping[str, Any]) -> None:
        for key, value in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            self._values[key] = _coerce(key, value)
        self.validate()

    def replace(self, **overrides: Any) -> "Config":
        """Copy with overrides; keyword names use ``__`` for dots (``loss__gamma``)."""
        out = Config(self._values)
        out.update({k.replace("__", "."): v for k, v in overrides.items()})
        return out

    def validate(self) -> None:
        v = self._values
        for key, allowed in _CHOICES.items():
            if v[key] not in allowed:
                raise ConfigError(f"{key}: must be one of {allowed}, got {v[key]!r}")
        for key in _POSITIVE:
            if not v[key] > 0:
                raise ConfigError(f"{key}: must be positive, got {v[key]!r}")
        if not v["loss.gamma"] > 0:
            raise ConfigError(f"loss.gamma: must be positive or inf, got {v['loss.gamma']!r}")
        if v["rsbg.hidden"] < 0 or not 0 <= v["train.val_fraction"] < 1:
            raise ConfigError("rsbg.hidden must be >= 0 and train.val_fraction in [0, 1)")
        if v["gcn.self_loop"] < 0 or v["rsbg.lambda"] < 0 or v["optim.lr"] < 0:
            raise ConfigError("gcn.self_loop, rsbg.lambda and optim.lr must be non-negative")
        if v["encoder.bidirectional"] and v["d_f"] % 2:
            raise ConfigError("d_f must be even for a bidirectional encoder")

    def to_json(self) -> dict[str, Any]:
        return {k: ("inf" if isinstance(x, float) and math.isinf(x) else x) for k, x in self._values.items()}

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def dumps(self) -> str:
        lines = []
        sections: dict[str, list[str]] = {}
        for key, value in self.to_json().items():
            head, _, tail = key.rpartition(".")
            text = str(value).lower() if isinstance(value, bool) else str(value)
            if head:
                sections.setdefault(head, []).append(f"{tail} = {text}")
            else:
                lines.append(f"{tail} = {text}")
        for head, body in sections.items():
            lines.append(f"\n[{head}]")
            lines.extend(body)
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path) -> "Config":
        text = Path(path).read_text(encoding="utf-8")
        return cls.loads(text)

    @classmethod
    def loads(cls, text: str) -> "Config":
        parser = configparser.ConfigParser(interpolation=None, default_section="\x00")
        parser.optionxform = str  # keep key case
        try:
            parser.read_string("[__top__]\n" + text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        flat = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                flat[key if section == "__top__" else f"{section}.{key}"] = value
        return cls(flat)
