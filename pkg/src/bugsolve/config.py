"""Run settings from a ``key = value`` file.

Values are JSON (numbers, strings in double quotes, lists); ``#`` starts a
comment. Dotted keys such as ``rf.trees`` map to ``rf_trees``. Example::

    niwf_threshold = 0.116
    split_fractions = [0.8, 0.1, 0.1]
    rf.trees = 100
    class_weights = "balanced"
"""
from __future__ import annotations

import json
import os
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from bugsolve.filters import DEFAULT_OVERLAP_THRESHOLD, ConfigurationError
from bugsolve.significance import DEFAULT_ALPHA, DEFAULT_SAMPLE_SIZE, DEFAULT_SAMPLES


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # None means "use the 10th percentile of the training NIWF scores"
    niwf_threshold: float | None = Field(default=None, ge=0, le=1)
    niwf_percentile: float = Field(default=0.10, gt=0, lt=1)
    overlap_threshold: float = Field(default=DEFAULT_OVERLAP_THRESHOLD, ge=0, le=1)
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    lexrank_threshold: float = 0.1
    lexrank_damping: float = Field(default=0.85, gt=0, lt=1)
    rf_trees: int = Field(default=100, ge=1)
    rf_seed: int = 0
    rf_threshold: float = 0.5
    bootstrap_samples: int = Field(default=DEFAULT_SAMPLES, ge=1)
    bootstrap_size: int = Field(default=DEFAULT_SAMPLE_SIZE, ge=1)
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0, lt=1)
    aug_weight: float = Field(default=0.7, gt=0)
    class_weights: Literal["balanced", "fixed", "none"] | tuple[float, float] = "balanced"

    @field_validator("split_fractions")
    @classmethod
    def _sums_to_one(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(f <= 0 for f in v) or abs(sum(v) - 1) > 1e-9:
            raise ValueError("split_fractions must be three positive numbers summing to 1")
        return v

    def forest_class_weight(self):
        from bugsolve.when.features import FIXED_CLASS_WEIGHTS

        if self.class_weights == "fixed":
            return FIXED_CLASS_WEIGHTS
        if self.class_weights == "none":
            return None
        return self.class_weights


def parse_config(text: str, source: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigurationError(f"{source}:{lineno}: expected key = value")
        key = key.strip().replace(".", "_")
        value = value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError as exc:
            # allow a trailing comment after the value
            try:
                values[key] = json.loads(value.split("#", 1)[0])
            except json.JSONDecodeError:
                raise ConfigurationError(f"{source}:{lineno}: value for {key!r} is not valid JSON ({exc.msg})") from None
    return values


def load_settings(path: str | os.PathLike | None = None, **overrides: object) -> Settings:
    """Defaults, then the file, then non-None keyword overrides."""
    values: dict[str, object] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config(fh.read(), str(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or "settings"
        raise ConfigurationError(f"invalid setting {loc}: {first['msg']}") from None
