"""Scenario files: run parameters and the client script standing in for an observing script."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from ..errors import ConfigError
from ..timebase import NS_PER_MS, NS_PER_S, PERIOD_NS


@dataclass
class Scenario:
    config: Optional[str] = None
    duration_s: float = 60.0
    seed: int = 0
    min_lead_events: int = 2
    latency_ns: tuple = (2 * NS_PER_MS, 40 * NS_PER_MS)
    pulse_jitter_ns: tuple = (0, 10 * NS_PER_MS)
    script: list = field(default_factory=list)

    def __post_init__(self):
        self.latency_ns = tuple(self.latency_ns)
        self.pulse_jitter_ns = tuple(self.pulse_jitter_ns)
        self.validate()

    @property
    def duration_ns(self) -> int:
        return round(self.duration_s * NS_PER_S)

    @property
    def events(self) -> int:
        return self.duration_ns // PERIOD_NS

    def validate(self) -> None:
        lo, hi = self.latency_ns
        if not 0 <= lo < hi:
            raise ConfigError("latency bounds must satisfy 0 <= lo < hi", ("latency_ns",))
        if hi > (self.min_lead_events - 1) * PERIOD_NS:
            raise ConfigError(
                f"latency bound {hi} ns is not below (min_lead_events - 1) x 48 ms",
                ("latency_ns",),
            )
        jlo, jhi = self.pulse_jitter_ns
        if not 0 <= jlo < jhi or jhi > PERIOD_NS // 2:
            raise ConfigError("pulse jitter must lie in [0, 24 ms)", ("pulse_jitter_ns",))
        for i, step in enumerate(self.script):
            if step["at_ns"] >= self.duration_ns:
                raise ConfigError("script step after the end of the run", ("script", i, "at_ns"))


@lru_cache(maxsize=1)
def scenario_schema() -> dict:
    return json.loads(resources.files("ticsim.data").joinpath("scenario.schema.json").read_text())


def load_scenario(path) -> Scenario:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    errors = sorted(jsonschema.Draft202012Validator(scenario_schema()).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(errors[0].message, errors[0].absolute_path)
    if doc.get("config"):
        cfg = Path(doc["config"])
        doc["config"] = str(cfg if cfg.is_absolute() else path.parent / cfg)
    return Scenario(**doc)
