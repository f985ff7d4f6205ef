"""Configuration database: loading, validation and emission of device records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import jsonschema

from ..errors import ConfigError, DomainError, NameNotFound
from ..simbus import LATCH_FLAG
from .codecs import Codec, exact

READ_ONLY = "read-only"
READ_WRITE = "read-write"
PERSISTENT = "persistent"
TRANSIENT = "transient"


@dataclass(frozen=True)
class AlarmLimits:
    lo: float
    hi: float
    hysteresis: float = 0.0


@dataclass(frozen=True)
class PropertySpec:
    name: str
    access: str
    kind: str
    units: str
    range: tuple
    rca: int
    codec: str
    scale: Optional[float] = None
    default: Optional[float] = None
    monitor_period_events: Optional[int] = None
    alarm: Optional[AlarmLimits] = None

    @property
    def writable(self) -> bool:
        return self.access == READ_WRITE

    @property
    def codec_obj(self) -> Codec:
        return _codec(self.codec, self.scale)

    def in_range(self, value) -> bool:
        lo, hi = self.range
        return exact(lo) <= exact(value) <= exact(hi)


@lru_cache(maxsize=None)
def _codec(name, scale):
    return Codec.parse(name, scale)


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    kind: str
    lifecycle: str
    bus: Optional[str]
    node: Optional[int]
    params: dict = field(default_factory=dict)
    properties: tuple = ()
    slot: int = 0
    parent: Optional[str] = None

    def prop(self, name: str) -> PropertySpec:
        for p in self.properties:
            if p.name == name:
                return p
        raise NameNotFound(f"{self.name} has no property {name!r}")

    def has_prop(self, name: str) -> bool:
        return any(p.name == name for p in self.properties)


@dataclass(frozen=True)
class BusSpec:
    name: str
    master: str
    bitrate_bps: int = 1_000_000
    response_timeout_ns: int = 1_000_000


@dataclass(frozen=True)
class Registry:
    buses: tuple
    devices: tuple
    epoch_ns: int = 0

    def device(self, name: str) -> DeviceSpec:
        for d in self.devices:
            if d.name == name:
                return d
        raise NameNotFound(f"no device named {name!r}")

    def bus(self, name: str) -> BusSpec:
        for b in self.buses:
            if b.name == name:
                return b
        raise NameNotFound(f"no bus named {name!r}")

    def children(self, name: str) -> list:
        return [d for d in self.devices if d.parent == name]

    @property
    def masters(self) -> list:
        seen = []
        for b in self.buses:
            if b.master not in seen:
                seen.append(b.master)
        return seen

    def __len__(self):
        return len(self.devices)


@lru_cache(maxsize=1)
def config_schema() -> dict:
    text = resources.files("ticsim.data").joinpath("config.schema.json").read_text()
    return json.loads(text)


def default_config_path() -> Path:
    return Path(str(resources.files("ticsim.data").joinpath("ti_default.json")))


def load_config(document: Union[str, bytes, Mapping[str, Any]]) -> Registry:
    """Parse and validate a configuration document (JSON text or decoded mapping)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(config_schema())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ConfigError(first.message, first.absolute_path)

    buses = tuple(
        BusSpec(
            b["name"],
            b["master"],
            b.get("bitrate_bps", 1_000_000),
            b.get("response_timeout_ns", 1_000_000),
        )
        for b in document["buses"]
    )
    bus_names = _unique([b.name for b in buses], "buses")
    devices = []
    for i, d in enumerate(document["devices"]):
        devices.append(_load_device(d, ("devices", i), bus_names))
    _unique([d.name for d in devices], "devices")
    registry = Registry(buses, tuple(devices), document.get("epoch_ns", 0))
    _check_topology(registry)
    return registry


def load_config_file(path) -> Registry:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


def _unique(names, where):
    seen = set()
    for i, n in enumerate(names):
        if n in seen:
            raise ConfigError(f"duplicate name {n!r}", (where, i, "name"))
        seen.add(n)
    return seen


def _load_device(d, path, bus_names) -> DeviceSpec:
    if d["kind"] == "composite":
        if d["properties"] or d["bus"] is not None:
            raise ConfigError("composite devices own no bus or properties", path)
    else:
        if d["bus"] not in bus_names:
            raise ConfigError(f"unknown bus {d['bus']!r}", path + ("bus",))
        if d["node"] is None:
            raise ConfigError("hardware device needs a node", path + ("node",))
    props = []
    rcas = set()
    for j, p in enumerate(d["properties"]):
        ppath = path + ("properties", j)
        lo, hi = p["range"]
        if lo > hi:
            raise ConfigError(f"range lo {lo} > hi {hi}", ppath + ("range",))
        if p["rca"] in rcas:
            raise ConfigError(f"rca {p['rca']:#x} reused", ppath + ("rca",))
        if p["rca"] & LATCH_FLAG:
            raise ConfigError("rca collides with the latch flag bit", ppath + ("rca",))
        rcas.add(p["rca"])
        if (p["kind"] == "fixed") != ("scale" in p):
            raise ConfigError("fixed-point properties (only) need a scale", ppath)
        alarm = p["alarm"]
        if alarm is not None:
            alarm = AlarmLimits(alarm["lo"], alarm["hi"], alarm.get("hysteresis", 0.0))
            if alarm.lo > alarm.hi:
                raise ConfigError("alarm lo > hi", ppath + ("alarm",))
        spec = PropertySpec(
            name=p["name"],
            access=p["access"],
            kind=p["kind"],
            units=p["units"],
            range=(lo, hi),
            rca=p["rca"],
            codec=p["codec"],
            scale=p.get("scale"),
            default=p.get("default"),
            monitor_period_events=p["monitor_period_events"],
            alarm=alarm,
        )
        codec = spec.codec_obj
        try:
            raw_lo, raw_hi = codec.to_raw(lo), codec.to_raw(hi)
        except (DomainError, ValueError) as exc:
            raise ConfigError(f"range does not fit codec {p['codec']}: {exc}", ppath + ("range",))
        if raw_lo > raw_hi:
            raise ConfigError("range inverted after encoding", ppath + ("range",))
        props.append(spec)
    _unique([p.name for p in props], path + ("properties",))
    if d["kind"] == "fts":
        k = d["params"].get("walsh_index")
        if not isinstance(k, int) or not 1 <= k <= 63:
            raise ConfigError("fts needs params.walsh_index in 1..63", path + ("params", "walsh_index"))
    return DeviceSpec(
        name=d["name"],
        kind=d["kind"],
        lifecycle=d["lifecycle"],
        bus=d["bus"],
        node=d["node"],
        params=dict(d["params"]),
        properties=tuple(props),
        slot=d.get("slot", 0),
        parent=d.get("parent"),
    )


def _check_topology(reg: Registry) -> None:
    names = {d.name for d in reg.devices}
    nodes = {}
    walsh = {}
    for i, d in enumerate(reg.devices):
        if d.parent is not None and d.parent not in names:
            raise ConfigError(f"unknown parent {d.parent!r}", ("devices", i, "parent"))
        if d.bus is not None:
            key = (d.bus, d.node)
            if key in nodes:
                raise ConfigError(f"node {d.node} on {d.bus} already used by {nodes[key]}",
                                  ("devices", i, "node"))
            nodes[key] = d.name
        if d.kind == "fts":
            k = d.params["walsh_index"]
            if k in walsh:
                raise ConfigError(f"walsh_index {k} already assigned to {walsh[k]}",
                                  ("devices", i, "params", "walsh_index"))
            walsh[k] = d.name


def emit(registry: Registry) -> dict:
    """Inverse of ``load_config``: a document that loads back to ``registry``."""
    doc = {
        "buses": [
            {
                "name": b.name,
                "master": b.master,
                "bitrate_bps": b.bitrate_bps,
                "response_timeout_ns": b.response_timeout_ns,
            }
            for b in registry.buses
        ],
        "devices": [],
    }
    if registry.epoch_ns:
        doc["epoch_ns"] = registry.epoch_ns
    for d in registry.devices:
        dev = {
            "name": d.name,
            "kind": d.kind,
            "lifecycle": d.lifecycle,
            "bus": d.bus,
            "node": d.node,
            "slot": d.slot,
            "params": dict(d.params),
            "properties": [],
        }
        if d.parent is not None:
            dev["parent"] = d.parent
        for p in d.properties:
            prop = {
                "name": p.name,
                "access": p.access,
                "kind": p.kind,
                "units": p.units,
                "range": list(p.range),
                "rca": p.rca,
                "codec": p.codec,
                "monitor_period_events": p.monitor_period_events,
                "alarm": None
                if p.alarm is None
                else {"lo": p.alarm.lo, "hi": p.alarm.hi, "hysteresis": p.alarm.hysteresis},
            }
            if p.scale is not None:
                prop["scale"] = p.scale
            if p.default is not None:
                prop["default"] = p.default
            dev["properties"].append(prop)
        doc["devices"].append(dev)
    return doc
