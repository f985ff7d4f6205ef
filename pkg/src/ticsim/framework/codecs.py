"""Property payload codecs: big-endian integers of 1-8 bytes, optionally scaled."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from ..errors import DomainError, RangeError

Number = Union[int, float, Fraction]

_CODEC_RE = re.compile(r"^([ui])(8|16|24|32|40|48|56|64)$")


def exact(x: Number) -> Fraction:
    """Decimal-faithful conversion (0.1 becomes 1/10, not the nearest double)."""
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class Codec:
    signed: bool
    nbytes: int
    scale: Optional[Fraction] = None

    @classmethod
    def parse(cls, name: str, scale: Optional[Number] = None) -> "Codec":
        m = _CODEC_RE.match(name)
        if m is None:
            raise DomainError(f"unknown codec {name!r}")
        return cls(m.group(1) == "i", int(m.group(2)) // 8, exact(scale) if scale is not None else None)

    @property
    def raw_min(self) -> int:
        return -(1 << (8 * self.nbytes - 1)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        bits = 8 * self.nbytes
        return (1 << (bits - 1)) - 1 if self.signed else (1 << bits) - 1

    def to_raw(self, value: Number) -> int:
        if self.scale is None:
            if isinstance(value, float) and not value.is_integer():
                raise RangeError(f"{value} is not an integer")
            raw = int(value)
        else:
            raw = round(exact(value) / self.scale)
        if not self.raw_min <= raw <= self.raw_max:
            raise RangeError(f"raw value {raw} does not fit {self.nbytes}-byte register")
        return raw

    def from_raw(self, raw: int):
        if self.scale is None:
            return raw
        return float(raw * self.scale)

    def pack(self, raw: int) -> bytes:
        try:
            return raw.to_bytes(self.nbytes, "big", signed=self.signed)
        except OverflowError as exc:
            raise RangeError(f"raw value {raw} does not fit {self.nbytes} bytes") from exc

    def unpack(self, payload: bytes) -> int:
        if len(payload) != self.nbytes:
            raise DomainError(f"expected {self.nbytes} bytes, got {len(payload)}")
        return int.from_bytes(payload, "big", signed=self.signed)

    def encode(self, value: Number) -> bytes:
        return self.pack(self.to_raw(value))

    def decode(self, payload: bytes):
        return self.from_raw(self.unpack(payload))
