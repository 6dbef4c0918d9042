"""
Fixed-Point Format Module

Bit-exact semantics of signed Q(i,f) fixed-point numbers: i integer bits
(sign included) and f fraction bits. Values are rounded to the nearest grid
point k * 2^-f with ties going to the even code, and saturate at the range
boundaries instead of wrapping.

Q(4,4) spans [-8.0, 7.9375] in steps of 0.0625.
"""
import re
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from core.exceptions import InvalidFormatError, NonFiniteError


# float64 holds every code of a format up to this width exactly
MAX_TOTAL_BITS = 48

_FORMAT_PATTERN = re.compile(r'^[Qq]?\s*(\d+)\s*[.,/]\s*(\d+)$')

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class QFormat:
    """
    Signed fixed-point format Q(int_bits, frac_bits).

    Immutable value type; text form is "Q{int_bits}.{frac_bits}".
    """
    int_bits: int
    frac_bits: int

    def __post_init__(self):
        text = f"Q{self.int_bits}.{self.frac_bits}"
        if not isinstance(self.int_bits, (int, np.integer)) or self.int_bits < 1:
            raise InvalidFormatError(text, "int_bits must be an integer >= 1 (sign bit included)")
        if not isinstance(self.frac_bits, (int, np.integer)) or self.frac_bits < 0:
            raise InvalidFormatError(text, "frac_bits must be an integer >= 0")
        if self.int_bits + self.frac_bits > MAX_TOTAL_BITS:
            raise InvalidFormatError(text, f"total width exceeds {MAX_TOTAL_BITS} bits")

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        """
        Parse the textual form.

        Examples:
            >>> QFormat.parse("Q4.4")
            QFormat(int_bits=4, frac_bits=4)
            >>> QFormat.parse("16.16")
            QFormat(int_bits=16, frac_bits=16)
        """
        match = _FORMAT_PATTERN.match(text.strip())
        if not match:
            raise InvalidFormatError(text, "expected the form 'Qi.f', e.g. 'Q4.4'")
        return cls(int(match.group(1)), int(match.group(2)))

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}"

    @property
    def total_bits(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def scale(self) -> float:
        """Codes per unit, 2^frac_bits."""
        return float(2 ** self.frac_bits)

    def step(self) -> float:
        return 2.0 ** (-self.frac_bits)

    def min_value(self) -> float:
        return -(2.0 ** (self.int_bits - 1))

    def max_value(self) -> float:
        return 2.0 ** (self.int_bits - 1) - self.step()

    def code_range(self) -> Tuple[int, int]:
        """Inclusive range of raw integer codes."""
        half = 1 << (self.total_bits - 1)
        return -half, half - 1

    def num_values(self) -> int:
        return 1 << self.total_bits

    def grid(self) -> np.ndarray:
        """Every representable value in ascending order (small formats only)."""
        lo, hi = self.code_range()
        return np.arange(lo, hi + 1, dtype=np.int64).astype(np.float64) * self.step()

    def describe(self) -> dict:
        return {
            "format": str(self),
            "int_bits": self.int_bits,
            "frac_bits": self.frac_bits,
            "step": self.step(),
            "min_value": self.min_value(),
            "max_value": self.max_value(),
            "num_values": self.num_values(),
        }


@dataclass(frozen=True)
class FixedValue:
    """Stored integer code plus its format; real value = raw * 2^-frac_bits."""
    raw: int
    format: QFormat

    def __post_init__(self):
        lo, hi = self.format.code_range()
        if not lo <= self.raw <= hi:
            raise InvalidFormatError(
                str(self.format), f"raw code {self.raw} outside [{lo}, {hi}]"
            )


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(where)


def encode_array(x: ArrayLike, q: QFormat) -> np.ndarray:
    """Integer codes (int64) of the nearest representable values."""
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, f"encode to {q}")
    # Clamping first keeps x * scale finite; the bounds are grid points so
    # clamp-then-round equals round-then-clamp.
    clamped = np.clip(arr, q.min_value(), q.max_value())
    return np.rint(clamped * q.scale).astype(np.int64)


def quantize_array(x: ArrayLike, q: QFormat) -> np.ndarray:
    """Elementwise quantize; returns float64 values on the grid of q."""
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, f"quantize to {q}")
    clamped = np.clip(arr, q.min_value(), q.max_value())
    return np.rint(clamped * q.scale) / q.scale


def quantize(x: float, q: QFormat) -> float:
    """Nearest grid point of q to x, saturating at the range boundaries."""
    return float(quantize_array(np.float64(x), q))


def encode(x: float, q: QFormat) -> FixedValue:
    return FixedValue(raw=int(encode_array(np.float64(x), q)), format=q)


def dequantize(v: FixedValue) -> float:
    return v.raw * v.format.step()


def in_range_mask(x: np.ndarray, q: QFormat) -> np.ndarray:
    """True where quantizing x does not saturate (min_value <= x <= max_value)."""
    return (x >= q.min_value()) & (x <= q.max_value())
