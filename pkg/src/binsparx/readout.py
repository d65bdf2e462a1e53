"""Current sensing: dummy-column compensation and ADC quantization.

The sense chain is an op-amp virtual ground (sink resistance fully
canceled) followed by an ADC whose quantum defaults to one ON-cell current,
so digital level k corresponds to an ideal count of k ON cells.  For ReRAM
arrays, an all-HRS dummy column driven by the same activations is solved
alongside the data columns and its current subtracted before digitization,
canceling the stored-0 leakage term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = ["AdcModel", "DummyColumnConfig", "adc_quantize", "dummy_compensate"]

ROUNDINGS = ("half_even", "half_up")


@dataclass(frozen=True)
class AdcModel:
    """Mid-rise quantizer: level = clamp(round((i - offset)/quantum), 0, 2^bits - 1).

    Ties round to nearest even by default.  Out-of-range inputs saturate;
    saturation is legal, counted behavior, not an error.
    """

    bits: int
    quantum: float
    offset: float = 0.0
    rounding: str = "half_even"

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError(f"AdcModel: bits must be >= 1, got {self.bits}")
        if self.quantum <= 0:
            raise ConfigError(f"AdcModel: quantum must be > 0, got {self.quantum}")
        if self.rounding not in ROUNDINGS:
            raise ConfigError(f"AdcModel: rounding must be one of {ROUNDINGS}")

    @property
    def levels(self) -> int:
        return 1 << self.bits

    def _round(self, x: np.ndarray) -> np.ndarray:
        if self.rounding == "half_up":
            return np.floor(x + 0.5)
        return np.rint(x)

    def quantize(self, i: float) -> int:
        """Digitize one current sample (amperes) to an integer level."""
        if i < 0:
            raise DomainError(f"adc input must be >= 0, got {i}")
        level = self._round(np.asarray((i - self.offset) / self.quantum))
        return int(np.clip(level, 0, self.levels - 1))

    def quantize_array(self, i: np.ndarray) -> tuple[np.ndarray, int]:
        """Vectorized :meth:`quantize`; also returns the saturation count."""
        x = np.asarray(i, dtype=np.float64)
        if x.size and x.min() < 0:
            raise DomainError("adc input must be >= 0")
        raw = self._round((x - self.offset) / self.quantum)
        clamped = int(((raw < 0) | (raw > self.levels - 1)).sum())
        return np.clip(raw, 0, self.levels - 1).astype(np.int64), clamped


def adc_quantize(i: float, adc: AdcModel) -> int:
    """Functional form of :meth:`AdcModel.quantize`."""
    return adc.quantize(i)


@dataclass(frozen=True)
class DummyColumnConfig:
    """All-HRS reference column sharing the data columns' activations."""

    enabled: bool = False
    domain: str = "analog"  # subtract before ("analog") or after ("digital") the ADC

    def __post_init__(self):
        if self.domain not in ("analog", "digital"):
            raise ConfigError(f"DummyColumnConfig: bad domain {self.domain!r}")


def dummy_compensate(i_data, i_dummy):
    """Subtract the dummy-column current, floored at zero."""
    if np.isscalar(i_data) and np.isscalar(i_dummy):
        return max(0.0, float(i_data) - float(i_dummy))
    return np.maximum(0.0, np.asarray(i_data) - np.asarray(i_dummy))
