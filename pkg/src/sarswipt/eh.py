"""Nonlinear rectifier model used for the harvested-power constraints.

The default curve is the three-parameter rational fit

    F(x) = (a x + b) / (x + c) - b / c

which is zero at zero input, strictly increasing, and saturates at ``a - b/c``.
Any object exposing ``forward``, ``inverse`` and ``saturation`` can stand in for
:class:`EhModel`; the solvers only use that surface.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import SaturationExceeded


class Harvester(Protocol):
    @property
    def saturation(self) -> float: ...

    def forward(self, x): ...

    def inverse(self, y): ...


@dataclass(frozen=True)
class EhModel:
    a: float = 2.463
    b: float = 1.635  # watts
    c: float = 0.826  # watts

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.a > self.b / self.c:
            raise ValueError("need a > b/c for a positive output")

    @property
    def saturation(self) -> float:
        return self.a - self.b / self.c

    @property
    def small_signal_slope(self) -> float:
        """dF/dx at x = 0."""
        return (self.a * self.c - self.b) / self.c**2

    def forward(self, x):
        x_arr = np.asarray(x, dtype=float)
        if np.any(x_arr < 0):
            raise ValueError("input RF power must be nonnegative")
        # (a x + b)/(x + c) - b/c rewritten to avoid cancellation near zero
        out = x_arr * (self.a * self.c - self.b) / (self.c * (x_arr + self.c))
        return float(out) if out.ndim == 0 else out

    def inverse(self, y):
        y_arr = np.asarray(y, dtype=float)
        if np.any(y_arr < 0):
            raise ValueError("harvested power must be nonnegative")
        sat = self.saturation
        if np.any(y_arr >= sat):
            raise SaturationExceeded(float(np.max(y_arr)), sat)
        out = self.c * y_arr / (sat - y_arr)
        return float(out) if out.ndim == 0 else out


def eh_forward(model: Harvester, x):
    return model.forward(x)


def eh_inverse(model: Harvester, y):
    return model.inverse(y)
