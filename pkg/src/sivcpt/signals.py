"""Sampled-signal containers shared by the synthesis and analysis code."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Spectrum:
    """Signal versus detuning.

    ``x`` is angular detuning (rad/s); ``kind`` says what was scanned
    (``"two_photon"`` or ``"laser"``) and whether ``y`` holds counts.
    """

    x: np.ndarray
    y: np.ndarray
    y_err: Optional[np.ndarray] = None
    kind: str = "two_photon"
    counts: bool = False
    flags: tuple = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly ascending")
        if self.y_err is not None:
            e = np.asarray(self.y_err, dtype=float)
            if e.shape != y.shape:
                raise ValueError("y_err must match y")
            object.__setattr__(self, "y_err", e)
        if self.counts and np.any(y < 0):
            raise ValueError("counts must be nonnegative")

    @property
    def x_hz(self):
        return self.x / (2 * np.pi)


@dataclass(frozen=True)
class FluorescenceTrace:
    """Time-resolved fluorescence over annotated pulse windows.

    ``window`` holds, per sample, the index of the pulse it belongs to.
    """

    times: np.ndarray
    signal: np.ndarray
    window: np.ndarray
    pulse_duration: float
    counts: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        if not (t.shape == np.shape(self.signal) == np.shape(self.window)):
            raise ValueError("times, signal and window must have equal length")
        if self.counts and np.any(np.asarray(self.signal) < 0):
            raise ValueError("counts must be nonnegative")

    def windows(self):
        return sorted(set(int(w) for w in np.unique(self.window)))

    def pulse(self, index):
        sel = self.window == index
        return self.times[sel], self.signal[sel]
