"""Pre-existing cracks as an initial history field, and the irreversibility
update of the history variable."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .material import MaterialParams

PHI_CRACK = 0.999


@dataclass(frozen=True)
class CrackSegment:
    """Straight crack given by its centre, orientation (rad) and length (mm)."""

    cx: float
    cy: float
    theta: float
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"crack length must be positive, got {self.length}")

    @property
    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        dx = 0.5 * self.length * math.cos(self.theta)
        dy = 0.5 * self.length * math.sin(self.theta)
        return (self.cx - dx, self.cy - dy), (self.cx + dx, self.cy + dy)

    @classmethod
    def from_endpoints(cls, p, q) -> "CrackSegment":
        (x0, y0), (x1, y1) = p, q
        return cls(0.5 * (x0 + x1), 0.5 * (y0 + y1), math.atan2(y1 - y0, x1 - x0), math.hypot(x1 - x0, y1 - y0))

    def inside(self, Lx: float, Ly: float) -> bool:
        return all(0.0 <= x <= Lx and 0.0 <= y <= Ly for x, y in self.endpoints)

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.cx, self.cy, self.theta, self.length)


def distance_to_segment(p, crack: CrackSegment) -> np.ndarray:
    """Euclidean distance from point(s) ``p[..., 2]`` to the closed segment."""
    p = np.asarray(p, dtype=float)
    (ax, ay), (bx, by) = crack.endpoints
    dx, dy = bx - ax, by - ay
    px = p[..., 0] - ax
    py = p[..., 1] - ay
    t = np.clip((px * dx + py * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    return np.hypot(px - t * dx, py - t * dy)


def initial_history(p, cracks: Iterable[CrackSegment], params: MaterialParams,
                    phi_c: float = PHI_CRACK) -> np.ndarray:
    """History value that makes the phase field reach ``phi_c`` on each crack.

    Decays linearly to zero at distance ``l0 / 2``.  Several cracks combine by
    pointwise maximum.
    """
    if not 0.0 < phi_c < 1.0:
        raise ValueError(f"phi_c must lie in (0, 1), got {phi_c}")
    p = np.asarray(p, dtype=float)
    peak = phi_c / (1.0 - phi_c) * params.Gc / (2.0 * params.l0)
    H0 = np.zeros(p.shape[:-1])
    for crack in cracks:
        d = distance_to_segment(p, crack)
        h = np.where(d <= 0.5 * params.l0, peak * (1.0 - 2.0 * d / params.l0), 0.0)
        np.maximum(H0, h, out=H0)
    return H0


def update_history(H: np.ndarray, psi_plus: np.ndarray) -> np.ndarray:
    """Pointwise running maximum ``max(H, psi_plus)`` (returns a new array)."""
    H = np.asarray(H)
    psi_plus = np.asarray(psi_plus)
    if H.shape != psi_plus.shape:
        raise ValueError(f"history shape {H.shape} does not match energy shape {psi_plus.shape}")
    return np.maximum(H, psi_plus)
