"""Poisson deployment geometry and user placement.

The serving base station sits at the origin (typical-cell convention) and the
interfering base stations form a Poisson point process on a disk window.
Cell membership is nearest-base-station association against that point set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

TAU = 2.0 * math.pi

# Attempt caps for rejection sampling.  Exhaustion means the realization
# cannot satisfy the request and the trial should be discarded.
PLACEMENT_MAX_ATTEMPTS = 100
CELL_SAMPLE_MAX_ATTEMPTS = 10_000


class MaxAttemptsExceeded(RuntimeError):
    """Rejection sampling hit its attempt cap; discard the trial."""


@dataclass(frozen=True)
class NetworkRealization:
    """One sampled deployment: interferer coordinates plus derived distances.

    ``xs``/``ys`` hold the interferer coordinates; the serving base station is
    the origin.  ``rho`` is the distance to the nearest interferer, so the
    disk of radius ``rho / 2`` is guaranteed to lie inside the serving cell.
    """

    xs: np.ndarray
    ys: np.ndarray
    rho: float
    window_radius: float

    def __post_init__(self):
        if self.xs.size == 0:
            raise ValueError("realization needs at least one interferer")
        if not (math.isfinite(self.rho) and self.rho > 0.0):
            raise ValueError(f"invalid nearest-interferer distance {self.rho}")

    @property
    def serving_position(self) -> tuple[float, float]:
        return (0.0, 0.0)

    @property
    def interferer_positions(self) -> np.ndarray:
        """Interferer coordinates as an ``(n, 2)`` array."""
        return np.column_stack((self.xs, self.ys))

    @cached_property
    def _nearest_index(self) -> cKDTree:
        # built on first use; only the candidate-heavy sampling paths need it
        return cKDTree(self.interferer_positions)

    @classmethod
    def from_points(cls, points, window_radius: Optional[float] = None) -> "NetworkRealization":
        """Build a realization from an explicit interferer point set (tests,
        hand-constructed fixtures)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if pts.shape[0] == 0:
            raise ValueError("realization needs at least one interferer")
        xs = np.ascontiguousarray(pts[:, 0])
        ys = np.ascontiguousarray(pts[:, 1])
        d2 = xs * xs + ys * ys
        rho = math.sqrt(float(d2.min()))
        if window_radius is None:
            window_radius = math.sqrt(float(d2.max()))
        return cls(xs=xs, ys=ys, rho=rho, window_radius=window_radius)


@dataclass(frozen=True)
class PlacementResult:
    """Outcome of placing the strong/weak pair at a controlled disparity."""

    strong_position: tuple[float, float]
    weak_position: Optional[tuple[float, float]]
    feasible: bool


def sample_realization(density: float, window_radius: float,
                       rng: np.random.Generator) -> NetworkRealization:
    """Sample interferer positions from a PPP of the given density on a disk.

    The point count is Poisson with mean ``density * pi * window_radius**2``
    and points are uniform on the disk.  Empty draws are resampled so that
    the nearest-interferer distance is always defined.
    """
    if not (math.isfinite(density) and density > 0.0):
        raise ValueError(f"density must be positive and finite, got {density}")
    if not (math.isfinite(window_radius) and window_radius > 0.0):
        raise ValueError(f"window_radius must be positive and finite, got {window_radius}")
    lam = density * math.pi * window_radius * window_radius
    n = int(rng.poisson(lam))
    while n == 0:
        n = int(rng.poisson(lam))
    u = rng.random(2 * n)
    radii = window_radius * np.sqrt(u[:n])
    angles = TAU * u[n:]
    xs = radii * np.cos(angles)
    ys = radii * np.sin(angles)
    # rho is defined over the stored coordinates, not the polar radii: the
    # trig round-trip can differ in the last ulp.
    rho = math.sqrt(float((xs * xs + ys * ys).min()))
    return NetworkRealization(xs=xs, ys=ys, rho=rho, window_radius=window_radius)


def in_cell(point, realization: NetworkRealization) -> bool:
    """Nearest-base-station association test for the serving cell.

    True iff the point is strictly closer to the origin than to every
    interferer; exact ties resolve to False.
    """
    px, py = float(point[0]), float(point[1])
    d0 = px * px + py * py
    d2 = (realization.xs - px) ** 2 + (realization.ys - py) ** 2
    return bool(d2.min() > d0)


def place_disparity_pair(realization: NetworkRealization, disparity: float,
                         rng: np.random.Generator,
                         max_attempts: int = PLACEMENT_MAX_ATTEMPTS) -> PlacementResult:
    """Place the strong user at ``rho / 4`` and the weak user at
    ``disparity * rho / 4``, both at uniform random orientations.

    The weak user's angle is redrawn until it lands inside the cell or the
    attempt cap is hit; the strong user needs no membership check because
    ``rho / 4 < rho / 2``.
    """
    if not (disparity >= 1.0):
        raise ValueError(f"disparity must be >= 1, got {disparity}")
    rho = realization.rho
    r_strong = 0.25 * rho
    a = TAU * rng.random()
    strong = (r_strong * math.cos(a), r_strong * math.sin(a))

    r_weak = disparity * r_strong
    guaranteed = r_weak < 0.5 * rho
    r2 = r_weak * r_weak
    for _ in range(max_attempts):
        a = TAU * rng.random()
        weak = (r_weak * math.cos(a), r_weak * math.sin(a))
        if guaranteed:
            return PlacementResult(strong, weak, True)
        d2 = (realization.xs - weak[0]) ** 2 + (realization.ys - weak[1]) ** 2
        if d2.min() > r2:
            return PlacementResult(strong, weak, True)
    return PlacementResult(strong, None, False)


def sample_user_in_cell(realization: NetworkRealization, rng: np.random.Generator,
                        max_attempts: int = CELL_SAMPLE_MAX_ATTEMPTS) -> tuple[float, float]:
    """Draw a point uniformly from the serving cell by rejection from the
    window disk, returning the first accepted candidate.

    Candidates are tested in batches (the cell covers roughly 1/(density *
    pi * window**2) of the window, so scalar rejection would dominate the
    strategy paths).  Raises :class:`MaxAttemptsExceeded` on a degenerate
    cell.
    """
    R = realization.window_radius
    tree = realization._nearest_index
    remaining = max_attempts
    while remaining > 0:
        m = min(256, remaining)
        remaining -= m
        radii = R * np.sqrt(rng.random(m))
        angles = TAU * rng.random(m)
        px = radii * np.cos(angles)
        py = radii * np.sin(angles)
        nearest, _ = tree.query(np.column_stack((px, py)))
        # the tree prefilters with an ulp of slack; the authoritative
        # membership test confirms, since the distance computations differ
        # in the last ulp
        for i in np.flatnonzero(nearest > radii * (1.0 - 1e-12)):
            p = (float(px[i]), float(py[i]))
            if in_cell(p, realization):
                return p
    raise MaxAttemptsExceeded(
        f"no in-cell point found in {max_attempts} attempts")
