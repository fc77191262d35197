"""User ordering and the surveyed cluster-selection strategies."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .channel import ChannelParams, UserState, make_user_state
from .geometry import (
    MaxAttemptsExceeded,
    NetworkRealization,
    PLACEMENT_MAX_ATTEMPTS,
    TAU,
    in_cell,
    place_disparity_pair,
    sample_user_in_cell,
)

log = logging.getLogger(__name__)


class OrderingMethod(str, Enum):
    BY_LINK_DISTANCE = "by_link_distance"
    BY_MEAN_SIGNAL_QUALITY = "by_mean_signal_quality"


@dataclass(frozen=True)
class Cluster:
    """Users sharing one resource block, strongest first."""

    users: tuple[UserState, ...]
    ordering_method: OrderingMethod

    def __post_init__(self):
        if len(self.users) == 0:
            raise ValueError("cluster must contain at least one user")

    def __len__(self) -> int:
        return len(self.users)


def order_users(users: Sequence[UserState], method: OrderingMethod,
                instantaneous: bool = False) -> Cluster:
    """Sort users strongest first; ties keep input order (earlier = stronger).

    ``by_link_distance`` sorts ascending by serving-link distance.
    ``by_mean_signal_quality`` sorts descending by the fading-averaged
    received signal over interference-plus-noise, r**-eta / W; the
    ``instantaneous`` flag switches that key to the faded G / W.
    """
    if len(users) == 0:
        raise ValueError("cannot order an empty user list")
    if method is OrderingMethod.BY_LINK_DISTANCE:
        ordered = sorted(users, key=lambda u: u.link_distance)
    elif method is OrderingMethod.BY_MEAN_SIGNAL_QUALITY:
        if instantaneous:
            ordered = sorted(users, key=lambda u: -(u.serving_gain / u.interference_plus_noise))
        else:
            ordered = sorted(users, key=lambda u: -(u.mean_gain / u.interference_plus_noise))
    else:
        raise ValueError(f"unknown ordering method {method!r}")
    return Cluster(tuple(ordered), method)


# --- selection strategies ---------------------------------------------------

@dataclass(frozen=True)
class RandomInCell:
    """Users drawn uniformly from the whole serving cell."""


@dataclass(frozen=True)
class InDiskHalfRho:
    """Users drawn uniformly from the disk of radius rho/2, the largest disk
    centred at the base station guaranteed to lie inside the cell."""


@dataclass(frozen=True)
class FixedDisk:
    """Users drawn from a disk of fixed radius; candidates falling outside
    the cell are rejected (and counted) to keep nearest-BS association."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"disk radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class DiskAnnulus:
    """Two-user strategy: one user from a central disk, one from an annulus.
    A gap between disk and annulus imposes a minimum distance disparity."""

    r_disk: float
    r_in: float
    r_out: float

    def __post_init__(self):
        if not (self.r_disk > 0.0 and self.r_in > 0.0 and self.r_out > self.r_in):
            raise ValueError(f"invalid disk/annulus radii {(self.r_disk, self.r_in, self.r_out)}")


@dataclass(frozen=True)
class SinrThreshold:
    """Two-user strategy: strong user's reference SINR >= t1, weak's <= t2.
    The reference is the full-budget single-user received SINR G/W."""

    t1: float
    t2: float

    def __post_init__(self):
        if self.t1 < self.t2:
            raise ValueError(f"need t1 >= t2, got t1={self.t1}, t2={self.t2}")


@dataclass(frozen=True)
class ControlledDisparity:
    """The controlled-placement experiment: strong user at rho/4, weak at
    disparity * rho/4."""

    disparity: float

    def __post_init__(self):
        if not self.disparity >= 1.0:
            raise ValueError(f"disparity must be >= 1, got {self.disparity}")


ClusterStrategy = Union[RandomInCell, InDiskHalfRho, FixedDisk, DiskAnnulus,
                        SinrThreshold, ControlledDisparity]

STRATEGY_NAMES = {
    RandomInCell: "random_in_cell",
    InDiskHalfRho: "in_disk_half_rho",
    FixedDisk: "fixed_disk",
    DiskAnnulus: "disk_annulus",
    SinrThreshold: "sinr_threshold",
    ControlledDisparity: "controlled_disparity",
}


def reference_sinr(user: UserState) -> float:
    """Full-budget single-user received SINR, the quality the user would see
    under OMA; the measurement signal for threshold-based selection."""
    return user.serving_gain / user.interference_plus_noise


def _draw_in_disk(radius: float, rng: np.random.Generator) -> tuple[float, float]:
    r = radius * math.sqrt(rng.random())
    a = TAU * rng.random()
    return (r * math.cos(a), r * math.sin(a))


def _draw_in_annulus(r_in: float, r_out: float, rng: np.random.Generator) -> tuple[float, float]:
    r = math.sqrt(rng.uniform(r_in * r_in, r_out * r_out))
    a = TAU * rng.random()
    return (r * math.cos(a), r * math.sin(a))


def select_cluster(strategy: ClusterStrategy, realization: NetworkRealization,
                   params: ChannelParams, cluster_size: int,
                   rng: np.random.Generator, *,
                   ordering: OrderingMethod = OrderingMethod.BY_LINK_DISTANCE,
                   max_attempts: int = PLACEMENT_MAX_ATTEMPTS) -> Cluster:
    """Draw candidate users per strategy and return an ordered cluster.

    Raises :class:`MaxAttemptsExceeded` when the strategy cannot be satisfied
    in this realization; the caller records the trial as placement-infeasible.
    """
    if cluster_size < 2:
        raise ValueError(f"cluster_size must be >= 2, got {cluster_size}")
    n = cluster_size

    if isinstance(strategy, RandomInCell):
        positions = [sample_user_in_cell(realization, rng) for _ in range(n)]
    elif isinstance(strategy, InDiskHalfRho):
        positions = [_draw_in_disk(0.5 * realization.rho, rng) for _ in range(n)]
    elif isinstance(strategy, FixedDisk):
        positions = []
        rejected = 0
        for _ in range(max_attempts):
            p = _draw_in_disk(strategy.radius, rng)
            if in_cell(p, realization):
                positions.append(p)
                if len(positions) == n:
                    break
            else:
                rejected += 1
        if rejected:
            log.debug("fixed_disk(radius=%g): rejected %d out-of-cell candidates",
                      strategy.radius, rejected)
        if len(positions) < n:
            raise MaxAttemptsExceeded(
                f"fixed_disk found {len(positions)}/{n} in-cell users "
                f"in {max_attempts} attempts")
    elif isinstance(strategy, DiskAnnulus):
        if n != 2:
            raise ValueError("disk_annulus supports two-user clusters only")
        positions = [
            _rejection_draw(lambda: _draw_in_disk(strategy.r_disk, rng),
                            realization, max_attempts, "disk user"),
            _rejection_draw(lambda: _draw_in_annulus(strategy.r_in, strategy.r_out, rng),
                            realization, max_attempts, "annulus user"),
        ]
    elif isinstance(strategy, SinrThreshold):
        if n != 2:
            raise ValueError("sinr_threshold supports two-user clusters only")
        for _ in range(max_attempts):
            pair = [make_user_state(sample_user_in_cell(realization, rng),
                                    realization, params, rng) for _ in range(2)]
            pair.sort(key=lambda u: -reference_sinr(u))
            if reference_sinr(pair[0]) >= strategy.t1 and reference_sinr(pair[1]) <= strategy.t2:
                return order_users(pair, ordering)
        raise MaxAttemptsExceeded(
            f"no candidate pair met T1={strategy.t1}, T2={strategy.t2} "
            f"in {max_attempts} attempts")
    elif isinstance(strategy, ControlledDisparity):
        if n != 2:
            raise ValueError("controlled_disparity supports two-user clusters only")
        placed = place_disparity_pair(realization, strategy.disparity, rng,
                                      max_attempts=max_attempts)
        if not placed.feasible:
            raise MaxAttemptsExceeded(
                f"no in-cell weak position at disparity {strategy.disparity}")
        positions = [placed.strong_position, placed.weak_position]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    users = [make_user_state(p, realization, params, rng) for p in positions]
    return order_users(users, ordering)


def _rejection_draw(draw, realization, max_attempts, what):
    for _ in range(max_attempts):
        p = draw()
        if in_cell(p, realization):
            return p
    raise MaxAttemptsExceeded(f"no in-cell {what} in {max_attempts} attempts")


def eligible(strategy: ClusterStrategy, user: UserState,
             realization: NetworkRealization) -> bool:
    """Membership predicate a candidate must pass under a spatial strategy."""
    r = user.link_distance
    if isinstance(strategy, RandomInCell):
        return in_cell(user.position, realization)
    if isinstance(strategy, InDiskHalfRho):
        return r < 0.5 * realization.rho
    if isinstance(strategy, FixedDisk):
        return r < strategy.radius and in_cell(user.position, realization)
    raise ValueError(f"{STRATEGY_NAMES.get(type(strategy), strategy)} has no "
                     "single-user eligibility predicate")


def cluster_from_pool(strategy: ClusterStrategy, pool: Sequence[UserState],
                      realization: NetworkRealization, cluster_size: int, *,
                      ordering: OrderingMethod = OrderingMethod.BY_LINK_DISTANCE) -> Cluster:
    """Select a cluster from a finite candidate pool (first eligible wins).

    Raises :class:`MaxAttemptsExceeded` when the pool cannot satisfy the
    strategy, mirroring the sampling path's selection failure.
    """
    if cluster_size < 2:
        raise ValueError(f"cluster_size must be >= 2, got {cluster_size}")
    n = cluster_size

    if isinstance(strategy, (RandomInCell, InDiskHalfRho, FixedDisk)):
        chosen = [u for u in pool if eligible(strategy, u, realization)][:n]
        if isinstance(strategy, FixedDisk):
            rejected = sum(1 for u in pool
                           if u.link_distance < strategy.radius
                           and not in_cell(u.position, realization))
            if rejected:
                log.debug("fixed_disk(radius=%g): rejected %d out-of-cell candidates",
                          strategy.radius, rejected)
        if len(chosen) < n:
            raise MaxAttemptsExceeded(
                f"pool holds {len(chosen)}/{n} eligible users for "
                f"{STRATEGY_NAMES[type(strategy)]}")
        return order_users(chosen, ordering)

    if isinstance(strategy, DiskAnnulus):
        if n != 2:
            raise ValueError("disk_annulus supports two-user clusters only")
        inner = next((u for u in pool if u.link_distance < strategy.r_disk
                      and in_cell(u.position, realization)), None)
        outer = next((u for u in pool if u is not inner
                      and strategy.r_in <= u.link_distance <= strategy.r_out
                      and in_cell(u.position, realization)), None)
        if inner is None or outer is None:
            raise MaxAttemptsExceeded("pool cannot fill the disk/annulus pair")
        return order_users([inner, outer], ordering)

    if isinstance(strategy, SinrThreshold):
        if n != 2:
            raise ValueError("sinr_threshold supports two-user clusters only")
        strong = next((u for u in pool if reference_sinr(u) >= strategy.t1), None)
        weak = next((u for u in pool if u is not strong
                     and reference_sinr(u) <= strategy.t2), None)
        if strong is None or weak is None:
            raise MaxAttemptsExceeded(
                f"pool has no pair meeting T1={strategy.t1}, T2={strategy.t2}")
        return order_users([strong, weak], ordering)

    raise ValueError(f"{STRATEGY_NAMES.get(type(strategy), strategy)} cannot "
                     "select from a fixed pool")
