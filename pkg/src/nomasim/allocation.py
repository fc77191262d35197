"""Closed-form message power allocation for an ordered NOMA cluster.

Three modes: minimum power meeting every user's QoS, sum-rate maximization
that anchors the minimum QoS power on the weaker messages and hands the rest
to the strongest user, and fixed (channel-independent) fractions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover - annotations only
    from .clustering import Cluster
    from .sic import QoSTargets

# Slack for the budget-feasibility comparison; closed forms are double
# precision so anything beyond a few ulps is a genuine violation.
FEASIBILITY_SLACK = 1e-12


class AllocationMode(str, Enum):
    SUM_RATE_WEAK_QOS = "sum_rate_weak_qos"
    MIN_POWER_QOS = "min_power_qos"
    FIXED = "fixed"


@dataclass(frozen=True)
class PowerAllocation:
    """Per-message power levels; message k belongs to user k (strongest first)."""

    powers: tuple[float, ...]
    budget: float
    mode: AllocationMode
    feasible: bool

    @property
    def total(self) -> float:
        return math.fsum(self.powers)


def _noise_to_signal(cluster: "Cluster", instantaneous_csi: bool) -> list[float]:
    """Per-user W/G, the power scale at which that user's SINR reaches one."""
    if instantaneous_csi:
        return [u.interference_plus_noise / u.serving_gain for u in cluster.users]
    return [u.mean_interference_plus_noise / u.mean_gain for u in cluster.users]


def min_power_qos(cluster: "Cluster", qos: "QoSTargets", budget: float, *,
                  instantaneous_csi: bool = True) -> PowerAllocation:
    """Componentwise-minimal powers so every user i <= k decodes message k.

    With beta_k = max_{i <= k} W_i/G_i the recursion is
    P_1 = theta_1 * beta_1 and P_k = theta_k * (sum_{j<k} P_j + beta_k).
    A zero threshold yields exactly zero power for that message.
    """
    thetas = qos.theta
    n = len(cluster.users)
    if len(thetas) != n:
        raise ValueError(f"need {n} thresholds, got {len(thetas)}")
    if any(t < 0.0 for t in thetas):
        raise ValueError("QoS thresholds must be >= 0")
    w = _noise_to_signal(cluster, instantaneous_csi)
    powers: list[float] = []
    running = 0.0
    beta = 0.0
    for k in range(n):
        beta = max(beta, w[k])
        pk = thetas[k] * (running + beta)
        powers.append(pk)
        running += pk
    feasible = math.fsum(powers) <= budget + FEASIBILITY_SLACK
    return PowerAllocation(tuple(powers), budget, AllocationMode.MIN_POWER_QOS, feasible)


def sumrate_max_weak_qos(cluster: "Cluster", qos: "QoSTargets", budget: float, *,
                         robust: bool = False,
                         instantaneous_csi: bool = True) -> PowerAllocation:
    """Spend the whole budget: QoS-minimal power for messages 2..N, the rest
    to the strongest user's message.

    Weak-anchored form (default): message k is sized against its own user's
    W_k/G_k, per-message constraint P_k = theta_k * (sum_{j<k} P_j + w_k)
    under sum P = budget, so the weak user's constraint is tight.  The robust
    variant sizes against beta_k = max_{i<=k} W_i/G_i instead, which makes
    every stronger user's cancellation of message k succeed by construction.

    Infeasible instances (message powers exceeding the budget) are returned
    unclamped with ``feasible=False``.
    """
    thetas = qos.theta
    n = len(cluster.users)
    if len(thetas) != n:
        raise ValueError(f"need {n} thresholds, got {len(thetas)}")
    if any(t <= 0.0 for t in thetas[1:]):
        raise ValueError("QoS thresholds for messages 2..N must be > 0")
    w = _noise_to_signal(cluster, instantaneous_csi)
    anchors = w if not robust else [max(w[: k + 1]) for k in range(n)]

    # Solve backward: P_k (1 + theta_k) = theta_k (budget - sum_{j>k} P_j + a_k).
    powers = [0.0] * n
    tail = 0.0
    for k in range(n - 1, 0, -1):
        pk = thetas[k] * (budget - tail + anchors[k]) / (1.0 + thetas[k])
        powers[k] = pk
        tail += pk
    powers[0] = budget - math.fsum(powers[1:])

    # Land sum(P) exactly on the budget (full budget spent when feasible).
    # Round-to-even can strand the sum one ulp off for either choice of the
    # top power; shifting the weakest anchor by an ulp breaks that tie.
    for attempt in range(8):
        resid = budget - math.fsum(powers)
        if resid == 0.0:
            break
        if attempt < 2:
            powers[0] += resid
        else:
            powers[-1] = math.nextafter(powers[-1], powers[-1] + resid)
            powers[0] = budget - math.fsum(powers[1:])

    feasible = all(p >= 0.0 for p in powers)
    return PowerAllocation(tuple(powers), budget, AllocationMode.SUM_RATE_WEAK_QOS, feasible)


def fixed_fractions(fractions: Sequence[float], budget: float) -> PowerAllocation:
    """Channel-independent allocation: P_k = fraction_k * budget."""
    fr = [float(f) for f in fractions]
    if any(f < 0.0 for f in fr):
        raise ValueError("fractions must be >= 0")
    if math.fsum(fr) > 1.0 + FEASIBILITY_SLACK:
        raise ValueError(f"fractions sum to {math.fsum(fr)}, must be <= 1")
    powers = tuple(f * budget for f in fr)
    return PowerAllocation(powers, budget, AllocationMode.FIXED, True)
