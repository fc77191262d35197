"""Successive interference cancellation for a downlink NOMA cluster.

User i (strongest = index 0) decodes the messages of every weaker user in
order, weakest first, cancelling each decoded message; the messages of
stronger users are treated as noise throughout.  Decoding message k therefore
requires having decoded all messages k' > k first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .allocation import AllocationMode, PowerAllocation
from .clustering import Cluster

# Tight-by-construction allocations sit exactly on their SINR targets; the
# threshold comparison carries a relative guard so the design point decodes
# despite rounding in the SINR evaluation path.
THRESHOLD_GUARD = 1e-12


@dataclass(frozen=True)
class QoSTargets:
    """Per-message decoding thresholds; message k belongs to user k.

    A threshold of zero means the message is rate-adaptive / unconstrained
    (any non-negative SINR decodes it).
    """

    theta: tuple[float, ...]

    def __post_init__(self):
        if any(not (t >= 0.0 and math.isfinite(t)) for t in self.theta):
            raise ValueError(f"thresholds must be finite and >= 0, got {self.theta}")


@dataclass(frozen=True)
class DecodingOutcome:
    """Per-user decode table, coverage flags and achieved rates (nats)."""

    decode_success: np.ndarray   # (N, N) bool, entry (i, k) defined for k >= i
    covered: np.ndarray          # (N,) bool, covered[i] = decode_success[i, i]
    achieved_rate: np.ndarray    # (N,) float, nats per channel use


def sinr_of(cluster: Cluster, allocation: PowerAllocation, i: int, k: int) -> float:
    """SINR at user i for message k (0-based, k >= i).

    Messages weaker than k are already cancelled at this point of the chain;
    messages j < k remain as intracell interference.
    """
    n = len(cluster.users)
    if not (0 <= i <= k < n):
        raise IndexError(f"need 0 <= i <= k < {n}, got i={i}, k={k}")
    user = cluster.users[i]
    g = user.serving_gain
    intra = sum(allocation.powers[:k])
    return allocation.powers[k] * g / (intra * g + user.interference_plus_noise)


def decode_cluster(cluster: Cluster, allocation: PowerAllocation,
                   qos: QoSTargets, mode: AllocationMode) -> DecodingOutcome:
    """Run the full SuIC chain for every user.

    User i processes messages k = N-1 down to i; message k succeeds iff all
    later-chain messages k' > k succeeded and its SINR meets theta_k.  Covered
    users earn their fixed rate ln(1 + theta_i); in sum-rate mode the
    strongest user's own message is instead rate-adaptive and earns
    ln(1 + SINR) once it has decoded (and cancelled) everything below it.
    """
    n = len(cluster.users)
    powers = allocation.powers
    if len(powers) != n or len(qos.theta) != n:
        raise ValueError("allocation and QoS must be sized to the cluster")
    prefix = [0.0] * n  # intracell interference power below each message
    acc = 0.0
    for k in range(n):
        prefix[k] = acc
        acc += powers[k]
    table = np.zeros((n, n), dtype=bool)
    covered = np.zeros(n, dtype=bool)
    rates = np.zeros(n, dtype=float)
    for i, user in enumerate(cluster.users):
        g = user.serving_gain
        w = user.interference_plus_noise
        chain_ok = True
        for k in range(n - 1, i - 1, -1):
            sinr = powers[k] * g / (prefix[k] * g + w)
            ok = chain_ok and _meets(sinr, qos.theta[k])
            table[i, k] = ok
            chain_ok = ok
        covered[i] = table[i, i]
        if mode is AllocationMode.SUM_RATE_WEAK_QOS and i == 0:
            if bool(table[0, 1:].all()):
                rates[0] = math.log1p(powers[0] * g / w)
        elif covered[i]:
            rates[i] = math.log1p(qos.theta[i])
    return DecodingOutcome(table, covered, rates)


def _meets(sinr: float, theta: float) -> bool:
    return sinr >= theta * (1.0 - THRESHOLD_GUARD)


def necessary_condition(allocation: PowerAllocation, qos: QoSTargets) -> bool:
    """Power-allocation inequality whose violation guarantees outage.

    Message k's SINR at any user is strictly below P_k / sum_{j<k} P_j for
    positive interference-plus-noise, so P_k > theta_k * sum_{j<k} P_j must
    hold for every k >= 2 or message k can never be decoded.
    """
    powers = allocation.powers
    running = powers[0]
    for k in range(1, len(powers)):
        if not powers[k] > qos.theta[k] * running:
            return False
        running += powers[k]
    return True
