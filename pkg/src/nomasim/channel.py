"""Link gains, Rayleigh fading and aggregate intercell interference.

Every link carries an independent unit-mean exponential power fade (Rayleigh
amplitude) on top of power-law path loss.  Interference is summed over all
interferers in the window at full load.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import NetworkRealization


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants shared by every link in a trial."""

    path_loss_exponent: float = 4.0
    noise_power: float = 0.0
    interferer_power: float = 1.0

    def __post_init__(self):
        if not self.path_loss_exponent > 2.0:
            raise ValueError("path_loss_exponent must exceed 2 for finite "
                             f"aggregate interference, got {self.path_loss_exponent}")
        if self.noise_power < 0.0:
            raise ValueError(f"noise_power must be >= 0, got {self.noise_power}")
        if not self.interferer_power > 0.0:
            raise ValueError(f"interferer_power must be > 0, got {self.interferer_power}")


@dataclass(frozen=True)
class UserState:
    """A user's channel snapshot for one trial.

    ``serving_gain`` is the faded serving-link gain h * r**-eta and
    ``interference_plus_noise`` the aggregate W = sigma^2 + sum over
    interferers of P_I * h_x * d_x**-eta.  The ``mean_*`` fields carry the
    fading-averaged counterparts (unit-mean fades replaced by 1), used for
    distance-only channel knowledge and for mean-quality user ordering.
    """

    position: tuple[float, float]
    link_distance: float
    serving_fading: float
    serving_gain: float
    interference_plus_noise: float
    mean_gain: float
    mean_interference_plus_noise: float


def link_gain(distance: float, fading: float, eta: float) -> float:
    """Faded power-law link gain ``fading * distance**-eta``.

    Integer exponents are evaluated by repeated multiplication, which (unlike
    the libm pow path) scales by exactly ``2**-eta`` when the distance
    doubles.
    """
    if not distance > 0.0:
        raise ValueError(f"distance must be > 0, got {distance}")
    if not fading > 0.0:
        raise ValueError(f"fading must be > 0, got {fading}")
    k = int(eta)
    if k == eta and 0 < k <= 8:
        p = distance
        for _ in range(k - 1):
            p *= distance
        return fading / p
    return fading * distance ** -eta


def _path_gains(px: float, py: float, realization: NetworkRealization,
                eta: float) -> np.ndarray:
    """Unfaded path gains d**-eta from every interferer to (px, py)."""
    d2 = (realization.xs - px) ** 2 + (realization.ys - py) ** 2
    if d2.min() == 0.0:
        raise ValueError("position coincides with an interferer")
    if eta == 4.0:
        return 1.0 / (d2 * d2)
    if eta == 2.0:
        return 1.0 / d2
    return d2 ** (-0.5 * eta)


def aggregate_interference(position, realization: NetworkRealization,
                           params: ChannelParams, rng: np.random.Generator,
                           fading: Optional[np.ndarray] = None) -> float:
    """Aggregate intercell interference plus noise at a position.

    Each interferer link gets a fresh independent unit-mean exponential fade
    unless an explicit ``fading`` array is supplied (test hook / frozen-fade
    studies).  All interferers transmit at full load.
    """
    g = _path_gains(float(position[0]), float(position[1]), realization,
                    params.path_loss_exponent)
    if fading is None:
        h = rng.exponential(size=g.shape[0])
    else:
        h = np.broadcast_to(np.asarray(fading, dtype=float), g.shape)
    return params.noise_power + params.interferer_power * float(np.dot(h, g))


def make_user_state(position, realization: NetworkRealization,
                    params: ChannelParams, rng: np.random.Generator,
                    serving_fading: Optional[float] = None,
                    interferer_fading: Optional[np.ndarray] = None) -> UserState:
    """Draw fading and assemble the full channel state for one user.

    The caller guarantees the position lies in the serving cell.  Draw order
    is fixed (serving fade first, then interferer fades) so trial streams are
    reproducible.  The optional fading arguments freeze fades for tests.
    """
    px, py = float(position[0]), float(position[1])
    r = math.hypot(px, py)
    if serving_fading is None:
        h = float(rng.exponential())
    else:
        h = float(serving_fading)
    g = _path_gains(px, py, realization, params.path_loss_exponent)
    if interferer_fading is None:
        hx = rng.exponential(size=g.shape[0])
    else:
        hx = np.broadcast_to(np.asarray(interferer_fading, dtype=float), g.shape)
    mean_gain = link_gain(r, 1.0, params.path_loss_exponent)
    mean_w = params.noise_power + params.interferer_power * float(g.sum())
    w = params.noise_power + params.interferer_power * float((hx * g).sum())
    return UserState(
        position=(px, py),
        link_distance=r,
        serving_fading=h,
        serving_gain=h * mean_gain,
        interference_plus_noise=w,
        mean_gain=mean_gain,
        mean_interference_plus_noise=mean_w,
    )


def make_user_states(positions, realization: NetworkRealization,
                     params: ChannelParams,
                     rng: np.random.Generator) -> list[UserState]:
    """Batched :func:`make_user_state` for several users of one trial.

    One broadcast pass over the interferer set serves every user, which
    matters in the Monte Carlo hot loop.  Per-user values match the scalar
    path bitwise (elementwise ops and row-wise pairwise sums agree); only the
    fading draw order differs: all serving fades first, then one interferer
    fade block per user.
    """
    pts = [(float(p[0]), float(p[1])) for p in positions]
    m = len(pts)
    eta = params.path_loss_exponent
    h_serv = rng.exponential(size=m)
    px = np.array([p[0] for p in pts])
    py = np.array([p[1] for p in pts])
    d2 = ((realization.xs[None, :] - px[:, None]) ** 2
          + (realization.ys[None, :] - py[:, None]) ** 2)
    if d2.min() == 0.0:
        raise ValueError("position coincides with an interferer")
    if eta == 4.0:
        g = 1.0 / (d2 * d2)
    elif eta == 2.0:
        g = 1.0 / d2
    else:
        g = d2 ** (-0.5 * eta)
    hx = rng.exponential(size=g.shape)
    mean_w = params.noise_power + params.interferer_power * g.sum(axis=1)
    w = params.noise_power + params.interferer_power * (hx * g).sum(axis=1)
    states = []
    for i, (x, y) in enumerate(pts):
        r = math.hypot(x, y)
        mean_gain = link_gain(r, 1.0, eta)
        states.append(UserState(
            position=(x, y),
            link_distance=r,
            serving_fading=float(h_serv[i]),
            serving_gain=float(h_serv[i]) * mean_gain,
            interference_plus_noise=float(w[i]),
            mean_gain=mean_gain,
            mean_interference_plus_noise=float(mean_w[i]),
        ))
    return states
