"""Human-body link blockage as an alternating renewal process.

Each access link (any link with a UE endpoint) owns one process that
alternates between Blocked and Unblocked states with exponentially
distributed sojourns. The stationary blocked probability follows from the
blocker field geometry: density, blocker radius, and the LOS-zone length
set by the endpoint heights.
"""

from __future__ import annotations

import math

UNBLOCKED = 0
BLOCKED = 1


def blockage_zone_length(d2d: float, h_tx: float, h_rx: float,
                         h_blocker: float, blocker_radius: float) -> float:
    """Ground length of the LOS segment a blocker of height h_blocker can cut.

    The zone never shrinks below one blocker radius: a blocker standing at
    the receiver always intersects the ray.
    """
    if h_tx <= h_rx:
        raise ValueError("transmitter must be above receiver for blockage zone")
    zone = d2d * (h_blocker - h_rx) / (h_tx - h_rx)
    return max(zone, blocker_radius)


def stationary_blockage_probability(d2d: float, h_tx: float, h_rx: float,
                                    h_blocker: float, blocker_radius: float,
                                    blocker_density: float) -> float:
    """Probability the link is blocked under a Poisson field of blockers."""
    if blocker_density < 0:
        raise ValueError("blocker_density >= 0 required")
    if blocker_density == 0.0:
        return 0.0
    zone = blockage_zone_length(d2d, h_tx, h_rx, h_blocker, blocker_radius)
    return 1.0 - math.exp(-2.0 * blocker_density * blocker_radius * zone)


def mean_blocked_duration(blocker_radius: float, blocker_speed: float) -> float:
    """Average time a moving blocker shadows the ray: crossing its diameter."""
    if blocker_speed <= 0:
        raise ValueError("blocker_speed > 0 required")
    return 2.0 * blocker_radius / blocker_speed


class BlockageProcess:
    """Alternating Blocked/Unblocked renewal process for one link."""

    __slots__ = ("state", "next_transition", "p_stationary", "mean_blocked",
                 "mean_unblocked", "_now")

    def __init__(self, p_stationary: float, mean_blocked: float, rng, now: float = 0.0):
        if not 0.0 <= p_stationary <= 1.0:
            raise ValueError("p_stationary must be in [0, 1]")
        if mean_blocked <= 0:
            raise ValueError("mean_blocked > 0 required")
        self.p_stationary = p_stationary
        self.mean_blocked = mean_blocked
        self.mean_unblocked = self._unblocked_mean()
        self._now = now
        self.state = sample_initial_state(p_stationary, rng)
        self.next_transition = now + self._draw_sojourn(rng)

    def _unblocked_mean(self) -> float:
        p = self.p_stationary
        if p <= 0.0:
            return math.inf
        return self.mean_blocked * (1.0 - p) / p

    def update_parameters(self, p_stationary: float, mean_blocked: float) -> None:
        """Retarget the process; the sojourn in progress is left untouched."""
        self.p_stationary = p_stationary
        self.mean_blocked = mean_blocked
        self.mean_unblocked = self._unblocked_mean()

    def _draw_sojourn(self, rng) -> float:
        mean = self.mean_blocked if self.state == BLOCKED else self.mean_unblocked
        if math.isinf(mean):
            return math.inf
        # exponential draws are almost surely positive; guard the boundary
        d = rng.exponential(mean)
        return d if d > 0.0 else mean * 1e-12

    def advance(self, now: float, rng) -> int:
        """Advance to `now`, flipping through any due transitions."""
        if now < self._now:
            raise ValueError("time must be non-decreasing")
        self._now = now
        while now >= self.next_transition:
            self.state = BLOCKED if self.state == UNBLOCKED else UNBLOCKED
            self.next_transition += self._draw_sojourn(rng)
        return self.state

    @property
    def blocked(self) -> bool:
        return self.state == BLOCKED


def sample_initial_state(p: float, rng) -> int:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    return BLOCKED if rng.random() < p else UNBLOCKED
