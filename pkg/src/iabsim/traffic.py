"""FTP-model-3 traffic: Poisson session arrivals and per-hop byte flow.

A session transfers one fixed-size file in one direction over one or two
legs (multi-connectivity). Each leg is an ordered list of links from the
source end to the UE (downlink) or from the UE to the donor (uplink), with
a cumulative byte counter per hop. Bytes can cross hop k only after they
crossed hop k-1, and both legs draw from one shared pool so no byte is
ever delivered twice.
"""

from __future__ import annotations

import heapq
import math

from .mac import DL, UL


class Leg:
    """One route instance of a session: per-hop cumulative bytes crossed."""

    __slots__ = ("nodes", "links", "cum")

    def __init__(self, nodes):
        # nodes run source-first: DL donor..ue, UL ue..donor
        self.nodes = tuple(nodes)
        self.links = tuple(zip(nodes[:-1], nodes[1:]))
        self.cum = [0] * len(self.links)

    @property
    def claimed(self) -> int:
        return self.cum[0]

    @property
    def delivered(self) -> int:
        return self.cum[-1]

    def in_flight(self) -> int:
        return self.cum[0] - self.cum[-1]

    def resident_bytes(self, hop: int) -> int:
        """Bytes sitting at the node between hop-1 and hop (store-and-forward)."""
        return self.cum[hop - 1] - self.cum[hop]


class Session:
    __slots__ = ("id", "ue", "direction", "size", "arrival", "completion",
                 "legs", "delivered_total", "dropped_bytes")

    def __init__(self, sid: int, ue: int, direction: int, size: int,
                 arrival: float):
        if size <= 0:
            raise ValueError("size > 0 required")
        self.id = sid
        self.ue = ue
        self.direction = direction
        self.size = size
        self.arrival = arrival
        self.completion = None
        self.legs = []
        self.delivered_total = 0
        self.dropped_bytes = 0

    @property
    def remaining(self) -> int:
        return self.size - self.delivered_total

    @property
    def completed(self) -> bool:
        return self.completion is not None

    def unclaimed(self) -> int:
        return self.remaining - sum(leg.in_flight() for leg in self.legs)

    def serveable(self, leg_idx: int, hop: int) -> int:
        """Bytes hop `hop` of leg `leg_idx` could move right now."""
        leg = self.legs[leg_idx]
        if hop == 0:
            avail = self.unclaimed()
        else:
            avail = leg.cum[hop - 1] - leg.cum[hop]
        return avail

    def serve_bytes(self, leg_idx: int, hop: int, nbytes: int, now_end: float) -> int:
        """Move up to nbytes across one hop; returns the bytes moved.

        Clips to what the upstream hop has delivered (no byte creation) and
        marks completion when the final hop reaches the file size.
        """
        if nbytes < 0:
            raise ValueError("bytes served must be >= 0")
        moved = min(nbytes, self.serveable(leg_idx, hop))
        if moved <= 0:
            return 0
        leg = self.legs[leg_idx]
        leg.cum[hop] += moved
        if hop == len(leg.links) - 1:
            self.delivered_total += moved
            if self.delivered_total >= self.size and self.completion is None:
                self.completion = now_end
        return moved

    def rebind_legs(self, routes) -> int:
        """Replace the leg routes; upstream in-flight bytes are dropped.

        Returns the dropped byte count. Bytes already delivered stay
        delivered; the dropped ones return to the unclaimed pool and will be
        re-sent over the new routes.
        """
        dropped = sum(leg.in_flight() for leg in self.legs)
        self.dropped_bytes += dropped
        self.legs = [Leg(nodes) for nodes in routes]
        return dropped


def session_throughput(session: Session, min_duration: float) -> float:
    """Delivered bits over the transfer time; pending sessions are undefined."""
    if not session.completed:
        raise ValueError("session is still pending")
    duration = max(session.completion - session.arrival, min_duration)
    return session.size * 8.0 / duration


class ArrivalProcess:
    """Per-UE, per-direction Poisson session arrivals via exponential timers."""

    def __init__(self, ue_ids, rate_dl: float, rate_ul: float, rng):
        if rate_dl < 0 or rate_ul < 0:
            raise ValueError("rates must be >= 0")
        self._rng = rng
        self._rates = {DL: rate_dl, UL: rate_ul}
        self._heap = []
        for ue in sorted(ue_ids):
            for direction in (DL, UL):
                rate = self._rates[direction]
                if rate > 0:
                    t = rng.exponential(1.0 / rate)
                    heapq.heappush(self._heap, (t, ue, direction))

    def pop_due(self, now: float) -> list:
        """All (time, ue, direction) arrivals with time <= now, in order."""
        due = []
        heap = self._heap
        while heap and heap[0][0] <= now:
            t, ue, direction = heapq.heappop(heap)
            due.append((t, ue, direction))
            nxt = t + self._rng.exponential(1.0 / self._rates[direction])
            heapq.heappush(heap, (nxt, ue, direction))
        return due

    def next_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf
