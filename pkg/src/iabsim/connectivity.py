"""Per-UE serving-set maintenance under the four connectivity modes.

Candidates are the feasible serving base stations, ranked by the active
association scheme: maximum-RSRP ranks by the route's bottleneck RSRP,
minimum-hops by route length with RSRP as tie-break. Fast switching (FS)
leaves a blocked serving link for the best unblocked candidate and never
switches back on its own; regular scanning re-selects the best
blockage-aware candidate on a fixed period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

SC = "sc"
MC = "mc"
SC_FS = "sc_fs"
SC_FS_SCAN = "sc_fs_scan"

REASON_BLOCKAGE = "blockage"
REASON_SCAN = "scan"


@dataclass
class Candidate:
    node: int
    hops: int                  # route length donor -> ue via this node
    bottleneck_rsrp: float     # min RSRP on that route, unblocked channel
    access_rsrp: float         # serving link RSRP, unblocked channel
    blocked: bool = False
    bottleneck_now: float = None   # blockage-aware values for scan ranking
    access_rsrp_now: float = None

    def __post_init__(self):
        if self.bottleneck_now is None:
            self.bottleneck_now = self.bottleneck_rsrp
        if self.access_rsrp_now is None:
            self.access_rsrp_now = self.access_rsrp


def rank_key(cand: Candidate, scheme: str, blocked_aware: bool = False):
    if blocked_aware:
        prefix = (cand.blocked,)
        bottleneck, access = cand.bottleneck_now, cand.access_rsrp_now
    else:
        prefix = ()
        bottleneck, access = cand.bottleneck_rsrp, cand.access_rsrp
    if scheme == "max_rsrp":
        return prefix + (-bottleneck, cand.hops, cand.node)
    return prefix + (cand.hops, -access, cand.node)


def rank_candidates(cands, scheme: str, blocked_aware: bool = False) -> list:
    return sorted(cands, key=lambda c: rank_key(c, scheme, blocked_aware))


@dataclass
class SwitchEvent:
    time: float
    ue: int
    old: int
    new: int
    reason: str


@dataclass
class ServingSet:
    ue: int
    mode: str
    candidates: list = field(default_factory=list)  # best-first
    active: list = field(default_factory=list)      # node ids, primary first
    last_scan: float = 0.0
    outage: bool = False

    def candidate_nodes(self) -> list:
        return [c.node for c in self.candidates]


def build_candidates(ue: int, cands, scheme: str) -> list:
    """Rank the feasible serving nodes for one UE (unblocked RSRP)."""
    return rank_candidates(cands, scheme)


def select_serving(sset: ServingSet, mc_degree: int = 2) -> list:
    """Top-1 for single-connectivity modes, top-mc_degree for MC."""
    if not sset.candidates:
        sset.active = []
        sset.outage = True
        return sset.active
    sset.outage = False
    want = mc_degree if sset.mode == MC else 1
    sset.active = [c.node for c in sset.candidates[:want]]
    return sset.active


def refresh_on_epoch(sset: ServingSet, ranked, mc_degree: int = 2) -> None:
    """Install fresh candidates; FS modes keep their serving node if possible.

    Fast switching forbids unforced re-switching, so a still-feasible active
    node survives the refresh; all other modes re-select by rank.
    """
    sset.candidates = list(ranked)
    nodes = sset.candidate_nodes()
    if (sset.mode in (SC_FS, SC_FS_SCAN) and sset.active
            and sset.active[0] in nodes):
        sset.outage = False
        return
    select_serving(sset, mc_degree)


def on_blockage_change(sset: ServingSet, now: float) -> SwitchEvent | None:
    """React to a blockage transition on the UE's candidate links.

    Only the FS modes react, and only when the active link itself is
    blocked: service moves to the best currently-unblocked candidate. With
    every candidate blocked the UE stays put (degraded, not outage).
    """
    if sset.mode not in (SC_FS, SC_FS_SCAN) or not sset.active:
        return None
    by_node = {c.node: c for c in sset.candidates}
    cur = by_node.get(sset.active[0])
    if cur is None or not cur.blocked:
        return None
    for cand in sset.candidates:
        if not cand.blocked:
            old = sset.active[0]
            sset.active = [cand.node]
            return SwitchEvent(now, sset.ue, old, cand.node, REASON_BLOCKAGE)
    return None


def periodic_scan(sset: ServingSet, now: float, scan_period: float,
                  scheme: str) -> SwitchEvent | None:
    """Re-select the best blockage-aware candidate every scan period."""
    if sset.mode != SC_FS_SCAN:
        return None
    if now - sset.last_scan < scan_period:
        return None
    sset.last_scan = now
    if not sset.candidates:
        return None
    ranked = rank_candidates(sset.candidates, scheme, blocked_aware=True)
    sset.candidates = ranked
    best = ranked[0].node
    if sset.active and sset.active[0] == best:
        return None
    old = sset.active[0] if sset.active else -1
    sset.active = [best]
    return SwitchEvent(now, sset.ue, old, best, REASON_SCAN)
