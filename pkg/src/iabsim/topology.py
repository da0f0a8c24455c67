"""Multi-hop tree formation over the feasible-link graph.

Two association schemes are supported. Minimum-hops attaches every node at
the smallest possible depth below the donor (ties go to the stronger
candidate parent). Maximum-RSRP picks, per node, the route whose weakest
link is strongest (widest path), computed with a Dijkstra-style max-min
relaxation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field


class DegenerateDeploymentError(RuntimeError):
    """The donor has no feasible link at all."""


@dataclass
class FeasibleLinkSet:
    """Directed parent->child candidates annotated with downstream RSRP."""

    rsrp: dict                      # (parent_id, child_id) -> dBm
    children_of: dict               # parent_id -> sorted list of child ids
    parents_of: dict                # child_id -> sorted list of parent ids

    def has_link(self, parent: int, child: int) -> bool:
        return (parent, child) in self.rsrp


def build_feasible_links(bs_ids, ue_ids, donor_id: int, rsrp_fn,
                         rsrp_threshold: float) -> FeasibleLinkSet:
    """Keep exactly the admissible directed pairs meeting the RSRP gate.

    Admissible parents are base stations; children are other base stations
    or UEs. The annotation is always the downstream (parent transmits)
    direction. Raises if the donor ends up isolated.
    """
    rsrp = {}
    children_of = {b: [] for b in bs_ids}
    parents_of = {}
    for parent in bs_ids:
        for child in list(bs_ids) + list(ue_ids):
            if child == parent:
                continue
            value = rsrp_fn(parent, child)
            if value is None or value < rsrp_threshold:
                continue
            rsrp[(parent, child)] = value
            children_of[parent].append(child)
            parents_of.setdefault(child, []).append(parent)
    if not children_of.get(donor_id):
        raise DegenerateDeploymentError(
            "degenerate deployment: donor has no feasible links")
    for lst in children_of.values():
        lst.sort()
    for lst in parents_of.values():
        lst.sort()
    return FeasibleLinkSet(rsrp=rsrp, children_of=children_of,
                           parents_of=parents_of)


@dataclass
class Topology:
    donor: int
    parent: dict                 # node -> parent (donor absent)
    depth: dict                  # node -> hops from donor
    children: dict               # node -> list of attached children
    bottleneck: dict             # node -> min RSRP along its route
    link_rsrp: dict              # (parent, child) -> dBm for tree links
    unattached: list = field(default_factory=list)

    def attached(self, node: int) -> bool:
        return node in self.depth


@dataclass
class Route:
    nodes: list          # donor ... terminal
    bottleneck_rsrp: float


def _attach(topo: Topology, links: FeasibleLinkSet, child: int, parent: int,
            depth: int, bottleneck: float) -> None:
    topo.parent[child] = parent
    topo.depth[child] = depth
    topo.children.setdefault(parent, []).append(child)
    topo.children.setdefault(child, [])
    topo.bottleneck[child] = bottleneck
    topo.link_rsrp[(parent, child)] = links.rsrp[(parent, child)]


def form_topology_min_hops(bs_ids, ue_ids, donor_id: int,
                           links: FeasibleLinkSet) -> Topology:
    """BFS tree: every node attaches at minimal depth.

    Equal-depth parent ties break toward higher RSRP, then lower parent id.
    """
    topo = Topology(donor=donor_id, parent={}, depth={donor_id: 0},
                    children={donor_id: []}, bottleneck={donor_id: math.inf},
                    link_rsrp={})
    relay_ids = [b for b in bs_ids if b != donor_id]
    frontier = [donor_id]
    depth = 0
    pending = set(relay_ids) | set(ue_ids)
    while frontier and pending:
        depth += 1
        adopted = []
        for child in sorted(pending):
            best = None
            for parent in frontier:
                if not links.has_link(parent, child):
                    continue
                key = (-links.rsrp[(parent, child)], parent)
                if best is None or key < best[0]:
                    best = (key, parent)
            if best is not None:
                parent = best[1]
                bn = min(topo.bottleneck[parent], links.rsrp[(parent, child)])
                _attach(topo, links, child, parent, depth, bn)
                adopted.append(child)
        for child in adopted:
            pending.discard(child)
        # only base stations can relay further down
        frontier = [c for c in adopted if c in links.children_of]
    topo.unattached = sorted(pending)
    return topo


def form_topology_max_rsrp(bs_ids, ue_ids, donor_id: int,
                           links: FeasibleLinkSet) -> Topology:
    """Widest-path tree: maximize the route's minimum RSRP per node.

    Ties break by fewer hops, then lower parent id. The relaxation runs over
    the base-station skeleton; UEs attach as leaves by the same rule.
    """
    width = {donor_id: math.inf}
    hops = {donor_id: 0}
    parent = {}
    settled = set()
    # heap entries: (-width, hops, parent_id or -1, node); lazy deletion
    heap = [(-math.inf, 0, -1, donor_id)]
    while heap:
        neg_w, h, _via, node = heapq.heappop(heap)
        if node in settled:
            continue
        settled.add(node)
        w, h = width[node], hops[node]
        for child in links.children_of.get(node, ()):
            if child not in links.children_of:
                continue  # UEs attach after the skeleton is settled
            cand_w = min(w, links.rsrp[(node, child)])
            cand = (cand_w, -(h + 1), -node)
            cur = (width.get(child, -math.inf), -hops.get(child, math.inf),
                   -parent.get(child, math.inf))
            if cand > cur:
                width[child] = cand_w
                hops[child] = h + 1
                parent[child] = node
                heapq.heappush(heap, (-cand_w, h + 1, node, child))

    topo = Topology(donor=donor_id, parent={}, depth={donor_id: 0},
                    children={donor_id: []}, bottleneck={donor_id: math.inf},
                    link_rsrp={})
    # attach relays in depth order so parents exist before children
    for node in sorted(parent, key=lambda n: (hops[n], n)):
        _attach(topo, links, node, parent[node], hops[node], width[node])

    for ue in sorted(ue_ids):
        best = None
        for p in links.parents_of.get(ue, ()):
            if p not in topo.depth:
                continue
            w = min(width.get(p, -math.inf) if p != donor_id else math.inf,
                    links.rsrp[(p, ue)])
            key = (-w, topo.depth[p] + 1, p)
            if best is None or key < best[0]:
                best = (key, p, w)
        if best is None:
            topo.unattached.append(ue)
        else:
            _, p, w = best
            _attach(topo, links, ue, p, topo.depth[p] + 1, w)

    topo.unattached.extend(b for b in links.children_of
                           if b != donor_id and b not in topo.depth)
    topo.unattached.sort()
    return topo


def route_to_donor(topo: Topology, node: int) -> Route:
    """Walk parent pointers donor-ward; raises on detached nodes."""
    if not topo.attached(node):
        raise ValueError(f"node {node} is not attached to the topology")
    chain = [node]
    bottleneck = math.inf
    limit = len(topo.depth) + 1
    while chain[-1] != topo.donor:
        cur = chain[-1]
        parent = topo.parent[cur]
        bottleneck = min(bottleneck, topo.link_rsrp[(parent, cur)])
        chain.append(parent)
        if len(chain) > limit:
            raise RuntimeError("parent pointers do not terminate at the donor")
    chain.reverse()
    return Route(nodes=chain, bottleneck_rsrp=bottleneck)


def dump_topology_csv(topo: Topology, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "parent", "depth", "bottleneck_rsrp_dbm"])
        for node in sorted(topo.depth):
            parent = topo.parent.get(node, "")
            bn = topo.bottleneck[node]
            writer.writerow([node, parent, topo.depth[node],
                             "" if math.isinf(bn) else f"{bn:.3f}"])
