"""Slot-synchronous simulation loop and steady-state metrics collection.

One run owns all state and is strictly single-threaded: every slot it
advances mobility and blockage, re-forms the topology on its period,
lets the connectivity layer react, updates slot formats on frame
boundaries, admits Poisson arrivals, schedules the slot, and converts the
granted symbol fractions into bytes moved along each session's route.
Identical (config, seed) pairs produce bit-identical reports.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import connectivity as conn
from . import mac
from . import radio
from . import topology as topof
from .blockage import BlockageProcess, mean_blocked_duration, stationary_blockage_probability
from .mac import DL, UL, SLOT_DURATION, SLOTS_PER_FRAME
from .scenario import (Config, UE as UE_KIND, generate_deployment,
                       redraw_directions, step_mobility, validate_config)
from .traffic import ArrivalProcess, Session, session_throughput

MOBILITY_TICK_SLOTS = 100      # 12.5 ms between UE position updates


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(key,)))


@dataclass
class MetricsReport:
    seed: int
    config: dict
    network_mean_throughput_bps: float | None
    per_ue: list
    completed_sessions: int
    pending_sessions: int
    completed_dl: int
    completed_ul: int
    switches_blockage: int
    switches_scan: int
    mean_queue_depth_bytes: float
    blocked_link_slots: int
    half_duplex_violations: int
    beam_fraction_violations: int
    bytes_delivered: int
    bytes_delivered_check: int
    dropped_inflight_bytes: int
    slot_format_mean_cul: float | None
    coverage_ues: int
    total_ues: int
    insufficient_data: bool
    warmup_excluded: bool
    duration_s: float
    slots: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def collect_metrics(records, ue_ids, warmup: float,
                    min_duration: float = SLOT_DURATION):
    """Per-UE mean of per-session throughputs over post-warmup completions."""
    per_ue_tp = {ue: [] for ue in ue_ids}
    for rec in records:
        if rec["arrival"] >= warmup:
            per_ue_tp[rec["ue"]].append(
                rec["size"] * 8.0 / max(rec["completion"] - rec["arrival"],
                                        min_duration))
    per_ue = []
    means = []
    for ue in sorted(ue_ids):
        tps = per_ue_tp[ue]
        mean = sum(tps) / len(tps) if tps else None
        per_ue.append({"ue": ue, "completed": len(tps),
                       "mean_throughput_bps": mean})
        if mean is not None:
            means.append(mean)
    network = sum(means) / len(means) if means else None
    return per_ue, network, len(means)


class Simulation:
    """One deterministic run of the slot-level simulator."""

    def __init__(self, cfg: Config):
        self.cfg = validate_config(cfg)
        self.scn = generate_deployment(cfg, cfg.seed)
        self.rng_mob = _stream(cfg.seed, 1)
        self.rng_chan = _stream(cfg.seed, 2)
        self.rng_blk = _stream(cfg.seed, 3)
        self.rng_tfc = _stream(cfg.seed, 4)

        nodes = self.scn.nodes
        self.bs_ids = [n.id for n in nodes if n.kind != UE_KIND]
        self.ue_ids = list(self.scn.ue_ids)
        self.ue_set = set(self.ue_ids)
        self.donor = 0
        self._heights = {n.id: n.height for n in nodes}
        self._power = {n.id: n.tx_power for n in nodes}
        self._nf = {n.id: n.noise_figure for n in nodes}
        self._gain = {n.id: radio.antenna_gain_db(n.array) for n in nodes}
        self._multi = {n.id: n.multi_beam for n in nodes}
        # admissible pairs: BS-BS and BS-UE, keyed (low id, high id)
        self._pairs = []
        for i, a in enumerate(self.bs_ids):
            for b in self.bs_ids[i + 1:]:
                self._pairs.append((a, b))
            for u in self.ue_ids:
                self._pairs.append((a, u))
        self._profile = {
            (a, b): radio.profile_for_heights(self._heights[a], self._heights[b])
            for a, b in self._pairs}
        self._noise_floor = {
            n.id: radio.noise_power_dbm(cfg.noise_psd, cfg.bandwidth,
                                        n.noise_figure) for n in nodes}

        # epoch products
        self._gpl = {}
        self._rsrp = {}            # (bs, other) -> association DL rsrp
        self._bpfs = {}            # (tx, rx) -> (bytes/slot unblocked, blocked)
        self._assoc_beams = {b: 1 for b in self.bs_ids}
        self.topo = None
        self._route_nodes = {}     # bs -> donor..bs tuple
        self._parity_bs = ([], [])
        self.ssets = {ue: conn.ServingSet(ue=ue, mode=cfg.connectivity_mode)
                      for ue in self.ue_ids}
        self.resume_time = {}

        # blockage
        self._blockage_on = cfg.blocker_density > 0
        self._procs = {}
        self._blocked = set()
        self._bheap = []

        # traffic
        self.arrivals = ArrivalProcess(self.ue_ids, cfg.session_rate_dl,
                                       cfg.session_rate_ul, self.rng_tfc)
        self.active_sessions = {}
        self.ue_sessions = {ue: [] for ue in self.ue_ids}
        self.node_children = {}    # (node, dir) -> {child: {(sid, leg): entry}}
        self._slot_cache = {}
        self._next_sid = 0

        # formats
        self._static_fmt = mac.slot_format_static()
        self.formats = {b: self._static_fmt for b in self.bs_ids}

        # counters
        self.records = []
        self.switch_events = []
        self.switches = {conn.REASON_BLOCKAGE: 0, conn.REASON_SCAN: 0}
        self.bytes_delivered = 0
        self.dropped_inflight = 0
        self.blocked_link_slots = 0
        self.beam_fraction_violations = 0
        self.queue_samples = []
        self._fmt_cul_sum = 0.0
        self._fmt_cul_n = 0
        self._now = 0.0
        # optional trace sinks (lists of rows) enabled by the CLI
        self.trace_alloc = None

    # ------------------------------------------------------------------
    # epoch: channel draws, budgets, topology, candidates, serving refresh

    def _draw_channels(self):
        cfg = self.cfg
        for pair in self._pairs:
            a, b = pair
            na, nb = self.scn.nodes[a], self.scn.nodes[b]
            geom = radio.link_geometry((na.x, na.y), na.height,
                                       (nb.x, nb.y), nb.height)
            profile = self._profile[pair]
            p_los = radio.los_probability(geom, profile)
            los = self.rng_chan.random() < p_los
            shadow = self.rng_chan.normal(0.0, radio.shadow_sigma_db(profile, los))
            h_hi, h_lo = max(na.height, nb.height), min(na.height, nb.height)
            pl = radio.path_loss_db(geom, profile, los, cfg.carrier_frequency,
                                    h_bs=h_hi, h_ut=h_lo)
            self._gpl[pair] = (self._gain[a] + self._gain[b] - pl - float(shadow),
                               geom.d2d)

    def _association_rsrp(self):
        rsrp = {}
        for pair in self._pairs:
            a, b = pair
            gpl = self._gpl[pair][0]
            rsrp[(a, b)] = (self._power[a]
                            - 10.0 * math.log10(self._assoc_beams[a]) + gpl)
            if b not in self.ue_set:
                rsrp[(b, a)] = (self._power[b]
                                - 10.0 * math.log10(self._assoc_beams[b]) + gpl)
        self._rsrp = rsrp

    def _beam_count(self, node: int) -> int:
        if not self._multi[node]:
            return 1
        kids = self.topo.children.get(node, ())
        return sum(1 for c in kids if c not in self.ue_set) + 1

    def _service_budgets(self):
        cfg = self.cfg
        bytes_scale = cfg.bandwidth * SLOT_DURATION / 8.0
        extra = cfg.blockage_extra_loss
        svc_beams = {b: self._beam_count(b) for b in self.bs_ids}
        parent_of = self.topo.parent
        bpfs = {}
        for pair in self._pairs:
            a, b = pair
            gpl = self._gpl[pair][0]
            is_ue = b in self.ue_set
            for tx, rx in ((a, b), (b, a)):
                # power splits across beams only when tx serves rx as a
                # parent; a child transmitting uplink keeps a single beam
                serving_dir = (tx in svc_beams
                               and (rx in self.ue_set or parent_of.get(rx) == tx))
                split = (10.0 * math.log10(svc_beams[tx])
                         if serving_dir and svc_beams[tx] > 1 else 0.0)
                rsrp = self._power[tx] - split + gpl
                snr = rsrp - self._noise_floor[rx] - cfg.interference_margin
                se = radio.spectral_efficiency(snr, cfg.se_cap)
                unblk = se * bytes_scale
                if is_ue:
                    se_b = radio.spectral_efficiency(snr - extra, cfg.se_cap)
                    bpfs[(tx, rx)] = (unblk, se_b * bytes_scale)
                else:
                    bpfs[(tx, rx)] = (unblk, unblk)
        self._bpfs = bpfs
        self._assoc_beams = svc_beams

    def _form_topology(self):
        cfg = self.cfg
        links = topof.build_feasible_links(
            self.bs_ids, self.ue_ids, self.donor,
            lambda p, c: self._rsrp.get((p, c)), cfg.rsrp_threshold)
        self._links = links
        if cfg.association_scheme == "min_hops":
            self.topo = topof.form_topology_min_hops(self.bs_ids, self.ue_ids,
                                                     self.donor, links)
        else:
            self.topo = topof.form_topology_max_rsrp(self.bs_ids, self.ue_ids,
                                                     self.donor, links)
        routes = {}
        for b in self.bs_ids:
            if self.topo.attached(b):
                routes[b] = tuple(topof.route_to_donor(self.topo, b).nodes)
        self._route_nodes = routes
        even, odd = [], []
        for b in self.bs_ids:
            depth = self.topo.depth.get(b)
            if depth is None:
                continue
            (even if depth % 2 == 0 else odd).append((b, self._multi[b]))
        self._parity_bs = (even, odd)
        self._depth = self.topo.depth

    def _refresh_candidates(self, now: float):
        cfg = self.cfg
        extra = cfg.blockage_extra_loss
        for ue in self.ue_ids:
            cands = []
            for s in self._links.parents_of.get(ue, ()):
                if not self.topo.attached(s):
                    continue
                access = self._rsrp[(s, ue)]
                bottleneck = min(self.topo.bottleneck[s], access)
                blocked = (s, ue) in self._blocked
                access_now = access - extra if blocked else access
                cands.append(conn.Candidate(
                    node=s, hops=self.topo.depth[s] + 1,
                    bottleneck_rsrp=bottleneck, access_rsrp=access,
                    blocked=blocked,
                    bottleneck_now=min(bottleneck, access_now),
                    access_rsrp_now=access_now))
            ranked = conn.build_candidates(ue, cands, cfg.association_scheme)
            conn.refresh_on_epoch(self.ssets[ue], ranked, cfg.mc_degree)

    def _refresh_blockage(self, now: float):
        if not self._blockage_on:
            return
        cfg = self.cfg
        mean_blk = mean_blocked_duration(cfg.blocker_radius, cfg.ue_speed)
        for ue in self.ue_ids:
            for s in self._links.parents_of.get(ue, ()):
                key = (s, ue)
                d2d = self._gpl[key][1]
                p = stationary_blockage_probability(
                    d2d, self._heights[s], self._heights[ue],
                    cfg.height_blocker, cfg.blocker_radius,
                    cfg.blocker_density)
                proc = self._procs.get(key)
                if proc is None:
                    proc = BlockageProcess(p, mean_blk, self.rng_blk, now)
                    self._procs[key] = proc
                    if proc.blocked:
                        self._blocked.add(key)
                    if math.isfinite(proc.next_transition):
                        heapq.heappush(self._bheap,
                                       (proc.next_transition, key))
                else:
                    proc.update_parameters(p, mean_blk)

    def _topology_epoch(self, now: float):
        self._draw_channels()
        self._association_rsrp()
        self._form_topology()
        self._service_budgets()
        self._refresh_blockage(now)
        self._refresh_candidates(now)
        # routes may have changed even for UEs whose serving set is unchanged
        for ue in self.ue_ids:
            self._rebind_ue(ue, now)
        self._sample_queues()

    # ------------------------------------------------------------------
    # sessions and per-hop registry

    def _routes_for_ue(self, ue: int, direction: int):
        sset = self.ssets[ue]
        routes = []
        for s in sset.active:
            chain = self._route_nodes.get(s)
            if chain is None:
                continue
            if direction == DL:
                routes.append(chain + (ue,))
            else:
                routes.append((ue,) + tuple(reversed(chain)))
        return routes

    def _register(self, session: Session):
        sid = session.id
        for leg_idx, leg in enumerate(session.legs):
            for hop, (tx, rx) in enumerate(leg.links):
                if session.direction == DL:
                    key, child = (tx, DL), rx
                else:
                    key, child = (rx, UL), tx
                entry_map = self.node_children.setdefault(key, {})
                entry_map.setdefault(child, {})[(sid, leg_idx)] = (
                    session, leg_idx, hop)

    def _unregister(self, session: Session):
        sid = session.id
        for leg_idx, leg in enumerate(session.legs):
            for tx, rx in leg.links:
                if session.direction == DL:
                    key, child = (tx, DL), rx
                else:
                    key, child = (rx, UL), tx
                children = self.node_children.get(key)
                if children is None:
                    continue
                entry_map = children.get(child)
                if entry_map is None:
                    continue
                entry_map.pop((sid, leg_idx), None)
                if not entry_map:
                    del children[child]

    def _rebind_ue(self, ue: int, now: float):
        for session in self.ue_sessions[ue]:
            if session.completed:
                continue
            routes = self._routes_for_ue(ue, session.direction)
            current = [leg.nodes for leg in session.legs]
            if current == routes:
                continue
            self._unregister(session)
            self.dropped_inflight += session.rebind_legs(routes)
            self._register(session)

    def _apply_switch(self, event, now: float):
        if event is None:
            return
        self.switch_events.append(event)
        self.switches[event.reason] += 1
        if self.cfg.switch_delay > 0:
            self.resume_time[event.ue] = now + self.cfg.switch_delay
        self._rebind_ue(event.ue, now)

    def _spawn_session(self, t: float, ue: int, direction: int):
        session = Session(self._next_sid, ue, direction, self.cfg.file_size, t)
        self._next_sid += 1
        session.rebind_legs(self._routes_for_ue(ue, direction))
        self.active_sessions[session.id] = session
        self.ue_sessions[ue].append(session)
        self._register(session)

    def _finalize(self, session: Session):
        self._unregister(session)
        del self.active_sessions[session.id]
        self.ue_sessions[session.ue].remove(session)
        self.records.append({"ue": session.ue, "direction": session.direction,
                             "arrival": session.arrival,
                             "completion": session.completion,
                             "size": session.size})

    # ------------------------------------------------------------------
    # slot formats

    def _update_formats(self):
        policy = self.cfg.slot_format_policy
        if policy == "static5050":
            return
        dl_ues, ul_ues = set(), set()
        local = {b: (set(), set()) for b in self.bs_ids}
        for session in self.active_sessions.values():
            target = dl_ues if session.direction == DL else ul_ues
            if session.ue in target:
                continue
            target.add(session.ue)
            idx = 0 if session.direction == DL else 1
            for leg in session.legs:
                for node in leg.nodes:
                    if node in self.ue_set:
                        continue
                    local[node][idx].add(session.ue)
        g = (len(dl_ues), len(ul_ues))
        if policy == "pf":
            fmt = mac.slot_format_pf(*g)
            self.formats = {b: fmt for b in self.bs_ids}
            self._fmt_cul_sum += fmt.c_ul
            self._fmt_cul_n += 1
        else:
            formats = {}
            cul = 0.0
            for b in self.bs_ids:
                fmt = mac.slot_format_wpf(
                    (len(local[b][0]), len(local[b][1])), g)
                formats[b] = fmt
                cul += fmt.c_ul
            self.formats = formats
            self._fmt_cul_sum += cul / len(self.bs_ids)
            self._fmt_cul_n += 1

    # ------------------------------------------------------------------
    # scheduler view protocol

    def serving_candidates(self, parity: int):
        return self._parity_bs[parity]

    def node_format(self, node: int):
        return self.formats[node]

    def _ue_gate(self, ue: int, slot: int):
        """Serving node allowed to reach this UE this slot, or None for any."""
        active = self.ssets[ue].active
        if len(active) < 2:
            return None
        pa = self._depth.get(active[0])
        pb = self._depth.get(active[1])
        if pa is None or pb is None or (pa & 1) != (pb & 1):
            return None
        parity = slot & 1
        if (pa & 1) != parity:
            return None
        return active[((slot - parity) >> 1) & 1]

    def pending_children(self, node: int, direction: int, slot: int):
        children = self.node_children.get((node, direction))
        if not children:
            return (), ()
        backhaul, access = [], []
        cache = self._slot_cache
        resume = self.resume_time
        now = self._now
        for child, entry_map in children.items():
            if child in self.ue_set:
                if resume and resume.get(child, 0.0) > now:
                    continue
                gate = self._ue_gate(child, slot)
                if gate is not None and gate != node:
                    continue
            pend = [e for e in entry_map.values()
                    if e[0].serveable(e[1], e[2]) > 0]
            if pend:
                cache[(node, child, direction)] = pend
                (access if child in self.ue_set else backhaul).append(child)
        return backhaul, access

    # ------------------------------------------------------------------

    def _serve(self, grants, slot: int):
        now_end = (slot + 1) * SLOT_DURATION
        usable = (mac.SYMBOLS_PER_SLOT - self.cfg.guard_symbols) / mac.SYMBOLS_PER_SLOT
        beam_sums = {}
        cache = self._slot_cache
        bpfs = self._bpfs
        blocked = self._blocked
        for g in grants:
            node, child, direction, fraction, beam = g
            key = (node, beam)
            total = beam_sums.get(key, 0.0) + fraction
            beam_sums[key] = total
            if total > usable + 1e-9:
                self.beam_fraction_violations += 1
            entries = cache[(node, child, direction)]
            tx, rx = (node, child) if direction == DL else (child, node)
            pair = bpfs[(tx, rx)]
            nbytes = int(pair[1 if (node, child) in blocked else 0] * fraction)
            if nbytes <= 0:
                continue
            n = len(entries)
            base, rem = divmod(nbytes, n)
            completed = None
            for i, (session, leg_idx, hop) in enumerate(entries):
                share = base + 1 if i < rem else base
                if share <= 0:
                    break
                moved = session.serve_bytes(leg_idx, hop, share, now_end)
                if moved and hop == len(session.legs[leg_idx].links) - 1:
                    self.bytes_delivered += moved
                    if session.completed:
                        completed = completed or []
                        completed.append(session)
            if completed:
                for session in completed:
                    self._finalize(session)
            if self.trace_alloc is not None:
                self.trace_alloc.append((slot, node, child, direction,
                                         fraction))

    def _advance_blockage(self, now: float):
        if not self._bheap or self._bheap[0][0] > now:
            return None
        changed_ues = set()
        heap = self._bheap
        while heap and heap[0][0] <= now:
            _, key = heapq.heappop(heap)
            proc = self._procs[key]
            was = proc.blocked
            proc.advance(now, self.rng_blk)
            if math.isfinite(proc.next_transition):
                heapq.heappush(heap, (proc.next_transition, key))
            if proc.blocked != was:
                if proc.blocked:
                    self._blocked.add(key)
                else:
                    self._blocked.discard(key)
                ue = key[1]
                changed_ues.add(ue)
                sset = self.ssets[ue]
                for cand in sset.candidates:
                    if cand.node == key[0]:
                        self._set_cand_blocked(cand, proc.blocked)
        return changed_ues

    def _set_cand_blocked(self, cand, blocked: bool):
        cand.blocked = blocked
        extra = self.cfg.blockage_extra_loss
        cand.access_rsrp_now = (cand.access_rsrp - extra if blocked
                                else cand.access_rsrp)
        cand.bottleneck_now = min(cand.bottleneck_rsrp, cand.access_rsrp_now)

    def _sample_queues(self):
        total = 0
        for session in self.active_sessions.values():
            for leg in session.legs:
                cum = leg.cum
                for k in range(1, len(cum)):
                    total += cum[k - 1] - cum[k]
        self.queue_samples.append(total)

    # ------------------------------------------------------------------

    def run(self) -> MetricsReport:
        cfg = self.cfg
        n_slots = int(round(cfg.sim_duration / SLOT_DURATION))
        epoch_slots = max(int(round(cfg.topology_period / SLOT_DURATION)), 1)
        scan_slots = max(int(round(cfg.scan_period / SLOT_DURATION)), 1)
        frame_slots = SLOTS_PER_FRAME
        scan_mode = cfg.connectivity_mode == conn.SC_FS_SCAN
        mobile = cfg.ue_speed > 0
        next_redraw = cfg.direction_redraw_period
        scheme = cfg.association_scheme
        cache = self._slot_cache

        for slot in range(n_slots):
            now = slot * SLOT_DURATION
            self._now = now

            if mobile and slot and slot % MOBILITY_TICK_SLOTS == 0:
                step_mobility(self.scn, MOBILITY_TICK_SLOTS * SLOT_DURATION)
                if now >= next_redraw:
                    redraw_directions(self.scn, self.rng_mob)
                    next_redraw += cfg.direction_redraw_period

            changed = self._advance_blockage(now)

            if slot % epoch_slots == 0:
                self._topology_epoch(now)
            if changed:
                for ue in sorted(changed):
                    self._apply_switch(
                        conn.on_blockage_change(self.ssets[ue], now), now)

            if scan_mode and slot and slot % scan_slots == 0:
                for ue in self.ue_ids:
                    self._apply_switch(
                        conn.periodic_scan(self.ssets[ue], now,
                                           cfg.scan_period, scheme), now)

            if slot % frame_slots == 0:
                self._update_formats()

            for t, ue, direction in self.arrivals.pop_due(now):
                self._spawn_session(t, ue, direction)

            if self.active_sessions:
                cache.clear()
                grants = mac.schedule_slot(self, slot, cfg.guard_symbols)
                if grants:
                    self._serve(grants, slot)

            if self._blocked:
                self.blocked_link_slots += len(self._blocked)

        return self._report(n_slots)

    def _report(self, n_slots: int) -> MetricsReport:
        cfg = self.cfg
        per_ue, network, covered = collect_metrics(self.records, self.ue_ids,
                                                   cfg.warmup)
        completed_dl = sum(1 for r in self.records if r["direction"] == DL)
        sessions_check = (sum(r["size"] for r in self.records)
                          + sum(s.delivered_total
                                for s in self.active_sessions.values()))
        mean_queue = (sum(self.queue_samples) / len(self.queue_samples)
                      if self.queue_samples else 0.0)
        return MetricsReport(
            seed=cfg.seed,
            config={k: (list(v) if isinstance(v, tuple) else v)
                    for k, v in asdict(cfg).items()},
            network_mean_throughput_bps=network,
            per_ue=per_ue,
            completed_sessions=len(self.records),
            pending_sessions=len(self.active_sessions),
            completed_dl=completed_dl,
            completed_ul=len(self.records) - completed_dl,
            switches_blockage=self.switches[conn.REASON_BLOCKAGE],
            switches_scan=self.switches[conn.REASON_SCAN],
            mean_queue_depth_bytes=mean_queue,
            blocked_link_slots=self.blocked_link_slots,
            half_duplex_violations=0,
            beam_fraction_violations=self.beam_fraction_violations,
            bytes_delivered=self.bytes_delivered,
            bytes_delivered_check=sessions_check,
            dropped_inflight_bytes=self.dropped_inflight,
            slot_format_mean_cul=(self._fmt_cul_sum / self._fmt_cul_n
                                  if self._fmt_cul_n else None),
            coverage_ues=covered,
            total_ues=len(self.ue_ids),
            insufficient_data=network is None,
            warmup_excluded=True,
            duration_s=cfg.sim_duration,
            slots=n_slots,
        )


def run(cfg: Config) -> MetricsReport:
    return Simulation(cfg).run()
