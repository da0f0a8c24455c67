"""Frame structure, slot-format policies, and the per-slot scheduler.

Access and backhaul share the carrier by TDM with a strict parity rule:
in even slots, even-depth nodes serve their children; in odd slots,
odd-depth nodes do. A node is therefore never both serving and served in
one slot, which is exactly the half-duplex constraint. Within its serving
slot a node splits the usable symbols between DL and UL according to its
slot format, and shares each direction's symbols equally (round-robin)
among child links with pending traffic.
"""

from __future__ import annotations

from dataclasses import dataclass

DL = 0
UL = 1

SYMBOLS_PER_SLOT = 14
SLOT_DURATION = 0.000125      # s, numerology 3 (120 kHz SCS)
SLOTS_PER_FRAME = 80          # 10 ms frame
PF_CLAMP_LO = 0.1
PF_CLAMP_HI = 0.9


@dataclass(frozen=True)
class FrameStructure:
    numerology: int = 3
    scs_hz: float = 120e3
    slot_duration: float = SLOT_DURATION
    symbols_per_slot: int = SYMBOLS_PER_SLOT
    guard_symbols: int = 1

    def __post_init__(self):
        if self.symbols_per_slot != 14:
            raise ValueError("symbols_per_slot must be 14")
        if not 0 <= self.guard_symbols < self.symbols_per_slot / 2:
            raise ValueError("guard_symbols must be < symbols_per_slot/2")


@dataclass(frozen=True)
class SlotFormat:
    c_dl: float
    c_ul: float

    def __post_init__(self):
        if abs(self.c_dl + self.c_ul - 1.0) > 1e-9:
            raise ValueError("c_dl + c_ul must equal 1")


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def symbol_split(fmt: SlotFormat, guard_symbols: int = 1) -> tuple:
    """(dl_symbols, ul_symbols); guards come off the top, rounding half-up."""
    usable = SYMBOLS_PER_SLOT - guard_symbols
    dl = _round_half_up(fmt.c_dl * usable)
    dl = min(max(dl, 0), usable)
    return dl, usable - dl


def slot_format_static() -> SlotFormat:
    return SlotFormat(0.5, 0.5)


def _pf_fraction(active_dl: int, active_ul: int) -> float:
    if active_dl < 0 or active_ul < 0:
        raise ValueError("active counts must be >= 0")
    total = active_dl + active_ul
    if total == 0:
        return 0.5
    c_dl = active_dl / total
    return min(max(c_dl, PF_CLAMP_LO), PF_CLAMP_HI)


def slot_format_pf(active_dl: int, active_ul: int) -> SlotFormat:
    """DL share proportional to the DL-active UE count, clamped to [0.1, 0.9]."""
    c_dl = _pf_fraction(active_dl, active_ul)
    return SlotFormat(c_dl, 1.0 - c_dl)


def slot_format_wpf(node_local: tuple, global_counts: tuple) -> SlotFormat:
    """Average of the node-local and global PF uplink fractions."""
    c_ul_local = 1.0 - _pf_fraction(*node_local)
    c_ul_global = 1.0 - _pf_fraction(*global_counts)
    c_ul = 0.5 * (c_ul_local + c_ul_global)
    return SlotFormat(1.0 - c_ul, c_ul)


def count_active(sessions) -> tuple:
    """(dl_active, ul_active): UEs with any pending bytes per direction."""
    dl_ues, ul_ues = set(), set()
    for s in sessions:
        if s.remaining <= 0:
            continue
        (dl_ues if s.direction == DL else ul_ues).add(s.ue)
    return len(dl_ues), len(ul_ues)


@dataclass
class Grant:
    node: int          # scheduling (parent) node
    child: int
    direction: int     # DL: node transmits; UL: child transmits
    fraction: float    # share of the slot's 14 symbols
    beam: str          # beam label at the scheduling node


ACCESS_BEAM = "acc"


def schedule_slot(view, slot_index: int, guard_symbols: int = 1) -> list:
    """Allocate one slot. Returns the grant list; asserts half-duplex.

    `view` supplies the topology-dependent snapshot:
      serving_candidates(parity) -> iterable of (node, is_multi_beam)
      node_format(node)          -> SlotFormat
      pending_children(node, direction, slot_index)
                                 -> (backhaul_child_ids, access_child_ids)
    """
    parity = slot_index & 1
    grants = []
    serving_nodes = set()
    served_nodes = set()
    served_by = {}
    for node, multi_beam in view.serving_candidates(parity):
        fmt = view.node_format(node)
        dl_sym, ul_sym = symbol_split(fmt, guard_symbols)
        node_grants = []
        for direction, sym in ((DL, dl_sym), (UL, ul_sym)):
            if sym == 0:
                continue
            frac_total = sym / SYMBOLS_PER_SLOT
            backhaul, access = view.pending_children(node, direction, slot_index)
            if not backhaul and not access:
                continue
            if multi_beam:
                for child in backhaul:
                    node_grants.append(Grant(node, child, direction,
                                             frac_total, f"bh:{child}"))
                if access:
                    share = frac_total / len(access)
                    for child in access:
                        node_grants.append(Grant(node, child, direction,
                                                 share, ACCESS_BEAM))
            else:
                pending = list(backhaul) + list(access)
                share = frac_total / len(pending)
                for child in pending:
                    node_grants.append(Grant(node, child, direction, share,
                                             ACCESS_BEAM))
        if not node_grants:
            continue
        serving_nodes.add(node)
        for g in node_grants:
            served_nodes.add(g.child)
            assert served_by.setdefault(g.child, node) == node, (
                f"node {g.child} served by two parents in slot {slot_index}")
        grants.extend(node_grants)

    conflicts = serving_nodes & served_nodes
    assert not conflicts, (
        f"half-duplex violation: nodes {sorted(conflicts)} scheduled to both "
        f"transmit and receive in slot {slot_index}")
    return grants


def audit_beam_fractions(grants, guard_symbols: int = 1) -> int:
    """Count (node, beam) pairs whose grant fractions exceed the usable share."""
    usable = (SYMBOLS_PER_SLOT - guard_symbols) / SYMBOLS_PER_SLOT
    sums = {}
    for g in grants:
        key = (g.node, g.beam)
        sums[key] = sums.get(key, 0.0) + g.fraction
    return sum(1 for v in sums.values() if v > usable + 1e-9)
