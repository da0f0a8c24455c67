"""Deployment configuration, random node placement, and UE mobility."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

ASSOCIATION_SCHEMES = ("min_hops", "max_rsrp")
SLOT_FORMAT_POLICIES = ("static5050", "pf", "wpf")
CONNECTIVITY_MODES = ("sc", "mc", "sc_fs", "sc_fs_scan")
BEAM_CONFIGS = ("all_single", "dgnb_multi", "all_multi")

KMH_3 = 3.0 / 3.6  # 3 km/h in m/s


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class Config:
    carrier_frequency: float = 30e9       # Hz
    bandwidth: float = 400e6              # Hz
    num_ues: int = 60
    cell_radius: float = 500.0            # m
    tx_power_dgnb: float = 40.0           # dBm
    tx_power_iab: float = 33.0            # dBm
    tx_power_ue: float = 23.0             # dBm
    num_iab: int = 3
    num_dgnb: int = 1
    noise_figure_bs: float = 7.0          # dB
    noise_figure_ue: float = 13.0         # dB
    noise_psd: float = -173.93            # dBm/Hz
    array_ue: tuple = (4, 4)              # rows x cols
    array_bs: tuple = (16, 16)
    ue_speed: float = KMH_3               # m/s
    height_dgnb: float = 25.0             # m
    height_iab: float = 10.0
    height_ue: float = 1.5
    height_blocker: float = 1.5
    blocker_radius: float = 0.2           # m
    blocker_density: float = 0.0          # blockers / m^2
    mc_degree: int = 2
    file_size: int = 2_000_000            # bytes
    session_rate_ul: float = 0.2          # sessions/s per UE
    session_rate_dl: float = 0.5
    association_scheme: str = "max_rsrp"
    slot_format_policy: str = "pf"
    connectivity_mode: str = "sc"
    beam_config: str = "all_single"
    sim_duration: float = 100.0           # s
    warmup: float = 10.0                  # s
    seed: int = 1
    interference_margin: float = 3.0      # dB
    blockage_extra_loss: float = 20.0     # dB
    rsrp_threshold: float = -80.0         # dBm, link feasibility gate
    scan_period: float = 0.1              # s
    topology_period: float = 1.0          # s
    se_cap: float = 7.4                   # bit/s/Hz spectral-efficiency ceiling
    guard_symbols: int = 1                # per UL/DL switch within a slot
    direction_redraw_period: float = 10.0 # s between UE heading redraws
    switch_delay: float = 0.0             # s of service gap after a link switch

    def with_overrides(self, **kwargs) -> "Config":
        return replace(self, **kwargs)


_INT_FIELDS = {"num_ues", "num_iab", "num_dgnb", "mc_degree", "file_size",
               "seed", "guard_symbols"}
_STR_FIELDS = {"association_scheme", "slot_format_policy", "connectivity_mode",
               "beam_config"}
_ARRAY_FIELDS = {"array_ue", "array_bs"}


def config_field_names() -> list:
    return [f.name for f in fields(Config)]


def parse_field(name: str, raw: str):
    """Parse one textual config value into the field's native type."""
    raw = raw.strip()
    if name in _ARRAY_FIELDS:
        parts = raw.lower().replace("x", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{name}: expected ROWSxCOLS, got {raw!r}")
        return (int(parts[0]), int(parts[1]))
    if name in _STR_FIELDS:
        return raw.lower()
    if name in _INT_FIELDS:
        return int(float(raw))
    return float(raw)


def load_config_file(path, base: Config | None = None) -> Config:
    """Read a key = value config file; unknown keys are an error."""
    known = set(config_field_names())
    overrides = {}
    errors = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                errors.append(f"line {lineno}: unknown key {key!r}")
                continue
            try:
                overrides[key] = parse_field(key, value)
            except ValueError as exc:
                errors.append(f"line {lineno}: {exc}")
    if errors:
        raise ConfigError(errors)
    return (base or Config()).with_overrides(**overrides)


def validate_config(cfg: Config) -> Config:
    """Return cfg if every invariant holds, else raise with all violations."""
    errors = []

    def finite(name):
        v = getattr(cfg, name)
        if not math.isfinite(v):
            errors.append(f"{name} must be finite")
            return False
        return True

    for name in ("carrier_frequency", "bandwidth", "tx_power_dgnb",
                 "tx_power_iab", "tx_power_ue", "noise_figure_bs",
                 "noise_figure_ue", "noise_psd", "ue_speed", "height_dgnb",
                 "height_iab", "height_ue", "height_blocker", "blocker_radius",
                 "blocker_density", "session_rate_ul", "session_rate_dl",
                 "interference_margin", "blockage_extra_loss", "cell_radius",
                 "sim_duration", "warmup", "scan_period", "topology_period",
                 "se_cap", "direction_redraw_period", "switch_delay"):
        finite(name)

    if cfg.num_ues < 1:
        errors.append("num_ues >= 1 required")
    if cfg.cell_radius <= 0:
        errors.append("cell_radius > 0 required")
    if cfg.num_iab < 0:
        errors.append("num_iab >= 0 required")
    if cfg.num_dgnb != 1:
        errors.append("num_dgnb must be 1 (single-donor deployments only)")
    if not cfg.warmup < cfg.sim_duration:
        errors.append("warmup < sim_duration required")
    if cfg.warmup < 0:
        errors.append("warmup >= 0 required")
    if cfg.mc_degree not in (1, 2):
        errors.append("mc_degree must be 1 or 2")
    if cfg.carrier_frequency <= 0:
        errors.append("carrier_frequency > 0 required")
    if cfg.bandwidth <= 0:
        errors.append("bandwidth > 0 required")
    if cfg.file_size <= 0:
        errors.append("file_size > 0 required")
    if cfg.session_rate_ul < 0 or cfg.session_rate_dl < 0:
        errors.append("session rates must be >= 0")
    if cfg.blocker_density < 0:
        errors.append("blocker_density >= 0 required")
    if cfg.blocker_radius <= 0:
        errors.append("blocker_radius > 0 required")
    if cfg.blocker_density > 0 and cfg.ue_speed <= 0:
        errors.append("blocker_density > 0 requires ue_speed > 0 "
                      "(blockers move at the UE speed)")
    if cfg.ue_speed < 0:
        errors.append("ue_speed >= 0 required")
    for name in ("array_ue", "array_bs"):
        arr = getattr(cfg, name)
        if (not isinstance(arr, tuple) or len(arr) != 2
                or any(int(v) < 1 for v in arr)):
            errors.append(f"{name} must be a (rows, cols) pair of ints >= 1")
    if cfg.association_scheme not in ASSOCIATION_SCHEMES:
        errors.append(f"association_scheme must be one of {ASSOCIATION_SCHEMES}")
    if cfg.slot_format_policy not in SLOT_FORMAT_POLICIES:
        errors.append(f"slot_format_policy must be one of {SLOT_FORMAT_POLICIES}")
    if cfg.connectivity_mode not in CONNECTIVITY_MODES:
        errors.append(f"connectivity_mode must be one of {CONNECTIVITY_MODES}")
    if cfg.beam_config not in BEAM_CONFIGS:
        errors.append(f"beam_config must be one of {BEAM_CONFIGS}")
    if cfg.scan_period <= 0:
        errors.append("scan_period > 0 required")
    if cfg.topology_period <= 0:
        errors.append("topology_period > 0 required")
    if cfg.se_cap <= 0:
        errors.append("se_cap > 0 required")
    if cfg.guard_symbols < 0 or cfg.guard_symbols >= 7:
        errors.append("guard_symbols must be in [0, 7)")
    if cfg.switch_delay < 0:
        errors.append("switch_delay >= 0 required")

    if errors:
        raise ConfigError(errors)
    return cfg


DGNB, IAB, UE = "dgnb", "iab", "ue"


@dataclass
class Node:
    id: int
    kind: str                 # dgnb | iab | ue
    x: float
    y: float
    height: float
    tx_power: float           # dBm
    noise_figure: float       # dB
    array: tuple              # rows x cols
    multi_beam: bool = False

    @property
    def position(self):
        return (self.x, self.y)


@dataclass
class Scenario:
    config: Config
    nodes: list
    # per-UE mobility state, indexed like ue_ids
    ue_ids: list = field(default_factory=list)
    directions: np.ndarray = None  # radians
    speeds: np.ndarray = None      # m/s

    @property
    def dgnb(self) -> Node:
        return self.nodes[0]

    def bs_nodes(self) -> list:
        return [n for n in self.nodes if n.kind != UE]

    def ue_nodes(self) -> list:
        return [n for n in self.nodes if n.kind == UE]

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]


def _uniform_disc(rng: np.random.Generator, radius: float, n: int):
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return r * np.cos(theta), r * np.sin(theta)


def deployment_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))


def generate_deployment(cfg: Config, seed: int) -> Scenario:
    """Drop the donor on the cell edge and IABs/UEs uniformly in the disc.

    Pure function of (cfg, seed): identical inputs give identical layouts.
    """
    rng = deployment_rng(seed)
    multi_dgnb = cfg.beam_config in ("dgnb_multi", "all_multi")
    multi_iab = cfg.beam_config == "all_multi"

    nodes = [Node(0, DGNB, cfg.cell_radius, 0.0, cfg.height_dgnb,
                  cfg.tx_power_dgnb, cfg.noise_figure_bs, cfg.array_bs,
                  multi_beam=multi_dgnb)]
    xs, ys = _uniform_disc(rng, cfg.cell_radius, cfg.num_iab)
    for i in range(cfg.num_iab):
        nodes.append(Node(1 + i, IAB, float(xs[i]), float(ys[i]),
                          cfg.height_iab, cfg.tx_power_iab,
                          cfg.noise_figure_bs, cfg.array_bs,
                          multi_beam=multi_iab))
    xs, ys = _uniform_disc(rng, cfg.cell_radius, cfg.num_ues)
    ue_ids = []
    for i in range(cfg.num_ues):
        nid = 1 + cfg.num_iab + i
        nodes.append(Node(nid, UE, float(xs[i]), float(ys[i]), cfg.height_ue,
                          cfg.tx_power_ue, cfg.noise_figure_ue, cfg.array_ue))
        ue_ids.append(nid)

    directions = 2.0 * np.pi * rng.random(cfg.num_ues)
    speeds = np.full(cfg.num_ues, cfg.ue_speed)
    return Scenario(config=cfg, nodes=nodes, ue_ids=ue_ids,
                    directions=directions, speeds=speeds)


def redraw_directions(scenario: Scenario, rng: np.random.Generator) -> None:
    scenario.directions = 2.0 * np.pi * rng.random(len(scenario.ue_ids))


def step_mobility(scenario: Scenario, dt: float) -> None:
    """Advance every UE by speed*dt, reflecting headings at the cell edge.

    The DgNB and IAB nodes are static. Reflection preserves the angle of
    incidence against the boundary tangent, so UEs never leave the disc.
    """
    if dt <= 0:
        raise ValueError("dt > 0 required")
    radius = scenario.config.cell_radius
    for idx, ue_id in enumerate(scenario.ue_ids):
        node = scenario.nodes[ue_id]
        speed = float(scenario.speeds[idx])
        if speed == 0.0:
            continue
        direction = float(scenario.directions[idx])
        x, y = node.x, node.y
        remaining = speed * dt
        for _ in range(8):  # multiple reflections only under huge dt
            nx = x + remaining * math.cos(direction)
            ny = y + remaining * math.sin(direction)
            if nx * nx + ny * ny <= radius * radius:
                x, y = nx, ny
                break
            # distance along the heading to the boundary crossing
            dx, dy = math.cos(direction), math.sin(direction)
            b = x * dx + y * dy
            c = x * x + y * y - radius * radius
            t = -b + math.sqrt(max(b * b - c, 0.0))
            t = max(t, 0.0)
            x, y = x + t * dx, y + t * dy
            # reflect heading about the inward normal at the crossing point
            norm = math.hypot(x, y)
            if norm > 0:
                nx_, ny_ = x / norm, y / norm
                dot = dx * nx_ + dy * ny_
                dx, dy = dx - 2.0 * dot * nx_, dy - 2.0 * dot * ny_
                direction = math.atan2(dy, dx)
            remaining -= t
            # nudge inside to avoid re-crossing on numerically grazing hits
            scale = (radius * (1.0 - 1e-12)) / norm if norm > radius else 1.0
            x, y = x * scale, y * scale
            if remaining <= 0:
                break
        node.x, node.y = x, y
        scenario.directions[idx] = direction
