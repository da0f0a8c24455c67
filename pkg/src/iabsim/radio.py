"""Link-budget primitives: path loss, antenna gain, RSRP, and capacity.

Path loss and line-of-sight probability follow the 3GPP TR 38.901 urban
macro (UMa) and urban micro street-canyon (UMi) closed forms. Antenna gain
combines the standard directional element pattern with an array-factor
beamwidth approximation. Co-channel interference is folded into a fixed
margin subtracted from the SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

SPEED_OF_LIGHT = 3.0e8
ELEMENT_GAIN_DBI = 8.0
ELEMENT_HPBW_DEG = 65.0
ELEMENT_FLOOR_DB = 30.0

UMA = "uma"
UMI = "umi"

# shadow-fading sigma (dB) per profile and LOS state
SHADOW_SIGMA = {
    (UMA, True): 4.0,
    (UMA, False): 6.0,
    (UMI, True): 4.0,
    (UMI, False): 7.82,
}

MIN_2D_DISTANCE = 10.0  # below this, path loss is clamped to the 10 m value


@dataclass
class LinkGeometry:
    d2d: float
    d3d: float
    azimuth: float = 0.0    # radians from tx boresight
    elevation: float = 0.0

    def __post_init__(self):
        if self.d2d < 0 or self.d3d < self.d2d - 1e-9:
            raise ValueError("require d3d >= d2d >= 0")


@dataclass
class ChannelState:
    los: bool
    blocked: bool
    path_loss: float   # dB, distance-dependent term
    shadowing: float   # dB, log-normal draw


@dataclass
class LinkBudget:
    rsrp: float                 # dBm
    snr_effective: float        # dB, margin already subtracted
    spectral_efficiency: float  # bit/s/Hz


def link_geometry(tx_pos, tx_height, rx_pos, rx_height) -> LinkGeometry:
    d2d = math.hypot(tx_pos[0] - rx_pos[0], tx_pos[1] - rx_pos[1])
    d3d = math.hypot(d2d, tx_height - rx_height)
    return LinkGeometry(d2d=d2d, d3d=d3d)


def _breakpoint_distance(h_bs: float, h_ut: float, fc: float) -> float:
    # effective antenna heights per the standard (environment height 1 m)
    return 4.0 * max(h_bs - 1.0, 0.1) * max(h_ut - 1.0, 0.1) * fc / SPEED_OF_LIGHT


def path_loss_db(geom: LinkGeometry, profile: str, los: bool, fc: float,
                 h_bs: float, h_ut: float) -> float:
    """TR 38.901 UMa/UMi path loss; NLOS is floored at the LOS value."""
    if profile not in (UMA, UMI):
        raise ValueError(f"unsupported profile {profile!r}")
    d2d = max(geom.d2d, MIN_2D_DISTANCE)
    d3d = math.hypot(d2d, h_bs - h_ut)
    fc_ghz = fc / 1e9
    dbp = _breakpoint_distance(h_bs, h_ut, fc)

    if profile == UMA:
        if d2d <= dbp:
            pl_los = 28.0 + 22.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
        else:
            pl_los = (28.0 + 40.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
                      - 9.0 * math.log10(dbp * dbp + (h_bs - h_ut) ** 2))
        if los:
            return pl_los
        pl_nlos = (13.54 + 39.08 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
                   - 0.6 * (h_ut - 1.5))
        return max(pl_los, pl_nlos)

    if d2d <= dbp:
        pl_los = 32.4 + 21.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
    else:
        pl_los = (32.4 + 40.0 * math.log10(d3d) + 20.0 * math.log10(fc_ghz)
                  - 9.5 * math.log10(dbp * dbp + (h_bs - h_ut) ** 2))
    if los:
        return pl_los
    pl_nlos = (35.3 * math.log10(d3d) + 22.4 + 21.3 * math.log10(fc_ghz)
               - 0.3 * (h_ut - 1.5))
    return max(pl_los, pl_nlos)


def los_probability(geom: LinkGeometry, profile: str) -> float:
    """TR 38.901 outdoor LOS probability (UE heights below 13 m)."""
    if profile not in (UMA, UMI):
        raise ValueError(f"unsupported profile {profile!r}")
    d2d = geom.d2d
    if d2d <= 18.0:
        return 1.0
    decay = 63.0 if profile == UMA else 36.0
    p = 18.0 / d2d + math.exp(-d2d / decay) * (1.0 - 18.0 / d2d)
    return min(max(p, 0.0), 1.0)


def shadow_sigma_db(profile: str, los: bool) -> float:
    return SHADOW_SIGMA[(profile, los)]


def profile_for_heights(h_a: float, h_b: float) -> str:
    """UMa for links anchored at a macro-height site, UMi otherwise."""
    return UMA if max(h_a, h_b) > 20.0 else UMI


def antenna_gain_db(array, offset: float = 0.0) -> float:
    """Array gain toward `offset` radians off boresight.

    Boresight gain is the element gain plus 10*log10(elements). Away from
    boresight the element pattern rolls off with the standard 65-degree
    half-power parabola and the array factor with a beamwidth that narrows
    as the square root of the element count.
    """
    rows, cols = int(array[0]), int(array[1])
    if rows < 1 or cols < 1:
        raise ValueError("array dimensions must be >= 1")
    n = rows * cols
    peak = ELEMENT_GAIN_DBI + 10.0 * math.log10(n)
    off_deg = abs(math.degrees(offset))
    att_element = min(12.0 * (off_deg / ELEMENT_HPBW_DEG) ** 2, ELEMENT_FLOOR_DB)
    if n > 1:
        af_hpbw = ELEMENT_HPBW_DEG / math.sqrt(n)
        att_array = min(12.0 * (off_deg / af_hpbw) ** 2, ELEMENT_FLOOR_DB)
    else:
        att_array = 0.0
    return peak - att_element - att_array


def rsrp_dbm(tx_power: float, tx_gain: float, rx_gain: float,
             ch: ChannelState, beams_active: int = 1,
             blockage_extra_loss: float = 0.0) -> float:
    """Received power with aligned beams and equal power split across beams."""
    if beams_active < 1:
        raise ValueError("beams_active >= 1 required")
    rsrp = (tx_power - 10.0 * math.log10(beams_active) + tx_gain + rx_gain
            - ch.path_loss - ch.shadowing)
    if ch.blocked:
        rsrp -= blockage_extra_loss
    return rsrp


def noise_power_dbm(noise_psd: float, bandwidth: float, noise_figure: float) -> float:
    return noise_psd + 10.0 * math.log10(bandwidth) + noise_figure


def snr_effective_db(rsrp: float, noise_psd: float, bandwidth: float,
                     noise_figure: float, interference_margin: float) -> float:
    return rsrp - noise_power_dbm(noise_psd, bandwidth, noise_figure) - interference_margin


def spectral_efficiency(snr_db: float, se_cap: float) -> float:
    return min(math.log2(1.0 + 10.0 ** (snr_db / 10.0)), se_cap)


def link_budget(rsrp: float, noise_psd: float, bandwidth: float,
                noise_figure: float, interference_margin: float,
                se_cap: float) -> LinkBudget:
    snr = snr_effective_db(rsrp, noise_psd, bandwidth, noise_figure,
                           interference_margin)
    return LinkBudget(rsrp=rsrp, snr_effective=snr,
                      spectral_efficiency=spectral_efficiency(snr, se_cap))


def link_capacity_bps(budget: LinkBudget, bandwidth_fraction: float,
                      bandwidth: float) -> float:
    """Shannon rate with the configured ceiling, scaled by the time share."""
    if not 0.0 <= bandwidth_fraction <= 1.0:
        raise ValueError("bandwidth_fraction must be in [0, 1]")
    return bandwidth * bandwidth_fraction * budget.spectral_efficiency
