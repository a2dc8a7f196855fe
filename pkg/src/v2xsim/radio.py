"""Propagation and link-budget models.

Four pathloss models (free space, log-distance with optional frozen shadow
fading, COST-231 Hata urban, and the dual-slope 3GPP TR 36.873 urban-macro
LOS form), thermal noise floor, and a Shannon-capacity link budget with
equal time-sharing among a base station's associated users.

All functions are pure. With ``shadowing_sigma_db == 0`` every value is
fully deterministic; with a positive sigma the shadow term is a frozen
spatial field keyed by (seed, tile id, site id), not per-call noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConfigError, RadioModelError
from .rng import generator

SPEED_OF_LIGHT = 299_792_458.0

# Reference distance for the log-distance model, meters.
LOG_DISTANCE_D0_M = 1.0

THERMAL_NOISE_DBM_PER_HZ = -174.0


class PlaneKind(Enum):
    MACROCELL = "macrocell"
    FEMTOCELL = "femtocell"


PATHLOSS_MODELS = ("fspl", "log_distance", "cost_hata", "tr36873_uma_los")


@dataclass(frozen=True)
class RadioPlaneConfig:
    """One communication plane's full parameter set."""

    plane: PlaneKind
    tx_power_dbm_range: tuple[float, float]
    tx_gain_dbi: float
    rx_gain_dbi: float
    carrier_freq_hz: float
    bandwidth_hz: float
    noise_figure_db: float
    beamwidth_deg: float                      # metadata only; gains are scalar
    pl_model_los: str
    pl_model_nlos: str
    pl_exponent_los: float | None = None
    pl_exponent_nlos: float | None = None
    shadowing_sigma_db: float = 0.0
    bs_height_range_m: tuple[float, float] = (5.0, 15.0)
    min_site_separation_m: float = 0.0        # femtocell placement constraint
    snr_cutoff_db: float = -10.0

    def __post_init__(self):
        lo, hi = self.tx_power_dbm_range
        if lo > hi:
            raise ConfigError(f"tx power range reversed: {self.tx_power_dbm_range}")
        if self.carrier_freq_hz <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("carrier frequency and bandwidth must be positive")
        hlo, hhi = self.bs_height_range_m
        if hlo > hhi or hlo <= 0:
            raise ConfigError(f"bs height range invalid: {self.bs_height_range_m}")
        for name, model, exp in (
            ("pl_model_los", self.pl_model_los, self.pl_exponent_los),
            ("pl_model_nlos", self.pl_model_nlos, self.pl_exponent_nlos),
        ):
            if model not in PATHLOSS_MODELS:
                raise ConfigError(f"{name}={model!r} not one of {PATHLOSS_MODELS}")
            if model == "log_distance" and (exp is None or exp <= 0):
                raise ConfigError(f"{name} needs a positive pathloss exponent")

    @property
    def tx_power_dbm_median(self) -> float:
        lo, hi = self.tx_power_dbm_range
        return (lo + hi) / 2.0

    def noise_floor_dbm(self) -> float:
        return noise_floor(self.bandwidth_hz, self.noise_figure_db)

    def validity_warnings(self) -> list[str]:
        """Nominal-validity flags for the configured models (evaluated anyway)."""
        warnings = []
        f_mhz = self.carrier_freq_hz / 1e6
        if "cost_hata" in (self.pl_model_los, self.pl_model_nlos) and not (150.0 <= f_mhz <= 2000.0):
            warnings.append(
                f"cost_hata evaluated at {f_mhz:.0f} MHz, outside its nominal "
                "150-2000 MHz validity range"
            )
        return warnings


@dataclass(frozen=True)
class LinkBudgetResult:
    """Link budget snapshot; rssi = tx + gains - pathloss holds exactly."""

    pathloss_db: float
    rssi_dbm: float
    snr_db: float
    datarate_bit_s: float
    assigned: bool


# --------------------------------------------------------------------------
# Pathloss models
# --------------------------------------------------------------------------

def fspl(distance_m: float, freq_hz: float) -> float:
    """Free-space pathloss, 20*log10(4*pi*d*f/c) dB."""
    if distance_m <= 0.0 or freq_hz <= 0.0:
        raise RadioModelError(f"fspl needs d > 0 and f > 0, got d={distance_m}, f={freq_hz}")
    return 20.0 * math.log10(4.0 * math.pi * distance_m * freq_hz / SPEED_OF_LIGHT)


def shadowing_db(sigma_db: float, seed: int, tile_id: int, site_id: int) -> float:
    """Frozen shadow-fading offset for one tile/site link, N(0, sigma^2) dB."""
    if sigma_db == 0.0:
        return 0.0
    gen = generator(seed, "shadow", tile_id, site_id)
    return float(gen.normal(0.0, sigma_db))


def log_distance_pl(distance_m: float, freq_hz: float, exponent: float,
                    sigma_db: float = 0.0, seed: int = 0,
                    link: tuple[int, int] | None = None) -> float:
    """Log-distance pathloss anchored at FSPL(1 m).

    PL = FSPL(d0, f) + 10*n*log10(d/d0) + X_sigma, d0 = 1 m. Distances
    below d0 clamp to d0. The shadow term is zero unless both sigma and a
    link identity are given.
    """
    if exponent <= 0.0:
        raise RadioModelError(f"pathloss exponent must be > 0, got {exponent}")
    d = max(distance_m, LOG_DISTANCE_D0_M)
    pl = fspl(LOG_DISTANCE_D0_M, freq_hz) + 10.0 * exponent * math.log10(d / LOG_DISTANCE_D0_M)
    if sigma_db != 0.0 and link is not None:
        pl += shadowing_db(sigma_db, seed, link[0], link[1])
    return pl


def cost_hata(distance_m: float, freq_hz: float, h_bs_m: float, h_ut_m: float) -> float:
    """COST-231 Hata urban pathloss (metropolitan correction +3 dB).

    Uses d in km and f in MHz. Inputs outside the model's nominal validity
    (see :func:`cost_hata_in_validity_range`) are evaluated anyway.
    """
    if distance_m <= 0.0 or freq_hz <= 0.0 or h_bs_m <= 0.0 or h_ut_m <= 0.0:
        raise RadioModelError("cost_hata needs positive d, f, and heights")
    d_km = distance_m / 1000.0
    f_mhz = freq_hz / 1e6
    log_f = math.log10(f_mhz)
    a_ut = (1.1 * log_f - 0.7) * h_ut_m - (1.56 * log_f - 0.8)
    return (46.3 + 33.9 * log_f - 13.82 * math.log10(h_bs_m) - a_ut
            + (44.9 - 6.55 * math.log10(h_bs_m)) * math.log10(d_km) + 3.0)


def cost_hata_in_validity_range(distance_m: float, freq_hz: float,
                                h_bs_m: float, h_ut_m: float) -> bool:
    f_mhz = freq_hz / 1e6
    d_km = distance_m / 1000.0
    return (150.0 <= f_mhz <= 2000.0 and 1.0 <= d_km <= 20.0
            and 30.0 <= h_bs_m <= 200.0 and 1.0 <= h_ut_m <= 10.0)


def tr36873_breakpoint_m(freq_hz: float, h_bs_m: float, h_ut_m: float) -> float:
    """Dual-slope breakpoint distance with 1 m effective environment height."""
    return 4.0 * (h_bs_m - 1.0) * (h_ut_m - 1.0) * freq_hz / SPEED_OF_LIGHT


def tr36873_uma_los(distance_m: float, freq_hz: float, h_bs_m: float, h_ut_m: float) -> float:
    """Dual-slope urban-macro LOS pathloss.

    Below the breakpoint: 22*log10(d) + 28 + 20*log10(f_GHz); above:
    40*log10(d) + 28 + 20*log10(f_GHz) - 9*log10(dBP^2 + (h_bs - h_ut)^2).
    The branch switch happens where the two expressions are exactly equal,
    sqrt(dBP^2 + dh^2), so the curve is continuous. Distances below 10 m
    clamp to 10 m.
    """
    if h_bs_m <= 1.0 or h_ut_m <= 1.0:
        raise RadioModelError(f"heights must exceed 1 m, got bs={h_bs_m}, ut={h_ut_m}")
    if freq_hz <= 0.0 or distance_m < 1.0:
        raise RadioModelError("tr36873_uma_los needs f > 0 and d >= 1 m")
    d = max(distance_m, 10.0)
    f_ghz = freq_hz / 1e9
    d_bp = tr36873_breakpoint_m(freq_hz, h_bs_m, h_ut_m)
    dh = h_bs_m - h_ut_m
    correction = d_bp * d_bp + dh * dh
    d_switch = math.sqrt(correction)
    if d <= d_switch:
        return 22.0 * math.log10(d) + 28.0 + 20.0 * math.log10(f_ghz)
    return (40.0 * math.log10(d) + 28.0 + 20.0 * math.log10(f_ghz)
            - 9.0 * math.log10(correction))


def noise_floor(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Receiver noise floor, -174 + 10*log10(B) + NF dBm."""
    if bandwidth_hz <= 0.0:
        raise RadioModelError(f"bandwidth must be > 0, got {bandwidth_hz}")
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


# --------------------------------------------------------------------------
# Plane-level dispatch and link budget
# --------------------------------------------------------------------------

def plane_pathloss(plane: RadioPlaneConfig, distance_m: float, is_los: bool,
                   h_bs_m: float, h_ut_m: float) -> float:
    """Deterministic pathloss for a link under the plane's configured model."""
    model = plane.pl_model_los if is_los else plane.pl_model_nlos
    if model == "fspl":
        return fspl(distance_m, plane.carrier_freq_hz)
    if model == "log_distance":
        exponent = plane.pl_exponent_los if is_los else plane.pl_exponent_nlos
        return log_distance_pl(distance_m, plane.carrier_freq_hz, exponent)
    if model == "cost_hata":
        return cost_hata(distance_m, plane.carrier_freq_hz, h_bs_m, h_ut_m)
    if model == "tr36873_uma_los":
        return tr36873_uma_los(distance_m, plane.carrier_freq_hz, h_bs_m, h_ut_m)
    raise ConfigError(f"unknown pathloss model {model!r}")


def link_budget(plane: RadioPlaneConfig, tx_power_dbm: float, pathloss_db: float,
                shared_users: int = 1) -> LinkBudgetResult:
    """RSSI, SNR, and Shannon datarate with equal time-sharing.

    SNR below the plane's sensitivity cutoff yields zero datarate and an
    unassigned flag. TX power must already be clamped into the plane range.
    """
    lo, hi = plane.tx_power_dbm_range
    if not (lo <= tx_power_dbm <= hi):
        raise RadioModelError(
            f"tx power {tx_power_dbm} dBm outside plane range [{lo}, {hi}]")
    if shared_users < 1:
        raise RadioModelError("shared_users must be >= 1")
    rssi = tx_power_dbm + plane.tx_gain_dbi + plane.rx_gain_dbi - pathloss_db
    snr = rssi - plane.noise_floor_dbm()
    if snr < plane.snr_cutoff_db:
        return LinkBudgetResult(pathloss_db, rssi, snr, 0.0, False)
    rate = (plane.bandwidth_hz / shared_users) * math.log2(1.0 + 10.0 ** (snr / 10.0))
    return LinkBudgetResult(pathloss_db, rssi, snr, rate, True)


def sector_attenuation_db(offset_deg: float, beamwidth_deg: float,
                          max_attenuation_db: float = 20.0) -> float:
    """Parabolic sector antenna mask, min(12*(theta/HPBW)^2, A_max) dB.

    Available for a 3-sector macro layout; the default link budget applies
    gains as scalars and leaves this off.
    """
    theta = abs(offset_deg)
    while theta > 180.0:
        theta -= 360.0
        theta = abs(theta)
    return min(12.0 * (theta / beamwidth_deg) ** 2, max_attenuation_db)
