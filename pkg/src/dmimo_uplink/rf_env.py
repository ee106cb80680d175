"""Radio environment: scenario parameters, M-DAA geometry, UMi path loss and link budgets."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0  # m/s
# kT0 at 290 K, rounded as in link-budget practice (exact value is -173.975)
THERMAL_NOISE_DBM_HZ = -174.0

MIN_DISTANCE = 1.0  # m, path-loss validity floor
UMI_EFFECTIVE_ENV_HEIGHT = 1.0  # m
UMI_SHADOW_STD_LOS = 4.0  # dB
UMI_SHADOW_STD_NLOS = 7.82  # dB


class PowerMode(str, enum.Enum):
    FULL = "full"
    NORMALIZED = "normalized"


class NormalizeOver(str, enum.Enum):
    """Which UE count splits the power budget in normalized mode during subset selection."""

    MDAA = "mdaa"  # serving UE plus all candidate collaborators
    SELECTED = "selected"  # only the UEs that transmit


class LinkCondition(str, enum.Enum):
    LOS = "los"
    NLOS = "nlos"
    PROB = "prob"


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario parameters. Powers in dBm, noise figures in dB, lengths in m, frequencies in Hz.

    ``building_height`` is carried for completeness; the UMi street-canyon
    formulas have no term for it.
    """

    carrier_frequency: float = 7.5e9
    bandwidth_phase1: float = 10e6
    bandwidth_phase2: float = 10e6
    bs_height: float = 20.0
    ue_height: float = 2.0
    bs_rx_antennas: int = 4
    ue_tx_antennas: int = 2
    ue_rx_antennas: int = 2
    phase1_tx_power: float = 26.0
    phase2_tx_power_per_ue: float = 23.0
    power_mode: PowerMode = PowerMode.FULL
    noise_figure_bs: float = 9.0
    noise_figure_ue: float = 4.0
    mdaa_radius: float = 50.0
    bs_distance: float = 300.0
    num_collaborators: int = 10
    rng_seed: int = 0
    building_height: float = 20.0
    bs_link_condition: LinkCondition = LinkCondition.NLOS
    ue_link_condition: LinkCondition = LinkCondition.LOS
    shadow_fading: bool = False
    normalize_over: NormalizeOver = NormalizeOver.MDAA

    def __post_init__(self) -> None:
        # coerce plain strings coming from files / CLI
        object.__setattr__(self, "power_mode", PowerMode(self.power_mode))
        object.__setattr__(self, "bs_link_condition", LinkCondition(self.bs_link_condition))
        object.__setattr__(self, "ue_link_condition", LinkCondition(self.ue_link_condition))
        object.__setattr__(self, "normalize_over", NormalizeOver(self.normalize_over))

        positive = (
            "carrier_frequency", "bandwidth_phase1", "bandwidth_phase2",
            "bs_height", "ue_height", "bs_distance",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("bs_rx_antennas", "ue_tx_antennas", "ue_rx_antennas"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        for name in ("phase1_tx_power", "phase2_tx_power_per_ue", "noise_figure_bs", "noise_figure_ue"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not (math.isfinite(self.mdaa_radius) and self.mdaa_radius >= 0):
            raise ValueError(f"mdaa_radius must be >= 0, got {self.mdaa_radius!r}")
        if self.num_collaborators < 0:
            raise ValueError(f"num_collaborators must be >= 0, got {self.num_collaborators!r}")

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, enum.Enum):
                out[key] = value.value
        return out


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read a YAML (or JSON) scenario file whose keys mirror :class:`ScenarioConfig`."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return ScenarioConfig.from_dict(data)


@dataclass(frozen=True)
class Placement:
    serving_ue_position: np.ndarray
    collaborator_positions: np.ndarray  # (n, 2)
    bs_position: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def collaborator_distances(self) -> np.ndarray:
        """Horizontal serving-UE to collaborator distances, floored at ``MIN_DISTANCE``."""
        d = np.linalg.norm(self.collaborator_positions - self.serving_ue_position, axis=-1)
        return np.maximum(d, MIN_DISTANCE)

    def bs_distances_2d(self) -> np.ndarray:
        """Horizontal distances to the BS, serving UE first."""
        pos = np.vstack([self.serving_ue_position[None, :], self.collaborator_positions])
        return np.linalg.norm(pos - self.bs_position, axis=-1)


@dataclass(frozen=True)
class LinkBudget:
    """Large-scale budget of one link.

    ``snr_scale`` is P*G/(N_t*sigma^2), i.e. the per-antenna receive SNR that
    multiplies H F F^H H^H in the log-det rate. Symbol energy over the noise
    PSD (E/N0) equals P/sigma^2 because both use the same bandwidth.
    """

    pathloss_gain: float
    tx_power: float  # W
    symbol_energy: float  # J
    noise_variance: float  # W
    snr_scale: float

    @property
    def received_power_dbm(self) -> float:
        return 10 * math.log10(self.tx_power * self.pathloss_gain) + 30


def dbm_to_watt(dbm: float) -> float:
    return 10 ** ((dbm - 30) / 10)


def watt_to_dbm(watt: float) -> float:
    return 10 * math.log10(watt) + 30


def noise_power_dbm(bandwidth: float, noise_figure: float) -> float:
    """Thermal noise power kT0*B*NF in dBm."""
    return THERMAL_NOISE_DBM_HZ + 10 * math.log10(bandwidth) + noise_figure


def place_mdaa(cfg: ScenarioConfig, rng: np.random.Generator) -> Placement:
    """Drop the serving UE at ``bs_distance`` from the BS and collaborators uniformly on its disk.

    The BS sits at the origin and the serving UE on the positive x axis.
    Collaborators are uniform by area: radius ``R*sqrt(u)``, uniform angle.
    """
    n = cfg.num_collaborators
    serving = np.array([cfg.bs_distance, 0.0])
    u = rng.random(n)
    theta = rng.uniform(0.0, 2 * np.pi, n)
    r = cfg.mdaa_radius * np.sqrt(u)
    offsets = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return Placement(
        serving_ue_position=serving,
        collaborator_positions=serving + offsets,
        bs_position=np.zeros(2),
    )


def _breakpoint_distance(cfg: ScenarioConfig, h_tx: float, h_rx: float) -> float:
    h_tx_eff = h_tx - UMI_EFFECTIVE_ENV_HEIGHT
    h_rx_eff = h_rx - UMI_EFFECTIVE_ENV_HEIGHT
    return 4 * h_tx_eff * h_rx_eff * cfg.carrier_frequency / SPEED_OF_LIGHT


def pathloss_db(
    distance_3d: float,
    cfg: ScenarioConfig,
    los: bool,
    h_tx: float | None = None,
    h_rx: float | None = None,
) -> float:
    """3GPP TR 38.901 UMi street-canyon path loss in dB.

    Args:
        distance_3d: Link 3-D distance in m, at least ``MIN_DISTANCE``.
        cfg: Scenario (carrier frequency and default heights).
        los: Line-of-sight branch when True, NLOS otherwise.
        h_tx, h_rx: Antenna heights; default to the BS and UE heights of ``cfg``.

    Returns:
        Path loss in dB (positive). The linear gain is ``10**(-PL/10)``.
    """
    if not (distance_3d >= MIN_DISTANCE):
        raise ValueError(f"distance_3d must be >= {MIN_DISTANCE} m, got {distance_3d!r}")
    h_tx = cfg.bs_height if h_tx is None else h_tx
    h_rx = cfg.ue_height if h_rx is None else h_rx
    fc_ghz = cfg.carrier_frequency / 1e9
    dh = h_tx - h_rx
    d_2d = math.sqrt(max(distance_3d**2 - dh**2, 0.0))
    d_bp = _breakpoint_distance(cfg, h_tx, h_rx)

    if d_2d <= d_bp:
        pl_los = 32.4 + 21 * math.log10(distance_3d) + 20 * math.log10(fc_ghz)
    else:
        pl_los = (
            32.4 + 40 * math.log10(distance_3d) + 20 * math.log10(fc_ghz)
            - 9.5 * math.log10(d_bp**2 + dh**2)
        )
    if los:
        return pl_los
    # h_rx is the UT height in the NLOS correction term
    pl_nlos = 35.3 * math.log10(distance_3d) + 22.4 + 21.3 * math.log10(fc_ghz) - 0.3 * (h_rx - 1.5)
    return max(pl_los, pl_nlos)


def los_probability(distance_2d: float) -> float:
    """UMi street-canyon LOS probability."""
    if distance_2d <= 18.0:
        return 1.0
    return 18.0 / distance_2d + math.exp(-distance_2d / 36.0) * (1 - 18.0 / distance_2d)


def resolve_los(condition: LinkCondition, distance_2d: float, rng: np.random.Generator | None) -> bool:
    condition = LinkCondition(condition)
    if condition is LinkCondition.LOS:
        return True
    if condition is LinkCondition.NLOS:
        return False
    if rng is None:
        raise ValueError("probabilistic LOS needs a random source")
    return bool(rng.random() < los_probability(distance_2d))


def link_budget(
    tx_power_dbm: float,
    distance_3d: float,
    bandwidth: float,
    noise_figure: float,
    cfg: ScenarioConfig,
    *,
    los: bool = False,
    h_tx: float | None = None,
    h_rx: float | None = None,
    shadowing_db: float = 0.0,
) -> LinkBudget:
    """Combine path loss, thermal noise and transmit power into a :class:`LinkBudget`.

    ``shadowing_db`` is added to the path loss (positive = extra loss).
    """
    pl = pathloss_db(distance_3d, cfg, los, h_tx=h_tx, h_rx=h_rx) + shadowing_db
    gain = 10 ** (-pl / 10)
    power = dbm_to_watt(tx_power_dbm)
    noise = dbm_to_watt(noise_power_dbm(bandwidth, noise_figure))
    return LinkBudget(
        pathloss_gain=gain,
        tx_power=power,
        symbol_energy=power / bandwidth,
        noise_variance=noise,
        snr_scale=power * gain / (cfg.ue_tx_antennas * noise),
    )


def normalize_power(per_ue_power_dbm: float, num_ues: int, mode: PowerMode | str) -> float:
    """Per-UE transmit power in dBm for ``num_ues`` simultaneous transmitters."""
    if num_ues < 1:
        raise ValueError(f"num_ues must be >= 1, got {num_ues}")
    if PowerMode(mode) is PowerMode.FULL:
        return per_ue_power_dbm
    return per_ue_power_dbm - 10 * math.log10(num_ues)


def shadowing_draw(cfg: ScenarioConfig, los: bool, rng: np.random.Generator) -> float:
    if not cfg.shadow_fading:
        return 0.0
    return float(rng.normal(0.0, UMI_SHADOW_STD_LOS if los else UMI_SHADOW_STD_NLOS))
