"""Physical description of the system under study.

Thermal fleet (identical units clustered into blocks), stationary
storage, the demand trace, and the EV fleet treated as one aggregated
battery whose grid connection follows the commuter calendar: weekday
departures at t_out with a full-charge requirement, returns at t_in,
weekends fully connected.  Unmanaged charging keeps the fleet off the
optimiser's hands entirely: it reconnects in the evening and charges
immediately at full rate.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np

from .degradation import DegradationParams
from .frequency import FrequencyParams
from .wind import STEP_HOURS, WindModel

__all__ = [
    "Regime",
    "AvailabilityState",
    "GeneratorSpec",
    "StorageSpec",
    "EvFleetSpec",
    "AggregateBattery",
    "DemandTrace",
    "SystemSpec",
    "aggregate_fleet",
    "driving_energy_gwh",
    "fleet_window",
    "disconnected_soc",
    "synthetic_demand",
    "read_demand_csv",
]


class Regime(str, enum.Enum):
    UNMANAGED = "unmanaged"
    SMART = "smart"
    V2G = "v2g"


class AvailabilityState(enum.Enum):
    CONNECTED = "connected"
    DRIVING = "driving"
    DEPARTURE = "departure"
    ARRIVAL = "arrival"


@dataclass(frozen=True)
class GeneratorSpec:
    """A block of identical thermal units sharing one commitment count."""

    name: str
    count: int
    unit_capacity: float  # GW per unit
    msg_fraction: float  # minimum stable generation as a share of capacity
    inertia_constant: float  # s on unit base
    marginal_cost: float  # pounds/MWh
    no_load_cost: float = 0.0  # pounds/h per committed unit
    startup_cost: float = 0.0  # pounds per unit startup
    min_up_hours: float = 0.0
    min_down_hours: float = 0.0
    commitment_lead_hours: float = 0.0
    must_run: bool = False
    max_pfr_share: float = 0.0  # share of spare headroom offerable as PFR
    emission_factor: float = 0.0  # tCO2/MWh

    @property
    def unit_msg(self) -> float:
        return self.msg_fraction * self.unit_capacity

    @property
    def block_capacity(self) -> float:
        return self.count * self.unit_capacity

    def errors(self) -> list[str]:
        out = []
        if self.count < 1:
            out.append(f"generator {self.name}: count must be >= 1")
        if self.unit_capacity <= 0:
            out.append(f"generator {self.name}: unit_capacity must be positive")
        if not 0.0 <= self.msg_fraction <= 1.0:
            out.append(f"generator {self.name}: msg_fraction must lie in [0, 1]")
        if self.inertia_constant < 0:
            out.append(f"generator {self.name}: inertia_constant must be nonnegative")
        if min(self.min_up_hours, self.min_down_hours, self.commitment_lead_hours) < 0:
            out.append(f"generator {self.name}: time parameters must be nonnegative")
        if not 0.0 <= self.max_pfr_share <= 1.0:
            out.append(f"generator {self.name}: max_pfr_share must lie in [0, 1]")
        return out


@dataclass(frozen=True)
class StorageSpec:
    """Grid-scale storage; ``service`` names the FR product it can offer."""

    name: str
    power_capacity: float  # GW
    energy_capacity: float  # GWh
    efficiency: float  # one-way
    service: str = "none"  # efr | pfr | none
    fr_limit: float | None = None  # optional cap on the offered FR volume (GW)
    soc_min: float = 0.0
    soc_max: float = 1.0
    initial_soc: float = 0.5

    def errors(self) -> list[str]:
        out = []
        if self.power_capacity <= 0 or self.energy_capacity <= 0:
            out.append(f"storage {self.name}: capacities must be positive")
        if not 0.0 < self.efficiency <= 1.0:
            out.append(f"storage {self.name}: efficiency must lie in (0, 1]")
        if self.service not in ("efr", "pfr", "none"):
            out.append(f"storage {self.name}: service must be efr, pfr or none")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            out.append(f"storage {self.name}: need 0 <= soc_min < soc_max <= 1")
        if not self.soc_min <= self.initial_soc <= self.soc_max:
            out.append(f"storage {self.name}: initial_soc outside SOC bounds")
        return out


@dataclass(frozen=True)
class EvFleetSpec:
    """Commuter EV fleet, aggregated into a single shared-SOC battery."""

    n_ev: int
    battery_kwh: float = 40.0
    charger_kw: float = 10.0
    efficiency: float = 0.96
    soc_min: float = 0.2
    soc_max: float = 0.9
    c_out: float = 0.9  # required SOC at departure
    c_in: float = 0.625  # SOC on return
    t_out_hour: float = 8.0
    t_in_hour: float = 16.0
    unmanaged_t_out_hour: float = 21.0
    regime: Regime = Regime.V2G
    fr_enabled: bool = True

    def errors(self) -> list[str]:
        out = []
        if self.n_ev < 0:
            out.append("fleet: n_ev must be nonnegative")
        if self.battery_kwh <= 0 or self.charger_kw <= 0:
            out.append("fleet: battery_kwh and charger_kw must be positive")
        if not 0.0 < self.efficiency <= 1.0:
            out.append("fleet: efficiency must lie in (0, 1]")
        if not 0.0 <= self.soc_min < self.soc_max <= 1.0:
            out.append("fleet: need 0 <= soc_min < soc_max <= 1")
        if not self.soc_min <= self.c_in <= self.c_out <= self.soc_max:
            out.append("fleet: need soc_min <= c_in <= c_out <= soc_max")
        if not 0.0 <= self.t_out_hour < self.t_in_hour < 24.0:
            out.append("fleet: need 0 <= t_out < t_in within the day")
        if not self.t_in_hour <= self.unmanaged_t_out_hour < 24.0:
            out.append("fleet: unmanaged reconnection must not precede the return")
        for name in ("t_out_hour", "t_in_hour", "unmanaged_t_out_hour"):
            if abs(getattr(self, name) / STEP_HOURS - round(getattr(self, name) / STEP_HOURS)) > 1e-9:
                out.append(f"fleet: {name} must align to the half-hour grid")
        return out

    @property
    def window_end_hour(self) -> float:
        """Clock hour at which the fleet is back on the grid."""
        if self.regime is Regime.UNMANAGED:
            return self.unmanaged_t_out_hour
        return self.t_in_hour


@dataclass(frozen=True)
class AggregateBattery:
    """Fleet-level battery: capacities scale linearly with fleet size."""

    energy_capacity: float  # GWh
    power_capacity: float  # GW


def aggregate_fleet(fleet: EvFleetSpec) -> AggregateBattery:
    return AggregateBattery(
        energy_capacity=fleet.n_ev * fleet.battery_kwh * 1e-6,
        power_capacity=fleet.n_ev * fleet.charger_kw * 1e-6,
    )


def driving_energy_gwh(fleet: EvFleetSpec) -> float:
    """Energy drawn from fleet batteries over one workday of driving."""
    return (fleet.c_out - fleet.c_in) * fleet.battery_kwh * fleet.n_ev * 1e-6


def _clock_hour(t: datetime) -> float:
    return t.hour + t.minute / 60.0 + t.second / 3600.0


def fleet_window(fleet: EvFleetSpec, t: datetime) -> AvailabilityState:
    """Availability of the aggregated fleet at calendar time t.

    Weekends are fully connected.  On weekdays the fleet is away
    between the departure and the regime's reconnection time; the exact
    boundary instants are flagged so departure-SOC and return-SOC
    conditions attach to the right tree nodes.
    """
    if t.weekday() >= 5:
        return AvailabilityState.CONNECTED
    clock = _clock_hour(t)
    end = fleet.window_end_hour
    if abs(clock - fleet.t_out_hour) < 1e-9:
        return AvailabilityState.DEPARTURE
    if abs(clock - end) < 1e-9:
        return AvailabilityState.ARRIVAL
    if fleet.t_out_hour < clock < end:
        return AvailabilityState.DRIVING
    return AvailabilityState.CONNECTED


def disconnected_soc(fleet: EvFleetSpec, t: datetime) -> float:
    """Normalised fleet SOC while off-grid: linear drawdown over the
    driving hours, then parked at the return SOC until reconnection."""
    clock = _clock_hour(t)
    if clock <= fleet.t_out_hour:
        return fleet.c_out
    if clock >= fleet.t_in_hour:
        return fleet.c_in
    frac = (clock - fleet.t_out_hour) / (fleet.t_in_hour - fleet.t_out_hour)
    return fleet.c_out + (fleet.c_in - fleet.c_out) * frac


@dataclass
class DemandTrace:
    """Half-hourly demand in GW, extended periodically beyond its end."""

    start: datetime
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            raise ValueError("demand trace must not be empty")
        if np.any(self.values <= 0):
            raise ValueError("demand must be strictly positive")

    def at(self, t: datetime) -> float:
        offset = (t - self.start).total_seconds() / 3600.0
        idx = int(math.floor(offset / STEP_HOURS + 1e-9)) % len(self.values)
        return float(self.values[idx])

    def mean_over(self, t: datetime, hours: float) -> float:
        n = max(1, round(hours / STEP_HOURS))
        return float(
            np.mean([self.at(t + timedelta(hours=k * STEP_HOURS)) for k in range(n)])
        )


def synthetic_demand(
    start: datetime,
    min_gw: float,
    max_gw: float,
    weekend_factor: float = 0.93,
) -> DemandTrace:
    """One-week two-peak profile scaled into [min_gw, max_gw].

    Morning and evening peaks on a shallow diurnal swell; weekend days
    scaled down.  Deterministic, half-hourly, repeats weekly.
    """
    if not 0 < min_gw < max_gw:
        raise ValueError("need 0 < min_gw < max_gw")
    hours = np.arange(0.0, 7 * 24.0, STEP_HOURS)
    clock = hours % 24.0
    shape = (
        0.28 * np.exp(-(((clock - 8.0) / 2.1) ** 2))
        + 0.42 * np.exp(-(((clock - 18.2) / 2.9) ** 2))
        + 0.18 * np.cos(2.0 * np.pi * (clock - 14.0) / 24.0)
    )
    shape = (shape - shape.min()) / (shape.max() - shape.min())
    values = min_gw + (max_gw - min_gw) * shape
    weekend = ((hours // 24.0).astype(int) % 7) >= 5
    values = np.where(weekend, np.maximum(min_gw, values * weekend_factor), values)
    return DemandTrace(start=start, values=values)


def read_demand_csv(path: str, start: datetime | None = None) -> DemandTrace:
    """Load a (time_iso8601, demand_gw) trace at half-hourly resolution."""
    times: list[datetime] = []
    vals: list[float] = []
    with open(path, newline="") as f:
        for row in csv.reader(r for r in f if not r.startswith("#")):
            if not row or row[0] == "time_iso8601":
                continue
            times.append(datetime.fromisoformat(row[0]))
            vals.append(float(row[1]))
    if not times:
        raise ValueError(f"no demand rows found in {path}")
    for a, b in zip(times, times[1:]):
        if abs((b - a).total_seconds() / 3600.0 - STEP_HOURS) > 1e-9:
            raise ValueError("demand trace must be uniformly half-hourly")
    return DemandTrace(start=start or times[0], values=np.array(vals))


@dataclass
class SystemSpec:
    """Everything the unit commitment needs to know about the grid."""

    generators: list[GeneratorSpec]
    storages: list[StorageSpec]
    fleet: EvFleetSpec | None
    wind: WindModel
    demand: DemandTrace
    freq: FrequencyParams
    degradation: DegradationParams = field(default_factory=DegradationParams)
    voll: float = 30000.0  # pounds/MWh
    loss_block: str | None = None  # block the lost infeed belongs to

    def errors(self) -> list[str]:
        out: list[str] = []
        if not self.generators:
            out.append("generators: at least one thermal block required")
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            out.append("generators: block names must be unique")
        for g in self.generators:
            out.extend(g.errors())
        snames = [s.name for s in self.storages]
        if len(set(snames)) != len(snames):
            out.append("storages: names must be unique")
        for s in self.storages:
            out.extend(s.errors())
        if self.fleet is not None:
            out.extend(self.fleet.errors())
        if self.voll <= 0:
            out.append("voll: must be positive")
        if self.loss_block is not None and self.loss_block not in names:
            out.append(f"loss_block: '{self.loss_block}' does not name a generator block")
        try:
            self.freq.validate()
        except ValueError as e:
            out.append(f"frequency: {e}")
        return out

    def validate(self) -> None:
        errs = self.errors()
        if errs:
            raise ValueError("invalid system spec:\n  " + "\n  ".join(errs))

    @property
    def thermal_capacity(self) -> float:
        return sum(g.block_capacity for g in self.generators)

    @property
    def loss_inertia_offset(self) -> float:
        """Stored energy of the lost unit, excluded from post-loss inertia."""
        if self.loss_block is None:
            return 0.0
        block = next(g for g in self.generators if g.name == self.loss_block)
        return block.inertia_constant * self.freq.p_l

    def avg_inertia_constant(self) -> float:
        cap = self.thermal_capacity
        return sum(g.inertia_constant * g.block_capacity for g in self.generators) / cap

    def avg_msg_fraction(self) -> float:
        cap = self.thermal_capacity
        return sum(g.msg_fraction * g.block_capacity for g in self.generators) / cap


def window_anchor_offsets(
    fleet: EvFleetSpec | None, t_now: datetime, horizon: float
) -> list[float]:
    """Hour offsets of fleet window events inside the horizon.

    Used as mandatory stage boundaries when the tree is coarsened, so
    departure/return instants always land on a node.
    """
    if fleet is None or fleet.n_ev == 0:
        return []
    events = {fleet.t_out_hour, fleet.t_in_hour, fleet.window_end_hour}
    out = []
    for day in range(int(horizon // 24.0) + 2):
        midnight = (t_now + timedelta(days=day)).replace(
            hour=0, minute=0, second=0, microsecond=0
        )
        for ev in events:
            t = midnight + timedelta(hours=ev)
            off = (t - t_now).total_seconds() / 3600.0
            if 0.0 < off <= horizon:
                out.append(round(off, 6))
    return sorted(set(out))
