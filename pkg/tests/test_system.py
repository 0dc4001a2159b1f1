"""Physical system specs: fleet aggregation, availability windows, demand."""

from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evsuc.frequency import FrequencyParams
from evsuc.system import (
    AvailabilityState,
    DemandTrace,
    EvFleetSpec,
    GeneratorSpec,
    Regime,
    StorageSpec,
    SystemSpec,
    aggregate_fleet,
    disconnected_soc,
    driving_energy_gwh,
    fleet_window,
    read_demand_csv,
    synthetic_demand,
    window_anchor_offsets,
)
from evsuc.wind import WindModel

MONDAY = datetime(2025, 1, 6)  # a Monday
SATURDAY = datetime(2025, 1, 11)


def fleet(n_ev=50_000, **kw):
    return EvFleetSpec(n_ev=n_ev, **kw)


# --- aggregation ------------------------------------------------------------

def test_aggregate_scales_with_fleet_size():
    agg = aggregate_fleet(fleet(50_000))
    assert agg.energy_capacity == pytest.approx(2.0)
    assert agg.power_capacity == pytest.approx(0.5)
    big = aggregate_fleet(fleet(300_000))
    assert big.energy_capacity == pytest.approx(12.0)
    # SOC 0.75 of the big fleet is 9 GWh
    assert 0.75 * big.energy_capacity == pytest.approx(9.0)
    empty = aggregate_fleet(fleet(0))
    assert empty.energy_capacity == 0.0 and empty.power_capacity == 0.0


def test_driving_energy():
    f = fleet(1)
    assert driving_energy_gwh(f) == pytest.approx(11e-6)  # 11 kWh per EV
    assert driving_energy_gwh(fleet(50_000)) == pytest.approx(0.55)
    same = fleet(50_000, c_out=0.7, c_in=0.7)
    assert driving_energy_gwh(same) == 0.0


# --- availability windows ---------------------------------------------------

def test_weekday_window_states():
    f = fleet()
    assert fleet_window(f, MONDAY.replace(hour=10)) is AvailabilityState.DRIVING
    assert fleet_window(f, MONDAY.replace(hour=8)) is AvailabilityState.DEPARTURE
    assert fleet_window(f, MONDAY.replace(hour=16)) is AvailabilityState.ARRIVAL
    assert fleet_window(f, MONDAY.replace(hour=7, minute=30)) is AvailabilityState.CONNECTED
    assert fleet_window(f, MONDAY.replace(hour=23)) is AvailabilityState.CONNECTED


def test_weekend_fully_connected():
    f = fleet()
    for hour in (0, 8, 10, 16, 21):
        assert fleet_window(f, SATURDAY.replace(hour=hour)) is AvailabilityState.CONNECTED


def test_unmanaged_window_extends_to_evening():
    f = fleet(regime=Regime.UNMANAGED)
    assert f.window_end_hour == 21.0
    assert fleet_window(f, MONDAY.replace(hour=18)) is AvailabilityState.DRIVING
    assert fleet_window(f, MONDAY.replace(hour=21)) is AvailabilityState.ARRIVAL
    assert fleet_window(f, MONDAY.replace(hour=22)) is AvailabilityState.CONNECTED


def test_disconnected_soc_profile():
    f = fleet()
    assert disconnected_soc(f, MONDAY.replace(hour=8)) == pytest.approx(0.9)
    assert disconnected_soc(f, MONDAY.replace(hour=12)) == pytest.approx(
        (0.9 + 0.625) / 2
    )
    assert disconnected_soc(f, MONDAY.replace(hour=16)) == pytest.approx(0.625)
    # parked at the return SOC until reconnection
    assert disconnected_soc(f, MONDAY.replace(hour=19)) == pytest.approx(0.625)


def test_fleet_validation():
    assert fleet().errors() == []
    assert fleet(n_ev=-1).errors()
    assert fleet(c_out=0.5, c_in=0.7).errors()
    assert fleet(t_out_hour=17.0, t_in_hour=9.0).errors()
    assert fleet(unmanaged_t_out_hour=9.0).errors()
    assert fleet(t_out_hour=8.25).errors()  # off the half-hour grid


def test_window_anchor_offsets():
    f = fleet()
    offs = window_anchor_offsets(f, MONDAY, horizon=24.0)
    assert 8.0 in offs and 16.0 in offs
    assert all(0.0 < o <= 24.0 for o in offs)
    # from mid-morning the departure lands tomorrow
    offs2 = window_anchor_offsets(f, MONDAY.replace(hour=10), horizon=24.0)
    assert 6.0 in offs2 and 22.0 in offs2
    assert window_anchor_offsets(None, MONDAY, 24.0) == []
    assert window_anchor_offsets(fleet(0), MONDAY, 24.0) == []


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=7 * 48 - 1))
def test_window_states_partition_the_week(k):
    f = fleet()
    t = MONDAY + timedelta(hours=0.5 * k)
    state = fleet_window(f, t)
    clock = t.hour + t.minute / 60.0
    if t.weekday() >= 5:
        assert state is AvailabilityState.CONNECTED
    elif clock == f.t_out_hour:
        assert state is AvailabilityState.DEPARTURE
    elif clock == f.t_in_hour:
        assert state is AvailabilityState.ARRIVAL
    elif f.t_out_hour < clock < f.t_in_hour:
        assert state is AvailabilityState.DRIVING
    else:
        assert state is AvailabilityState.CONNECTED


# --- generators and storage -------------------------------------------------

def test_generator_block_properties():
    g = GeneratorSpec(name="ccgt", count=4, unit_capacity=0.3, msg_fraction=0.5,
                      inertia_constant=4.0, marginal_cost=47.0)
    assert g.unit_msg == pytest.approx(0.15)
    assert g.block_capacity == pytest.approx(1.2)
    assert g.errors() == []
    bad = GeneratorSpec(name="x", count=0, unit_capacity=-1.0, msg_fraction=2.0,
                        inertia_constant=-1.0, marginal_cost=10.0)
    assert len(bad.errors()) == 4


def test_storage_validation():
    ok = StorageSpec(name="bat", power_capacity=0.05, energy_capacity=0.2,
                     efficiency=0.9, service="efr")
    assert ok.errors() == []
    assert StorageSpec(name="b", power_capacity=0.0, energy_capacity=0.2,
                       efficiency=0.9).errors()
    assert StorageSpec(name="b", power_capacity=0.1, energy_capacity=0.2,
                       efficiency=0.9, service="ffr").errors()
    assert StorageSpec(name="b", power_capacity=0.1, energy_capacity=0.2,
                       efficiency=0.9, initial_soc=1.5).errors()


# --- demand -----------------------------------------------------------------

def test_synthetic_demand_shape():
    d = synthetic_demand(MONDAY, min_gw=3.5, max_gw=8.0)
    assert len(d.values) == 7 * 48
    assert d.values.min() == pytest.approx(3.5)
    assert d.values.max() == pytest.approx(8.0)
    # weekends are scaled down
    weekday_peak = d.values[:48].max()
    weekend_peak = d.values[5 * 48:6 * 48].max()
    assert weekend_peak < weekday_peak
    with pytest.raises(ValueError):
        synthetic_demand(MONDAY, min_gw=8.0, max_gw=3.5)


def test_demand_trace_lookup_and_wraparound():
    d = DemandTrace(start=MONDAY, values=[1.0, 2.0, 3.0, 4.0])
    assert d.at(MONDAY) == 1.0
    assert d.at(MONDAY + timedelta(minutes=30)) == 2.0
    assert d.at(MONDAY + timedelta(minutes=45)) == 2.0  # within the half hour
    assert d.at(MONDAY + timedelta(hours=2)) == 1.0  # periodic extension
    assert d.mean_over(MONDAY, 1.0) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        DemandTrace(start=MONDAY, values=[])
    with pytest.raises(ValueError):
        DemandTrace(start=MONDAY, values=[1.0, -2.0])


def test_read_demand_csv(tmp_path):
    p = tmp_path / "demand.csv"
    p.write_text(
        "time_iso8601,demand_gw\n"
        "2025-01-06T00:00:00,5.0\n"
        "2025-01-06T00:30:00,6.0\n"
    )
    d = read_demand_csv(str(p))
    assert d.at(MONDAY) == 5.0
    assert d.at(MONDAY + timedelta(minutes=30)) == 6.0
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "time_iso8601,demand_gw\n"
        "2025-01-06T00:00:00,5.0\n"
        "2025-01-06T02:00:00,6.0\n"
    )
    with pytest.raises(ValueError):
        read_demand_csv(str(bad))


# --- whole-system spec ------------------------------------------------------

def make_spec(**kw):
    base = dict(
        generators=[GeneratorSpec(name="ccgt", count=4, unit_capacity=0.3,
                                  msg_fraction=0.5, inertia_constant=4.0,
                                  marginal_cost=47.0)],
        storages=[],
        fleet=None,
        wind=WindModel(installed_capacity=2.0),
        demand=synthetic_demand(MONDAY, 0.8, 1.1),
        freq=FrequencyParams(p_l=0.3),
    )
    base.update(kw)
    return SystemSpec(**base)


def test_spec_validation_catches_duplicates_and_bad_loss_block():
    spec = make_spec()
    assert spec.errors() == []
    dup = make_spec(storages=[
        StorageSpec(name="b", power_capacity=0.1, energy_capacity=0.2, efficiency=0.9),
        StorageSpec(name="b", power_capacity=0.1, energy_capacity=0.2, efficiency=0.9),
    ])
    assert any("unique" in e for e in dup.errors())
    assert any("loss_block" in e for e in make_spec(loss_block="nope").errors())
    with pytest.raises(ValueError):
        make_spec(voll=-1.0).validate()


def test_spec_fleet_averages():
    spec = make_spec(generators=[
        GeneratorSpec(name="a", count=1, unit_capacity=1.0, msg_fraction=1.0,
                      inertia_constant=5.0, marginal_cost=10.0),
        GeneratorSpec(name="b", count=1, unit_capacity=3.0, msg_fraction=0.5,
                      inertia_constant=4.0, marginal_cost=50.0),
    ])
    assert spec.thermal_capacity == pytest.approx(4.0)
    assert spec.avg_inertia_constant() == pytest.approx((5.0 + 3 * 4.0) / 4.0)
    assert spec.avg_msg_fraction() == pytest.approx((1.0 + 3 * 0.5) / 4.0)


def test_loss_inertia_offset():
    spec = make_spec(loss_block="ccgt")
    assert spec.loss_inertia_offset == pytest.approx(4.0 * 0.3)
    assert make_spec().loss_inertia_offset == 0.0
