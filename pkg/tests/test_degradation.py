"""Calendar fade model: published coefficients and the linear under-fit."""

import math

import pytest
from hypothesis import given, strategies as st

from evsuc.degradation import (
    DegradationParams,
    fade_cubic,
    fade_linear,
    fit_linear_cuts,
    fleet_fade_cost,
    workday_fade,
)

P = DegradationParams()


def test_cubic_at_midpoint_is_constant_term():
    # the cubic term vanishes at soc 0.5
    assert fade_cubic(0.5) == pytest.approx(5.70e-5, rel=1e-12)


def test_cubic_at_boundaries():
    assert fade_cubic(0.9) == pytest.approx(9.348e-5, rel=1e-6)
    assert fade_cubic(0.2) == pytest.approx(4.161e-5, rel=1e-6)


def test_boundary_ratio():
    # min:max fade over the usable SOC range
    ratio = fade_cubic(0.2) / fade_cubic(0.9)
    assert abs(ratio - 0.45) < 0.005


def test_shoulder_is_midway_between_boundary_fades():
    mid = 0.5 * (fade_cubic(0.2) + fade_cubic(0.9))
    assert abs(fade_cubic(P.shoulder) - mid) / mid < 0.01


def test_linear_rate_takes_active_cut():
    # below the crossover the shallow line wins, above it the steep one
    assert fade_linear(0.2) == pytest.approx(4.842e-5, rel=1e-9)
    assert fade_linear(0.9) == pytest.approx(9.16e-5, rel=1e-9)
    assert fade_linear(0.9) == pytest.approx(
        max(P.alpha1 * 0.9 + P.alpha2, P.beta1 * 0.9 + P.beta2)
    )


def test_linear_tracks_cubic_within_15_percent_inside_range():
    # the published fit quality holds away from the lower boundary;
    # the boundary itself is pinned separately below
    for k in range(1001):
        soc = 0.21 + 0.69 * k / 1000
        assert abs(fade_linear(soc) - fade_cubic(soc)) <= 0.15 * fade_cubic(soc)


def test_linear_fit_overshoot_is_pinned():
    # Both shipped lines cross the cubic, so strictly this is not an
    # under-approximation: worst overshoot 6.81e-6 %/h sits at soc 0.2.
    # Pin it so a coefficient change gets noticed; the 5e-6 bound is
    # asserted (and currently not met) in the acceptance suite.
    grid = [0.2 + 0.7 * k / 1000 for k in range(1001)]
    worst = max(fade_linear(s) - fade_cubic(s) for s in grid)
    assert worst == pytest.approx(6.81e-6, abs=5e-8)
    assert fade_linear(0.2) - fade_cubic(0.2) == pytest.approx(worst)
    # everywhere else the overshoot stays small
    assert max(fade_linear(s) - fade_cubic(s) for s in grid if s > 0.25) < 2.5e-6


def test_shipped_coefficients_match_regression_construction():
    # re-running the documented least-squares fit lands within 1% of
    # the shipped numbers on every coefficient
    refit = fit_linear_cuts()
    shipped = (P.alpha1, P.alpha2, P.beta1, P.beta2)
    for got, ref in zip(refit, shipped):
        assert abs(got - ref) <= 0.01 * abs(ref)


def test_refit_rejects_shoulder_outside_range():
    with pytest.raises(ValueError):
        fit_linear_cuts(soc_min=0.8, soc_max=0.9)


def test_fleet_cost_arithmetic():
    assert fleet_fade_cost(5.7e-5, 1.0, 1, 1500.0) == pytest.approx(0.0855)
    # a full replacement-worth of fade: 20% at 1,500 per percent
    assert fleet_fade_cost(20.0, 1.0, 1, 1500.0) == pytest.approx(30000.0)
    assert fleet_fade_cost(5.7e-5, 1.0, 0, 1500.0) == 0.0


def test_workday_fade_published_values():
    # four hours parked at each of the departure and return SOCs
    exact = 4 * fade_cubic(0.9) + 4 * fade_cubic(0.625)
    assert workday_fade(0.9, 0.625) == pytest.approx(exact, rel=1e-12)
    assert workday_fade(0.9, 0.625) == pytest.approx(6.064e-4, rel=1e-4)


def test_workday_fade_without_cubic_term_is_soc_independent():
    flat = DegradationParams(a1=0.0)
    assert workday_fade(0.9, 0.2, flat) == pytest.approx(8 * flat.a2)
    assert workday_fade(0.5, 0.5, flat) == pytest.approx(8 * flat.a2)


@given(st.floats(min_value=0.2, max_value=1.0))
def test_cubic_rate_positive_on_usable_range(soc):
    # the fit is only meant for the usable SOC window and above;
    # below 0.2 the cubic extrapolates negative
    assert fade_cubic(soc) > 0.0


@given(
    st.floats(min_value=0.2, max_value=0.9),
    st.floats(min_value=0.2, max_value=0.9),
)
def test_cubic_monotone_in_soc(a, b):
    lo, hi = sorted((a, b))
    assert fade_cubic(lo) <= fade_cubic(hi) + 1e-18


@given(
    st.floats(min_value=0.0, max_value=100.0),
    st.floats(min_value=0.0, max_value=48.0),
    st.integers(min_value=0, max_value=10**6),
)
def test_fleet_cost_scales_linearly(rate, hours, n_ev):
    one = fleet_fade_cost(rate, hours, 1, P.cost_per_percent)
    lot = fleet_fade_cost(rate, hours, n_ev, P.cost_per_percent)
    assert math.isclose(lot, one * n_ev, rel_tol=1e-12, abs_tol=1e-12)
