"""Frequency security: inertia floor, nadir algebra, swing oracle, cuts."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evsuc.frequency import (
    FrequencyParams,
    FrState,
    analytic_nadir,
    cut_at_state,
    min_inertia_for_nadir,
    mstg_curve,
    nadir_cuts,
    nadir_ok,
    nadir_terms,
    rocof_min_inertia,
    sign_cut,
    steady_state_ok,
    swing_nadir_oracle,
)

GB = FrequencyParams(f0=50.0, delta_f_max=0.8, rocof_max=1.0, p_l=1.8, t_e=1.0, t_p=10.0)


def random_feasible_states(freq, n, seed):
    """States in the polytope the commitment actually schedules within:
    inertia above the RoCoF floor, delivered FR covering the loss."""
    rng = np.random.default_rng(seed)
    floor = rocof_min_inertia(freq)
    out = []
    for _ in range(n):
        r_e = rng.uniform(0.0, 1.2 * freq.p_l)
        out.append(FrState(
            h=rng.uniform(floor, 6.0 * floor),
            r_e=r_e,
            r_p=rng.uniform(max(freq.p_l - r_e, 0.0), 2.0 * freq.p_l),
        ))
    return out


# --- RoCoF and steady state -------------------------------------------------

def test_rocof_floor_values():
    assert rocof_min_inertia(GB) == pytest.approx(45.0, abs=1e-12)
    tight = FrequencyParams(rocof_max=0.125, p_l=1.8)
    assert rocof_min_inertia(tight) == pytest.approx(360.0, abs=1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        rocof_min_inertia(FrequencyParams(p_l=0.0))
    with pytest.raises(ValueError):
        FrequencyParams(t_e=2.0, t_p=1.0).validate()


def test_steady_state_requires_full_cover():
    assert steady_state_ok(FrState(h=100.0, r_e=0.0, r_p=1.8), GB)
    assert not steady_state_ok(FrState(h=100.0, r_e=0.5, r_p=1.2), GB)


# --- nadir algebra ----------------------------------------------------------

def test_minimal_inertia_anchor_points():
    # PFR alone covering the loss, delivery 10 s then 1 s
    h10 = min_inertia_for_nadir(0.0, 1.8, GB)
    h1 = min_inertia_for_nadir(0.0, 1.8, FrequencyParams(t_p=1.0, t_e=0.5))
    assert h10 == pytest.approx(281.25, rel=1e-9)
    assert h1 == pytest.approx(28.125, rel=1e-9)
    # the 1 s value sits below the RoCoF floor, so RoCoF caps it
    assert h1 < rocof_min_inertia(GB)


def test_minimal_inertia_edge_cases():
    assert min_inertia_for_nadir(0.0, 0.0, GB) == math.inf
    # loss fully covered by EFR: only the sign face remains
    h = min_inertia_for_nadir(2.0, 0.0, GB)
    assert h == pytest.approx(GB.f0 * 2.0 * GB.t_e / (4 * GB.delta_f_max))


def test_nadir_rhs_clamps_at_full_cover():
    _, _, rhs = nadir_terms(FrState(h=100.0, r_e=2.5, r_p=0.0), GB)
    assert rhs == 0.0
    x1, _, _ = nadir_terms(FrState(h=100.0, r_e=2.5, r_p=0.0), GB)
    assert nadir_ok(FrState(h=100.0, r_e=2.5, r_p=0.0), GB) == (x1 >= 0)


def test_nadir_boundary_is_tight():
    st_on = FrState(h=281.25, r_e=0.0, r_p=1.8)
    assert nadir_ok(st_on, GB, tol=1e-9)
    assert not nadir_ok(FrState(h=281.25 - 0.01, r_e=0.0, r_p=1.8), GB, tol=1e-9)


# --- swing-equation oracle --------------------------------------------------

def test_oracle_at_equality_surface_anchor():
    dev = swing_nadir_oracle(FrState(h=281.25, r_e=0.0, r_p=1.8), GB)
    assert dev == pytest.approx(0.8, abs=1e-3)


def test_oracle_matches_boundary_on_random_surface_states():
    # states exactly on the equality surface, restricted to the regime
    # where the minimum lands after full EFR delivery (r_p t_e <=
    # (p_l - r_e) t_p); there the algebra is exact and the time-domain
    # drop must equal the transient limit within 0.1%
    rng = np.random.default_rng(3)
    n = 0
    while n < 50:
        r_e = rng.uniform(0.0, 0.9 * GB.p_l)
        r_p = rng.uniform(GB.p_l - r_e, 2.0 * GB.p_l)
        if r_p * GB.t_e > (GB.p_l - r_e) * GB.t_p:
            continue
        h = min_inertia_for_nadir(r_e, r_p, GB)
        dev = swing_nadir_oracle(FrState(h=h, r_e=r_e, r_p=r_p), GB, dt=1e-3)
        assert abs(dev - GB.delta_f_max) <= 1e-3 * GB.delta_f_max
        n += 1


def test_boundary_is_conservative_when_minimum_lands_early():
    # with plentiful PFR the frequency minimum can occur before EFR is
    # fully delivered; the algebraic surface then requires slightly more
    # inertia than physically necessary, never less
    rng = np.random.default_rng(4)
    n = 0
    while n < 50:
        r_e = rng.uniform(0.0, 0.9 * GB.p_l)
        r_p = rng.uniform(GB.p_l - r_e, 2.0 * GB.p_l)
        if r_p * GB.t_e <= (GB.p_l - r_e) * GB.t_p:
            continue
        h = min_inertia_for_nadir(r_e, r_p, GB)
        dev = swing_nadir_oracle(FrState(h=h, r_e=r_e, r_p=r_p), GB, dt=1e-3)
        assert dev <= GB.delta_f_max + 1e-9
        n += 1


def test_oracle_agrees_with_algebraic_check():
    band = 1e-3 * GB.delta_f_max
    for state in random_feasible_states(GB, 300, seed=11):
        dev = swing_nadir_oracle(state, GB, dt=1e-3)
        if abs(dev - GB.delta_f_max) <= band:
            continue  # boundary band, either answer is acceptable
        assert nadir_ok(state, GB) == (dev <= GB.delta_f_max)


def test_analytic_nadir_matches_integrator():
    for state in random_feasible_states(GB, 100, seed=12):
        exact = analytic_nadir(state, GB)
        approx = swing_nadir_oracle(state, GB, dt=1e-3)
        assert abs(exact - approx) <= 2e-4 * max(1.0, exact)


def test_oracle_rejects_bad_inputs():
    with pytest.raises(ValueError):
        swing_nadir_oracle(FrState(h=0.0, r_e=0.0, r_p=1.8), GB)
    with pytest.raises(ValueError):
        swing_nadir_oracle(FrState(h=100.0, r_e=0.0, r_p=1.8), GB, dt=0.1)


# --- monotonicity -----------------------------------------------------------

H_FLOOR = rocof_min_inertia(GB)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=H_FLOOR, max_value=6 * H_FLOOR),
    st.floats(min_value=0.0, max_value=1.2 * GB.p_l),
    st.floats(min_value=0.0, max_value=2.0 * GB.p_l),
    st.floats(min_value=0.0, max_value=2 * H_FLOOR),
)
def test_feasibility_monotone_in_inertia(h, r_e, r_p, dh):
    if nadir_ok(FrState(h, r_e, r_p), GB):
        assert nadir_ok(FrState(h + dh, r_e, r_p), GB)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=H_FLOOR, max_value=6 * H_FLOOR),
    st.floats(min_value=0.0, max_value=1.0 * GB.p_l),
    st.floats(min_value=0.0, max_value=2.0 * GB.p_l),
    st.floats(min_value=0.0, max_value=0.2 * GB.p_l),
)
def test_feasibility_monotone_in_efr(h, r_e, r_p, dre):
    # within the scheduling box; far outside it the sign face can turn
    # extra EFR into a liability
    if nadir_ok(FrState(h, r_e, r_p), GB):
        assert nadir_ok(FrState(h, r_e + dre, r_p), GB)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(min_value=H_FLOOR, max_value=6 * H_FLOOR),
    st.floats(min_value=0.0, max_value=1.2 * GB.p_l),
    st.floats(min_value=0.0, max_value=2.0 * GB.p_l),
    st.floats(min_value=0.0, max_value=2.0 * GB.p_l),
)
def test_feasibility_monotone_in_pfr(h, r_e, r_p, drp):
    if nadir_ok(FrState(h, r_e, r_p), GB):
        assert nadir_ok(FrState(h, r_e, r_p + drp), GB)


# --- outer approximation ----------------------------------------------------

def _mc_box(freq, n, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0.0, 400.0, n)
    re = rng.uniform(0.0, freq.p_l, n)
    rp = rng.uniform(0.0, 2.0 * freq.p_l, n)
    return h, re, rp


def _conic_mask(freq, h, re, rp):
    x1 = h / freq.f0 - re * freq.t_e / (4 * freq.delta_f_max)
    rhs = np.maximum(freq.p_l - re, 0.0) ** 2 * freq.t_p / (4 * freq.delta_f_max)
    return (x1 >= 0) & (x1 * rp >= rhs)


def _cut_mask(cuts, h, re, rp):
    ok = np.ones_like(h, dtype=bool)
    for c in cuts:
        ok &= c.a_h * h + c.a_e * re + c.a_p * rp >= c.rhs - 1e-12
    return ok


def test_cuts_contain_conic_region():
    cuts = nadir_cuts(GB, [0.0, 0.9, 1.8])
    h, re, rp = _mc_box(GB, 10_000, seed=5)
    conic = _conic_mask(GB, h, re, rp)
    assert _cut_mask(cuts, h, re, rp)[conic].all()


def test_dense_grid_volume_excess_below_two_percent():
    cuts = nadir_cuts(GB, np.linspace(0.0, GB.p_l, 50, endpoint=False))
    h, re, rp = _mc_box(GB, 200_000, seed=42)
    conic = _conic_mask(GB, h, re, rp)
    approx = _cut_mask(cuts, h, re, rp)
    assert approx[conic].all()
    excess = (approx.mean() - conic.mean()) / conic.mean()
    assert 0.0 <= excess < 0.02


def test_cuts_at_zero_efr_are_tangent():
    # each cut touches the boundary hyperbola at its own reference point
    c_gain = GB.t_p / (4.0 * GB.delta_f_max)
    k = c_gain * GB.p_l**2
    for rp0 in (0.15 * GB.p_l, 0.7 * GB.p_l, 2.0 * GB.p_l):
        cuts = nadir_cuts(GB, [0.0], rp_points=[rp0])
        boundary = FrState(h=GB.f0 * k / rp0, r_e=0.0, r_p=rp0)
        hyper = cuts[1]
        lhs = hyper.a_h * boundary.h + hyper.a_e * boundary.r_e + hyper.a_p * boundary.r_p
        assert lhs == pytest.approx(hyper.rhs, rel=1e-9)


def test_sign_cut_matches_first_factor():
    cut = sign_cut(GB)
    for state in random_feasible_states(GB, 50, seed=9):
        x1, _, _ = nadir_terms(state, GB)
        lhs = cut.a_h * state.h + cut.a_e * state.r_e + cut.a_p * state.r_p
        assert lhs == pytest.approx(x1, rel=1e-12, abs=1e-15)


def test_separating_cut_cuts_off_violating_state():
    rng = np.random.default_rng(7)
    h, re, rp = _mc_box(GB, 5_000, seed=8)
    conic = _conic_mask(GB, h, re, rp)
    tried = 0
    for i in range(len(h)):
        state = FrState(h[i], re[i], rp[i])
        if nadir_ok(state, GB):
            continue
        cut = cut_at_state(state, GB)
        assert not cut.satisfied(state, tol=-1e-12)
        # the cut never removes feasible points
        mask = _cut_mask([cut], h[conic], re[conic], rp[conic])
        assert mask.all()
        tried += 1
        if tried >= 20:
            break
    assert tried == 20


# --- minimum stable thermal generation --------------------------------------

def test_mstg_slow_delivery_decreasing_until_rocof_floor():
    levels = np.linspace(GB.p_l, 2 * GB.p_l, 40)
    pts = mstg_curve(GB, avg_inertia_s=4.5, msg_fraction=0.5,
                     delivery_time_s=10.0, fr_levels=levels)
    floor = 0.5 * rocof_min_inertia(GB) / 4.5
    prev = None
    for p in pts:
        if p.binding == "nadir":
            if prev is not None and prev.binding == "nadir":
                assert p.mstg_gw < prev.mstg_gw
        else:
            assert p.binding == "rocof"
            assert p.mstg_gw == pytest.approx(floor)
        prev = p


def test_mstg_fast_delivery_pointwise_below_slow():
    levels = np.linspace(GB.p_l, 2 * GB.p_l, 40)
    slow = mstg_curve(GB, 4.5, 0.5, 10.0, levels)
    fast = mstg_curve(GB, 4.5, 0.5, 1.0, levels)
    for f, s in zip(fast, slow):
        assert f.mstg_gw <= s.mstg_gw + 1e-12


def test_mstg_fast_delivery_floor_independent_of_fr():
    # with 1 s delivery RoCoF binds everywhere, so the curve is flat
    levels = np.linspace(1.5 * GB.p_l, 3 * GB.p_l, 10)
    pts = mstg_curve(GB, 4.5, 0.5, 1.0, levels)
    assert all(p.binding == "rocof" for p in pts)
    assert len({round(p.mstg_gw, 12) for p in pts}) == 1


def test_mstg_nadir_driven_just_above_loss():
    fr = GB.p_l * 1.001
    slow = mstg_curve(GB, 4.5, 0.5, 10.0, [fr])[0]
    fast = mstg_curve(GB, 4.5, 0.5, 1.0, [fr])[0]
    assert slow.binding == "nadir"
    assert slow.mstg_gw > fast.mstg_gw


def test_mstg_below_loss_is_undefined():
    pts = mstg_curve(GB, 4.5, 0.5, 10.0, [0.0, 0.5 * GB.p_l])
    assert all(math.isnan(p.mstg_gw) and p.binding == "steady_state" for p in pts)


def test_mstg_rejects_bad_fleet_averages():
    with pytest.raises(ValueError):
        mstg_curve(GB, 0.0, 0.5, 10.0, [GB.p_l])
    with pytest.raises(ValueError):
        mstg_curve(GB, 4.5, 1.5, 10.0, [GB.p_l])
