"""Wind model statistics and scenario tree construction."""

import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from evsuc.wind import (
    STEP_HOURS,
    LogisticTransform,
    ScenarioTree,
    WindModel,
    build_tree,
    midpoint_weights,
    sample_wind_path,
    write_wind_csv,
)

T0 = datetime(2025, 1, 6)


def quadrature_mean_gw(model: WindModel) -> float:
    """Stationary mean output by adaptive quadrature over the latent
    density; independent of the model's own Gauss-Hermite routine."""
    s = model.stationary_std
    f = lambda x: model.wind_from_latent(x) * stats.norm.pdf(x, 0.0, s)
    return integrate.quad(f, -10 * s, 10 * s, limit=200)[0]


def quadrature_var_gw2(model: WindModel) -> float:
    s = model.stationary_std
    f = lambda x: model.wind_from_latent(x) ** 2 * stats.norm.pdf(x, 0.0, s)
    return integrate.quad(f, -10 * s, 10 * s, limit=200)[0] - quadrature_mean_gw(model) ** 2


# --- model ------------------------------------------------------------------

def test_transform_is_monotone_and_anchored_at_half():
    tr = LogisticTransform()
    assert tr.forward(0.0) == pytest.approx(0.5)
    xs = np.linspace(-8, 8, 200)
    ys = tr.forward(xs)
    assert (np.diff(ys) > 0).all()
    assert ys.min() > 0.0 and ys.max() < 1.0


def test_transform_inverse_roundtrip():
    tr = LogisticTransform()
    for w in (0.01, 0.3, 0.5, 0.7, 0.99):
        assert tr.forward(tr.inverse(w)) == pytest.approx(w, rel=1e-9)


def test_model_validation():
    with pytest.raises(ValueError):
        WindModel(installed_capacity=0.0)
    with pytest.raises(ValueError):
        WindModel(installed_capacity=10.0, ar_coefficient=1.0)
    with pytest.raises(ValueError):
        LogisticTransform(scale_low=0.0)


def test_empirical_mean_matches_quadrature_oracle():
    # 1e5-step sample against the stationary mean computed by direct
    # integration; the 3-sigma band inflates the iid variance by the
    # AR(1) autocorrelation factor (1+rho)/(1-rho)
    model = WindModel(installed_capacity=30.0)
    n = 100_000
    mu = quadrature_mean_gw(model)
    var = quadrature_var_gw2(model)
    rho = model.ar_coefficient
    sigma_mean = math.sqrt(var / n * (1 + rho) / (1 - rho))
    path = sample_wind_path(model, seed=123, steps=n)
    assert abs(path.mean() - mu) <= 3.0 * sigma_mean


def test_capacity_factor_close_to_exact_integral():
    # Gauss-Hermite struggles a little with the scale kink at zero, so
    # allow 0.5% relative; the default transform lands near 0.38
    model = WindModel(installed_capacity=30.0)
    exact = quadrature_mean_gw(model) / model.installed_capacity
    assert model.capacity_factor() == pytest.approx(exact, rel=5e-3)
    assert 0.3 < model.capacity_factor() < 0.45


def test_sample_path_bounds_and_determinism():
    model = WindModel(installed_capacity=12.0)
    a = sample_wind_path(model, seed=9, steps=500)
    b = sample_wind_path(model, seed=9, steps=500)
    c = sample_wind_path(model, seed=10, steps=500)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert (a >= 0).all() and (a <= 12.0).all()
    with pytest.raises(ValueError):
        sample_wind_path(model, seed=0, steps=0)


def test_sample_path_honours_initial_wind():
    model = WindModel(installed_capacity=12.0, noise_std=0.0)
    # noise-free: the path decays from the initial latent state
    path = sample_wind_path(model, seed=0, steps=3, initial_wind=10.0)
    x0 = model.latent_from_wind(10.0)
    expect = [model.wind_from_latent(x0 * model.ar_coefficient ** (k + 1)) for k in range(3)]
    assert path == pytest.approx(expect, rel=1e-12)


def test_conditional_quantiles_are_ordered_and_converge():
    model = WindModel(installed_capacity=20.0)
    x0 = model.latent_from_wind(8.0)
    for lead in (1, 4, 48):
        qs = [model.quantile_wind(x0, lead, q) for q in (0.1, 0.5, 0.9)]
        assert qs[0] < qs[1] < qs[2]
    # far ahead the conditional quantiles approach the stationary ones
    far = model.quantile_wind(x0, 10_000, 0.5)
    assert far == pytest.approx(model.wind_from_latent(0.0), rel=1e-6)


# --- midpoint weights -------------------------------------------------------

def test_midpoint_weights_examples():
    assert midpoint_weights([0.5]) == [1.0]
    w = midpoint_weights([0.1, 0.5, 0.9])
    assert w == pytest.approx([0.3, 0.4, 0.3])
    assert sum(w) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=0.99), min_size=1,
                max_size=9, unique=True))
def test_midpoint_weights_sum_to_one(qs):
    w = midpoint_weights(sorted(qs))
    assert sum(w) == pytest.approx(1.0)
    assert all(x > 0 for x in w)


# --- scenario tree ----------------------------------------------------------

def test_node_count_uniform_stepping():
    model = WindModel(installed_capacity=30.0)
    qs = [0.05, 0.15, 0.3, 0.5, 0.7, 0.85, 0.95]
    tree = build_tree(model, 9.0, T0, qs, horizon=24.0, step=0.5)
    assert len(tree.nodes) == 1 + 7 * 48 == 337


def test_single_quantile_tree_is_degenerate():
    model = WindModel(installed_capacity=30.0)
    tree = build_tree(model, 9.0, T0, [0.5], horizon=4.0, step=0.5)
    assert all(n.probability == pytest.approx(1.0) for n in tree.nodes)
    assert all(len(n.children) <= 1 for n in tree.nodes)


def test_tree_structure_invariants():
    model = WindModel(installed_capacity=30.0)
    tree = build_tree(model, 9.0, T0, [0.2, 0.5, 0.8], horizon=6.0, step=0.5)
    tree.validate()
    root = tree.root
    assert root.parent is None
    assert root.probability == 1.0
    assert root.wind_available == pytest.approx(9.0)
    assert len(root.children) == 3
    # each branch is a chain of quantile trajectories
    leaf_mass = sum(tree.nodes[i].probability for i in range(len(tree.nodes))
                    if not tree.nodes[i].children)
    assert leaf_mass == pytest.approx(1.0)


def test_tree_wind_monotone_across_quantiles():
    model = WindModel(installed_capacity=30.0)
    tree = build_tree(model, 9.0, T0, [0.2, 0.5, 0.8], horizon=4.0, step=0.5)
    lo, mid, hi = (tree.nodes[c] for c in tree.root.children)
    while True:
        assert lo.wind_available < mid.wind_available < hi.wind_available
        if not lo.children:
            break
        lo, mid, hi = (tree.nodes[n.children[0]] for n in (lo, mid, hi))


def test_coarsening_reduces_node_count_and_respects_anchors():
    model = WindModel(installed_capacity=30.0)
    fine = build_tree(model, 9.0, T0, [0.2, 0.8], horizon=12.0, step=0.5)
    coarse = build_tree(model, 9.0, T0, [0.2, 0.8], horizon=12.0, step=0.5,
                        coarsen=[(2.0, 1.0), (4.0, 2.0)])
    assert len(coarse.nodes) < len(fine.nodes)
    coarse.validate()
    anchored = build_tree(model, 9.0, T0, [0.2, 0.8], horizon=12.0, step=0.5,
                          coarsen=[(2.0, 1.0), (4.0, 2.0)], anchors=[5.0])
    offs = {round((n.t_ab - T0).total_seconds() / 3600.0, 6) for n in anchored.nodes}
    assert 5.0 in offs
    anchored.validate()


def test_tree_rejects_bad_inputs():
    model = WindModel(installed_capacity=30.0)
    with pytest.raises(ValueError):
        build_tree(model, 9.0, T0, [], horizon=4.0, step=0.5)
    with pytest.raises(ValueError):
        build_tree(model, 9.0, T0, [0.9, 0.1], horizon=4.0, step=0.5)
    with pytest.raises(ValueError):
        build_tree(model, 9.0, T0, [0.5], horizon=4.0, step=0.5,
                   coarsen=[(2.0, 0.75)])
    with pytest.raises(ValueError):
        build_tree(model, 9.0, T0, [0.5], horizon=4.3, step=0.5)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=5),
    st.floats(min_value=0.5, max_value=29.5),
    st.integers(min_value=2, max_value=24),
)
def test_tree_probability_and_time_invariants(n_q, w0, n_steps):
    model = WindModel(installed_capacity=30.0)
    qs = np.linspace(0.1, 0.9, n_q)
    tree = build_tree(model, w0, T0, list(qs), horizon=n_steps * 0.5, step=0.5)
    tree.validate()
    assert len(tree.nodes) == 1 + n_q * n_steps
    assert all(0.0 <= n.wind_available <= 30.0 for n in tree.nodes)


def test_write_wind_csv(tmp_path):
    path = tmp_path / "wind.csv"
    write_wind_csv([1.0, 2.5], T0, str(path), config_hash="abc123")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=abc123"
    assert lines[1] == "step_index,time_iso8601,wind_gw"
    assert lines[2] == "0,2025-01-06T00:00:00,1.000000"
    assert lines[3].startswith("1,2025-01-06T00:30:00,2.5")
