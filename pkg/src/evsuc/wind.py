"""Aggregated wind model and the scenario trees built from it.

Latent AR(1) Gaussian process per half-hour step, pushed through a
monotone logistic-shaped transform onto [0, installed capacity].  The
transform is skewed so the long-run capacity factor sits below one
half, as for real fleets.  Conditional quantiles of the latent process
are available in closed form, which is what the tree builder uses:
branch once at the root into one chain per quantile level, with
probabilities by the midpoint rule so the extreme branches absorb the
tails.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Sequence

import numpy as np
from scipy import special, stats

__all__ = [
    "STEP_HOURS",
    "LogisticTransform",
    "WindModel",
    "TreeNode",
    "ScenarioTree",
    "sample_wind_path",
    "build_tree",
    "write_wind_csv",
]

#: Base resolution of the latent process and of the rolling horizon.
STEP_HOURS = 0.5


@dataclass(frozen=True)
class LogisticTransform:
    """Two-scale logistic map latent -> normalised output in (0, 1).

    Below the zero latent state the curve is a steep sigmoid, above it
    a gentle one, joined so forward(0) = 0.5: the median output is half
    of capacity while the slow upper branch keeps the long-run mean
    (capacity factor) well below one half, as for real fleets.  The
    defaults give a capacity factor of 0.38 with the default AR noise.
    """

    scale_low: float = 0.40
    scale_high: float = 2.69

    def __post_init__(self) -> None:
        if self.scale_low <= 0 or self.scale_high <= 0:
            raise ValueError("transform scales must be positive")

    def forward(self, x):
        x_arr = np.asarray(x, dtype=float)
        scale = np.where(x_arr < 0.0, self.scale_low, self.scale_high)
        out = special.expit(x_arr / scale)
        return float(out) if np.isscalar(x) else out

    def inverse(self, w: float) -> float:
        w = min(max(float(w), 1e-12), 1.0 - 1e-12)
        scale = self.scale_low if w < 0.5 else self.scale_high
        return scale * float(special.logit(w))


@dataclass(frozen=True)
class WindModel:
    """Fleet-aggregated wind with AR(1) latent dynamics per half-hour."""

    installed_capacity: float  # GW
    ar_coefficient: float = 0.95
    noise_std: float = 0.32
    transform: LogisticTransform = field(default_factory=LogisticTransform)

    def __post_init__(self) -> None:
        if self.installed_capacity <= 0:
            raise ValueError("installed capacity must be positive")
        if not abs(self.ar_coefficient) < 1:
            raise ValueError("AR coefficient must satisfy |a| < 1 for stationarity")
        if self.noise_std < 0:
            raise ValueError("noise std must be nonnegative")

    @property
    def stationary_std(self) -> float:
        return self.noise_std / math.sqrt(1.0 - self.ar_coefficient**2)

    def latent_from_wind(self, wind_gw: float) -> float:
        return self.transform.inverse(wind_gw / self.installed_capacity)

    def wind_from_latent(self, x):
        return self.installed_capacity * self.transform.forward(x)

    def conditional_std(self, lead_steps: float) -> float:
        """Std of the latent state lead_steps half-hours ahead."""
        a2 = self.ar_coefficient ** (2.0 * lead_steps)
        return self.stationary_std * math.sqrt(max(1.0 - a2, 0.0))

    def quantile_wind(self, x0: float, lead_steps: float, q: float) -> float:
        """Conditional wind quantile: monotone transforms map quantiles."""
        mean = self.ar_coefficient**lead_steps * x0
        std = self.conditional_std(lead_steps)
        z = stats.norm.ppf(q) if std > 0 else 0.0
        return float(self.wind_from_latent(mean + z * std))

    def capacity_factor(self, n_quad: int = 120) -> float:
        """Long-run mean output as a fraction of capacity (Gauss-Hermite)."""
        nodes, weights = np.polynomial.hermite_e.hermegauss(n_quad)
        vals = self.transform.forward(nodes * self.stationary_std)
        return float(np.sum(weights * vals) / math.sqrt(2.0 * math.pi))


def sample_wind_path(
    model: WindModel,
    seed: int,
    steps: int,
    initial_wind: float | None = None,
) -> np.ndarray:
    """Simulate a realized half-hourly wind path (GW), deterministic per seed.

    The latent state starts at the median (transform inverse of 0.5)
    unless an initial wind level is given.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    rng = np.random.default_rng(seed)
    x = 0.0 if initial_wind is None else model.latent_from_wind(initial_wind)
    latent = np.empty(steps)
    for k in range(steps):
        x = model.ar_coefficient * x + rng.normal(0.0, model.noise_std)
        latent[k] = x
    return model.wind_from_latent(latent)


@dataclass
class TreeNode:
    """One node of the scenario tree.

    t_ab is the absolute start time of the node's interval, delta_tau
    its duration in hours; probability is the absolute mass of reaching
    the node.  Children are filled in by the tree builder.
    """

    index: int
    parent: int | None
    t_ab: datetime
    delta_tau: float
    probability: float
    wind_available: float
    children: list[int] = field(default_factory=list)


@dataclass
class ScenarioTree:
    nodes: list[TreeNode]
    quantiles: tuple[float, ...]
    horizon_hours: float

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def path_to_root(self, index: int) -> list[int]:
        """Node indices from the root down to (and including) index."""
        path = []
        cur: int | None = index
        while cur is not None:
            path.append(cur)
            cur = self.nodes[cur].parent
        return path[::-1]

    def validate(self) -> None:
        assert self.nodes[0].parent is None
        assert abs(self.nodes[0].probability - 1.0) < 1e-12
        by_depth: dict[float, float] = {}
        for n in self.nodes:
            if n.parent is not None:
                assert n.parent < n.index, "nodes must be in topological order"
                p = self.nodes[n.parent]
                dt = (n.t_ab - p.t_ab).total_seconds() / 3600.0
                assert abs(dt - p.delta_tau) < 1e-9
            assert n.delta_tau > 0
            assert 0.0 <= n.wind_available
            offset = (n.t_ab - self.nodes[0].t_ab).total_seconds() / 3600.0
            by_depth[round(offset, 6)] = by_depth.get(round(offset, 6), 0.0) + n.probability
        for total in by_depth.values():
            assert abs(total - 1.0) < 1e-9, "probability not conserved across a stage"


def midpoint_weights(quantiles: Sequence[float]) -> list[float]:
    """Probability mass per quantile branch, extremes absorbing the tails."""
    k = len(quantiles)
    if k == 1:
        return [1.0]
    mids = [0.0] + [(quantiles[i] + quantiles[i + 1]) / 2.0 for i in range(k - 1)] + [1.0]
    return [mids[i + 1] - mids[i] for i in range(k)]


def _stages(
    horizon: float,
    step: float,
    coarsen: Sequence[tuple[float, float]] | None,
    anchors: Sequence[float],
) -> list[tuple[float, float]]:
    """(start offset, duration) of every stage after the root.

    Stage starts run from ``step`` up to and including ``horizon``; the
    root occupies [0, step).  Coarsening entries (hours_ahead, step_h)
    switch to a longer step from that offset on; anchor offsets are
    re-inserted as boundaries so window events stay resolvable.
    """

    def step_at(t: float) -> float:
        cur = step
        for after, s in sorted(coarsen or ()):
            if after < step - 1e-9:
                raise ValueError("coarsening may only start at or after the base step")
            if s <= 0 or abs(s / step - round(s / step)) > 1e-9:
                raise ValueError("coarse steps must be positive multiples of the step")
            if t >= after - 1e-9:
                cur = s
        return cur

    if coarsen is None:
        n = round(horizon / step)
        if abs(n * step - horizon) > 1e-9:
            raise ValueError("horizon must be a multiple of the step")
        return [(k * step, step) for k in range(1, n + 1)]

    starts = set()
    t = 0.0
    while True:
        t = round(t + step_at(t), 6)
        if t > horizon + 1e-9:
            break
        starts.add(t)
    for a in anchors:
        if step - 1e-9 < a < horizon + 1e-9 and abs(a / step - round(a / step)) < 1e-9:
            starts.add(round(a, 6))
    ordered = sorted(starts)
    out = []
    for j, start in enumerate(ordered):
        if j + 1 < len(ordered):
            out.append((start, ordered[j + 1] - start))
        else:
            out.append((start, step_at(start)))
    return out


def build_tree(
    model: WindModel,
    current_wind: float,
    t_now: datetime,
    quantiles: Sequence[float],
    horizon: float,
    step: float,
    coarsen: Sequence[tuple[float, float]] | None = None,
    anchors: Sequence[float] = (),
) -> ScenarioTree:
    """Scenario tree branching once at the root.

    Child k heads a non-branching chain whose wind follows the
    conditional quantile trajectory at level quantiles[k], conditioned
    on the current wind.  With the default uniform stepping the tree
    has 1 + len(quantiles) * (horizon / step) nodes.  ``coarsen`` is an
    optional list of (hours_ahead, step_hours) pairs that lengthens the
    stages deeper in the horizon; ``anchors`` are hour offsets that
    must remain stage boundaries (fleet window events) when coarsening.
    """
    if not quantiles:
        raise ValueError("quantile list must not be empty")
    if step <= 0:
        raise ValueError("step must be positive")
    qs = tuple(float(q) for q in quantiles)
    if any(not 0.0 < q < 1.0 for q in qs) or any(
        qs[i] >= qs[i + 1] for i in range(len(qs) - 1)
    ):
        raise ValueError("quantiles must be strictly increasing within (0, 1)")
    if horizon <= 0:
        raise ValueError("horizon must be positive")

    stages = _stages(horizon, step, coarsen, anchors)
    x0 = model.latent_from_wind(current_wind)
    weights = midpoint_weights(qs)

    nodes = [
        TreeNode(
            index=0,
            parent=None,
            t_ab=t_now,
            delta_tau=stages[0][0],
            probability=1.0,
            wind_available=float(current_wind),
        )
    ]
    for q, w in zip(qs, weights):
        parent = 0
        for off, dur in stages:
            node = TreeNode(
                index=len(nodes),
                parent=parent,
                t_ab=t_now + timedelta(hours=off),
                delta_tau=dur,
                probability=w,
                wind_available=model.quantile_wind(x0, off / STEP_HOURS, q),
            )
            nodes[parent].children.append(node.index)
            nodes.append(node)
            parent = node.index
    tree = ScenarioTree(nodes=nodes, quantiles=qs, horizon_hours=horizon)
    tree.validate()
    return tree


def write_wind_csv(
    values: Sequence[float],
    start: datetime,
    path: str,
    step_hours: float = STEP_HOURS,
    config_hash: str = "",
) -> None:
    """Realized wind path as (step_index, time_iso8601, wind_gw)."""
    with open(path, "w", newline="") as f:
        if config_hash:
            f.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(f)
        writer.writerow(["step_index", "time_iso8601", "wind_gw"])
        for k, v in enumerate(values):
            t = start + timedelta(hours=k * step_hours)
            writer.writerow([k, t.isoformat(), f"{float(v):.6f}"])
