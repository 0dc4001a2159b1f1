"""Stochastic unit commitment over a wind scenario tree.

One decision vector per tree node (non-anticipativity holds by
construction), expected cost weighted by node probability:

    sum_n pi(n) * [ thermal cost + dtau(n) * (VOLL * shed
                    + degradation price * fleet fade) ]

Constraint families, by registry tag:
    balance          supply meets demand plus fleet charging
    gen-limits       stable-generation floor / capacity ceiling per block
    commitment       count dynamics u - u_parent = startups - shutdowns
    min-up/min-down  recently started (stopped) units stay on (off)
    commitment-lead  slow units start only if ordered a lead time ahead
    pfr-headroom     thermal PFR limited to a share of spare headroom
    storage-dyn      SOC recursion along tree edges
    storage-init     root SOC pinned to the measured state
    ev-window        fleet off-grid while driving, SOC exogenous
    ev-departure     full-charge requirement at departure instants
    fr-headroom      EFR/PFR offers within device power swing
    fr-energy        SOC backing sustained EFR delivery
    rocof            post-loss inertia floor
    steady-state     delivered FR covers the loss
    nadir            transient dip limit (supporting cuts, or conic)
    deg-cuts         fade variable above its two lower-bounding lines
    reserve          optional spare-headroom margin (off by default)

Thermal blocks cluster identical units behind one integer count, the
standard trick to keep the branch-and-bound tractable at fleet scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Sequence

import numpy as np

from .degradation import fade_linear
from .frequency import (
    FrState,
    NadirCut,
    cut_at_state,
    nadir_cuts,
    nadir_ok,
    rocof_min_inertia,
)
from .system import (
    AvailabilityState,
    EvFleetSpec,
    Regime,
    SystemSpec,
    aggregate_fleet,
    disconnected_soc,
    fleet_window,
)
from .wind import ScenarioTree

__all__ = [
    "UcOptions",
    "BlockState",
    "SystemState",
    "initial_state",
    "UcProblem",
    "NodeDecision",
    "build_problem",
    "fr_capability",
    "verify_solution",
    "InfeasibleWindowError",
]

#: EFR must be sustainable for the full delivery window from stored energy.
EFR_BACKING_HOURS = 120.0 / 3600.0


class InfeasibleWindowError(ValueError):
    """Departure SOC requirement unreachable at maximum charge rate."""

    def __init__(self, message: str, chain: Sequence[str]):
        super().__init__(message + " (binding chain: " + " -> ".join(chain) + ")")
        self.chain = list(chain)


@dataclass(frozen=True)
class UcOptions:
    frequency_secured: bool = True
    nadir_mode: str = "cuts"  # cuts | conic
    penalize_degradation: bool = False
    reserve_headroom: bool = False
    reserve_margin: float = 0.0
    nadir_re_points: int = 7
    nadir_rp_factors: tuple[float, ...] = (0.4, 0.6, 0.8, 1.0, 1.4, 2.0, 3.0)
    terminal_storage_soc: bool = True

    def __post_init__(self) -> None:
        if self.nadir_mode not in ("cuts", "conic"):
            raise ValueError("nadir_mode must be 'cuts' or 'conic'")


@dataclass
class BlockState:
    """Commitment state of one thermal block carried between MPC steps."""

    committed: int
    startups: list[tuple[datetime, int]] = field(default_factory=list)
    shutdowns: list[tuple[datetime, int]] = field(default_factory=list)


@dataclass
class SystemState:
    t: datetime
    blocks: dict[str, BlockState]
    storage_soc: dict[str, float]  # GWh
    ev_soc: float | None  # normalised
    pending_startups: dict[str, list[tuple[datetime, int]]] = field(default_factory=dict)


def initial_state(spec: SystemSpec, t0: datetime) -> SystemState:
    """Start committed in merit order up to a margin over initial demand.

    Units are treated as long-running: no minimum-time locks apply at
    the first step.
    """
    demand0 = spec.demand.at(t0)
    blocks: dict[str, BlockState] = {}
    committed_cap = 0.0
    for g in sorted(spec.generators, key=lambda g: g.marginal_cost):
        n_on = g.count if g.must_run else 0
        while n_on < g.count and committed_cap + n_on * g.unit_capacity < demand0 * 1.1:
            n_on += 1
        committed_cap += n_on * g.unit_capacity
        blocks[g.name] = BlockState(committed=n_on)
    ev_soc = spec.fleet.c_out if spec.fleet is not None and spec.fleet.n_ev > 0 else None
    return SystemState(
        t=t0,
        blocks=blocks,
        storage_soc={s.name: s.initial_soc * s.energy_capacity for s in spec.storages},
        ev_soc=ev_soc,
    )


@dataclass
class Row:
    tag: str
    node: int
    cols: list[int]
    vals: list[float]
    lb: float
    ub: float


@dataclass
class ConicNadir:
    """Affine ingredients of the rotated-cone nadir constraint at a node."""

    node: int
    h: tuple[list[int], list[float], float]
    r_e: tuple[list[int], list[float], float]
    r_p: tuple[list[int], list[float], float]


@dataclass
class StorageDecision:
    charge: float
    discharge: float
    efr: float
    pfr: float
    soc: float  # GWh


@dataclass
class EvDecision:
    charge: float
    discharge: float
    efr: float
    soc: float  # normalised
    availability: AvailabilityState


@dataclass
class NodeDecision:
    node: int
    committed: dict[str, int]
    output: dict[str, float]
    pfr_thermal: dict[str, float]
    storage: dict[str, StorageDecision]
    ev: EvDecision | None
    shed: float
    wind_used: float
    wind_curtailed: float
    inertia: float  # post-loss, GW s
    r_e: float
    r_p: float
    q_l: float | None  # fade rate %/h while connected


class _Assembler:
    def __init__(self) -> None:
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[bool] = []
        self.obj: list[float] = []
        self.rows: list[Row] = []
        self.bound_tags: list[tuple[str, int, int]] = []  # (tag, node, var)

    def var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = math.inf,
        integer: bool = False,
        cost: float = 0.0,
    ) -> int:
        self.names.append(name)
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(integer)
        self.obj.append(cost)
        return len(self.names) - 1

    def row(
        self,
        tag: str,
        node: int,
        expr: dict[int, float],
        lb: float = -math.inf,
        ub: float = math.inf,
    ) -> None:
        cols = sorted(expr)
        self.rows.append(
            Row(tag, node, cols, [expr[c] for c in cols], lb, ub)
        )

    def fix(self, tag: str, node: int, var: int, value: float) -> None:
        self.lb[var] = value
        self.ub[var] = value
        self.bound_tags.append((tag, node, var))

    def cap(self, tag: str, node: int, var: int, ub: float) -> None:
        self.ub[var] = min(self.ub[var], ub)
        self.bound_tags.append((tag, node, var))

    def floor(self, tag: str, node: int, var: int, lb: float) -> None:
        self.lb[var] = max(self.lb[var], lb)
        self.bound_tags.append((tag, node, var))


@dataclass
class UcProblem:
    spec: SystemSpec
    tree: ScenarioTree
    options: UcOptions
    names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    obj: np.ndarray
    rows: list[Row]
    conic: list[ConicNadir]
    index: list[dict]  # per node: variable ids by role
    availability: list[AvailabilityState | None]
    bound_tags: list[tuple[str, int, int]]

    @property
    def n_var(self) -> int:
        return len(self.names)

    def node_fr_exprs(self, node: int) -> tuple[dict[int, float], float, dict[int, float], dict[int, float]]:
        """(inertia expr, inertia const, EFR expr, PFR expr) at a node."""
        ix = self.index[node]
        h_expr = {
            ix["u"][g.name]: g.inertia_constant * g.unit_capacity
            for g in self.spec.generators
        }
        h_const = -self.spec.loss_inertia_offset
        re_expr: dict[int, float] = {}
        rp_expr: dict[int, float] = {}
        for g in self.spec.generators:
            if g.max_pfr_share > 0:
                rp_expr[ix["pfr"][g.name]] = 1.0
        for s in self.spec.storages:
            if s.service == "efr":
                re_expr[ix["sfr"][s.name]] = 1.0
            elif s.service == "pfr":
                rp_expr[ix["sfr"][s.name]] = 1.0
        if "ev_efr" in ix:
            re_expr[ix["ev_efr"]] = 1.0
        return h_expr, h_const, re_expr, rp_expr

    def add_nadir_cut(self, cut: NadirCut, nodes: Sequence[int] | None = None) -> int:
        """Append one supporting hyperplane, at every node by default."""
        added = 0
        for node in (range(len(self.tree.nodes)) if nodes is None else nodes):
            h_expr, h_const, re_expr, rp_expr = self.node_fr_exprs(node)
            expr: dict[int, float] = {}
            for c, v in h_expr.items():
                expr[c] = expr.get(c, 0.0) + cut.a_h * v
            for c, v in re_expr.items():
                expr[c] = expr.get(c, 0.0) + cut.a_e * v
            for c, v in rp_expr.items():
                expr[c] = expr.get(c, 0.0) + cut.a_p * v
            self.rows.append(
                Row(
                    "nadir",
                    node,
                    sorted(expr),
                    [expr[c] for c in sorted(expr)],
                    cut.rhs - cut.a_h * h_const,
                    math.inf,
                )
            )
            added += 1
        return added

    def fr_state(self, x: np.ndarray, node: int) -> FrState:
        h_expr, h_const, re_expr, rp_expr = self.node_fr_exprs(node)
        h = sum(v * x[c] for c, v in h_expr.items()) + h_const
        r_e = sum(v * x[c] for c, v in re_expr.items())
        r_p = sum(v * x[c] for c, v in rp_expr.items())
        return FrState(h=h, r_e=r_e, r_p=r_p)

    def decode(self, x: np.ndarray) -> list[NodeDecision]:
        out = []
        fleet = self.spec.fleet
        for node_obj in self.tree.nodes:
            n = node_obj.index
            ix = self.index[n]
            committed = {g.name: int(round(x[ix["u"][g.name]])) for g in self.spec.generators}
            output = {g.name: float(x[ix["p"][g.name]]) for g in self.spec.generators}
            pfr_th = {
                g.name: float(x[ix["pfr"][g.name]]) if g.max_pfr_share > 0 else 0.0
                for g in self.spec.generators
            }
            storage = {}
            for s in self.spec.storages:
                fr = float(x[ix["sfr"][s.name]]) if s.name in ix["sfr"] else 0.0
                storage[s.name] = StorageDecision(
                    charge=float(x[ix["pc"][s.name]]),
                    discharge=float(x[ix["pd"][s.name]]),
                    efr=fr if s.service == "efr" else 0.0,
                    pfr=fr if s.service == "pfr" else 0.0,
                    soc=float(x[ix["e"][s.name]]),
                )
            ev = None
            q_l: float | None = None
            if fleet is not None and fleet.n_ev > 0:
                avail = self.availability[n]
                soc = float(x[ix["ev_e"]])
                ev = EvDecision(
                    charge=float(x[ix["ev_pc"]]),
                    discharge=float(x[ix["ev_pd"]]) if "ev_pd" in ix else 0.0,
                    efr=float(x[ix["ev_efr"]]) if "ev_efr" in ix else 0.0,
                    soc=soc,
                    availability=avail,
                )
                if avail in (AvailabilityState.CONNECTED, AvailabilityState.ARRIVAL):
                    q_l = (
                        float(x[ix["q_l"]])
                        if "q_l" in ix
                        else fade_linear(soc, self.spec.degradation)
                    )
            frs = self.fr_state(x, n)
            used = float(x[ix["wind_used"]])
            out.append(
                NodeDecision(
                    node=n,
                    committed=committed,
                    output=output,
                    pfr_thermal=pfr_th,
                    storage=storage,
                    ev=ev,
                    shed=float(x[ix["shed"]]),
                    wind_used=used,
                    wind_curtailed=max(node_obj.wind_available - used, 0.0),
                    inertia=frs.h,
                    r_e=frs.r_e,
                    r_p=frs.r_p,
                    q_l=q_l,
                )
            )
        return out

    def registry_json(self) -> str:
        entries = []
        for r in self.rows:
            entries.append(
                {
                    "tag": r.tag,
                    "node": r.node,
                    "kind": "row",
                    "coefficients": {self.names[c]: v for c, v in zip(r.cols, r.vals)},
                    "lb": None if r.lb == -math.inf else r.lb,
                    "ub": None if r.ub == math.inf else r.ub,
                }
            )
        for tag, node, var in self.bound_tags:
            entries.append(
                {
                    "tag": tag,
                    "node": node,
                    "kind": "bound",
                    "coefficients": {self.names[var]: 1.0},
                    "lb": None if self.lb[var] == -math.inf else float(self.lb[var]),
                    "ub": None if self.ub[var] == math.inf else float(self.ub[var]),
                }
            )
        for c in self.conic:
            entries.append({"tag": "nadir", "node": c.node, "kind": "conic"})
        return json.dumps(entries, indent=1)

    def write_lp(self, path: str) -> None:
        """CPLEX-style LP text export (linear content only)."""
        if self.conic:
            raise ValueError("LP export requires the cuts formulation of the nadir")
        with open(path, "w") as f:
            f.write("\\ stochastic unit commitment export\nMinimize\n obj:")
            for i, c in enumerate(self.obj):
                if c != 0.0:
                    f.write(f" {'+' if c >= 0 else '-'} {abs(c):.12g} x{i}")
            f.write("\nSubject To\n")
            for k, r in enumerate(self.rows):
                terms = " ".join(
                    f"{'+' if v >= 0 else '-'} {abs(v):.12g} x{c}"
                    for c, v in zip(r.cols, r.vals)
                )
                name = f"{r.tag.replace('-', '_')}_{r.node}_{k}"
                if r.lb == r.ub:
                    f.write(f" {name}: {terms} = {r.lb:.12g}\n")
                else:
                    if r.lb != -math.inf:
                        f.write(f" {name}_l: {terms} >= {r.lb:.12g}\n")
                    if r.ub != math.inf:
                        f.write(f" {name}_u: {terms} <= {r.ub:.12g}\n")
            f.write("Bounds\n")
            for i in range(self.n_var):
                lo = "-inf" if self.lb[i] == -math.inf else f"{self.lb[i]:.12g}"
                hi = "+inf" if self.ub[i] == math.inf else f"{self.ub[i]:.12g}"
                f.write(f" {lo} <= x{i} <= {hi}\n")
            ints = [i for i in range(self.n_var) if self.integer[i]]
            if ints:
                f.write("Generals\n " + " ".join(f"x{i}" for i in ints) + "\n")
            f.write("End\n")


def _check_departure_reachable(
    spec: SystemSpec, tree: ScenarioTree, state: SystemState, avail: list
) -> None:
    fleet = spec.fleet
    assert fleet is not None
    agg = aggregate_fleet(fleet)
    rate = fleet.efficiency * agg.power_capacity / agg.energy_capacity  # per hour
    for leaf in (n.index for n in tree.nodes if not tree.nodes[n.index].children):
        path = tree.path_to_root(leaf)
        soc = state.ev_soc if state.ev_soc is not None else fleet.c_out
        headroom = 0.0
        for n in path:
            a = avail[n]
            if a is AvailabilityState.DEPARTURE:
                if soc + headroom < fleet.c_out - 1e-9:
                    raise InfeasibleWindowError(
                        f"cannot reach departure SOC {fleet.c_out} by "
                        f"{tree.nodes[n].t_ab.isoformat()} (at most {soc + headroom:.4f})",
                        chain=("ev-window", "storage-dyn", "ev-departure"),
                    )
                soc, headroom = fleet.c_out, 0.0
            elif a is AvailabilityState.ARRIVAL:
                soc, headroom = fleet.c_in, 0.0
            elif a is AvailabilityState.CONNECTED:
                headroom = min(
                    headroom + rate * tree.nodes[n].delta_tau,
                    fleet.soc_max - soc,
                )


def build_problem(
    spec: SystemSpec,
    tree: ScenarioTree,
    state: SystemState,
    options: UcOptions = UcOptions(),
    extra_cuts: Sequence[NadirCut] = (),
) -> UcProblem:
    """Assemble the node-indexed MILP (or MISOCP) for one MPC step.

    ``extra_cuts`` seeds the nadir outer approximation with supporting
    hyperplanes harvested from earlier solves; they are valid for any
    problem sharing the frequency parameters, so rolling-horizon runs
    pass them forward to avoid re-refining the same operating points.
    """
    fleet = spec.fleet if spec.fleet is not None and spec.fleet.n_ev > 0 else None
    agg = aggregate_fleet(fleet) if fleet else None
    a = _Assembler()
    nodes = tree.nodes
    root_t = nodes[0].t_ab

    avail: list[AvailabilityState | None] = [
        fleet_window(fleet, n.t_ab) if fleet else None for n in nodes
    ]
    if fleet:
        _check_departure_reachable(spec, tree, state, avail)
        unmanaged = fleet.regime is Regime.UNMANAGED
        if unmanaged:
            um_pc, um_soc = _unmanaged_profile(fleet, tree, state, avail)

    hours_from_root = [
        (n.t_ab - root_t).total_seconds() / 3600.0 for n in nodes
    ]

    index: list[dict] = []
    for n in nodes:
        i = n.index
        pi, dtau = n.probability, n.delta_tau
        ix: dict = {"u": {}, "su": {}, "sd": {}, "p": {}, "pfr": {}, "pc": {}, "pd": {}, "e": {}, "sfr": {}}
        for g in spec.generators:
            fixed = g.count if g.must_run else None
            ix["u"][g.name] = a.var(
                f"u[{g.name},{i}]",
                lb=fixed if fixed is not None else 0,
                ub=fixed if fixed is not None else g.count,
                integer=True,
                cost=pi * dtau * g.no_load_cost,
            )
            ix["su"][g.name] = a.var(
                f"su[{g.name},{i}]", ub=g.count, cost=pi * g.startup_cost
            )
            ix["sd"][g.name] = a.var(f"sd[{g.name},{i}]", ub=g.count)
            ix["p"][g.name] = a.var(
                f"p[{g.name},{i}]",
                ub=g.block_capacity,
                cost=pi * dtau * g.marginal_cost * 1e3,
            )
            ix["pfr"][g.name] = a.var(
                f"pfr[{g.name},{i}]",
                ub=g.max_pfr_share * g.block_capacity if g.max_pfr_share > 0 else 0.0,
            )
        for s in spec.storages:
            ix["pc"][s.name] = a.var(f"pc[{s.name},{i}]", ub=s.power_capacity)
            ix["pd"][s.name] = a.var(f"pd[{s.name},{i}]", ub=s.power_capacity)
            ix["e"][s.name] = a.var(
                f"e[{s.name},{i}]",
                lb=s.soc_min * s.energy_capacity,
                ub=s.soc_max * s.energy_capacity,
            )
            if s.service in ("efr", "pfr"):
                limit = s.fr_limit if s.fr_limit is not None else 2.0 * s.power_capacity
                ix["sfr"][s.name] = a.var(f"sfr[{s.name},{i}]", ub=limit)
        if fleet:
            st = avail[i]
            connected = st in (AvailabilityState.CONNECTED, AvailabilityState.ARRIVAL)
            ix["ev_pc"] = a.var(f"ev_pc[{i}]", ub=agg.power_capacity)
            ix["ev_e"] = a.var(f"ev_e[{i}]", lb=fleet.soc_min, ub=fleet.soc_max)
            if fleet.regime is Regime.V2G:
                ix["ev_pd"] = a.var(f"ev_pd[{i}]", ub=agg.power_capacity)
            if fleet.fr_enabled and fleet.regime is not Regime.UNMANAGED:
                ix["ev_efr"] = a.var(f"ev_efr[{i}]", ub=2.0 * agg.power_capacity)
            if options.penalize_degradation and connected:
                ix["q_l"] = a.var(
                    f"q_l[{i}]",
                    cost=pi * dtau * spec.degradation.cost_per_percent * fleet.n_ev,
                )
        ix["shed"] = a.var(f"shed[{i}]", cost=pi * dtau * spec.voll * 1e3)
        ix["wind_used"] = a.var(f"wind_used[{i}]", ub=n.wind_available)
        index.append(ix)

    # --- rows ---
    for n in nodes:
        i = n.index
        ix = index[i]
        dtau = n.delta_tau
        demand = spec.demand.mean_over(n.t_ab, dtau)

        balance: dict[int, float] = {ix["shed"]: 1.0, ix["wind_used"]: 1.0}
        for g in spec.generators:
            balance[ix["p"][g.name]] = 1.0
        for s in spec.storages:
            balance[ix["pd"][s.name]] = 1.0
            balance[ix["pc"][s.name]] = -1.0
        if fleet:
            balance[ix["ev_pc"]] = balance.get(ix["ev_pc"], 0.0) - 1.0
            if "ev_pd" in ix:
                balance[ix["ev_pd"]] = 1.0
        a.row("balance", i, balance, lb=demand, ub=demand)

        for g in spec.generators:
            u, su, sd, p = ix["u"][g.name], ix["su"][g.name], ix["sd"][g.name], ix["p"][g.name]
            a.row("gen-limits", i, {p: 1.0, u: -g.unit_msg}, lb=0.0)
            a.row("gen-limits", i, {p: 1.0, u: -g.unit_capacity}, ub=0.0)
            if g.max_pfr_share > 0:
                a.row(
                    "pfr-headroom",
                    i,
                    {ix["pfr"][g.name]: 1.0, u: -g.max_pfr_share * g.unit_capacity, p: g.max_pfr_share},
                    ub=0.0,
                )
            parent = n.parent
            link = {u: 1.0, su: -1.0, sd: 1.0}
            if parent is None:
                a.row("commitment", i, link, lb=state.blocks[g.name].committed, ub=state.blocks[g.name].committed)
            else:
                link[index[parent]["u"][g.name]] = -1.0
                a.row("commitment", i, link, lb=0.0, ub=0.0)

            if not g.must_run:
                path = tree.path_to_root(i)
                if g.min_up_hours > 0:
                    locked_hist = sum(
                        c
                        for t_ev, c in state.blocks[g.name].startups
                        if (n.t_ab - t_ev).total_seconds() / 3600.0 < g.min_up_hours - 1e-9
                    )
                    expr = {ix["u"][g.name]: 1.0}
                    for m in path:
                        if hours_from_root[i] - hours_from_root[m] < g.min_up_hours - 1e-9:
                            expr[index[m]["su"][g.name]] = -1.0
                    a.row("min-up", i, expr, lb=locked_hist)
                if g.min_down_hours > 0:
                    locked_hist = sum(
                        c
                        for t_ev, c in state.blocks[g.name].shutdowns
                        if (n.t_ab - t_ev).total_seconds() / 3600.0 < g.min_down_hours - 1e-9
                    )
                    expr = {ix["u"][g.name]: 1.0}
                    for m in path:
                        if hours_from_root[i] - hours_from_root[m] < g.min_down_hours - 1e-9:
                            expr[index[m]["sd"][g.name]] = 1.0
                    a.row("min-down", i, expr, ub=g.count - locked_hist)
                if g.commitment_lead_hours > 0 and hours_from_root[i] < g.commitment_lead_hours - 1e-9:
                    orders = state.pending_startups.get(g.name, [])
                    allowed = sum(
                        c
                        for t_ord, c in orders
                        if 0.0 <= (t_ord - n.t_ab).total_seconds() / 3600.0 < dtau - 1e-9
                        or abs((t_ord - n.t_ab).total_seconds()) < 1.0
                    )
                    a.cap("commitment-lead", i, ix["su"][g.name], float(allowed))

        for s in spec.storages:
            e, pc, pd = ix["e"][s.name], ix["pc"][s.name], ix["pd"][s.name]
            if n.parent is None:
                a.fix("storage-init", i, e, state.storage_soc[s.name])
            else:
                pix = index[n.parent]
                pdt = nodes[n.parent].delta_tau
                a.row(
                    "storage-dyn",
                    i,
                    {
                        e: 1.0,
                        pix["e"][s.name]: -1.0,
                        pix["pc"][s.name]: -pdt * s.efficiency,
                        pix["pd"][s.name]: pdt / s.efficiency,
                    },
                    lb=0.0,
                    ub=0.0,
                )
            if s.name in ix["sfr"]:
                fr = ix["sfr"][s.name]
                a.row("fr-headroom", i, {fr: 1.0, pd: 1.0, pc: -1.0}, ub=s.power_capacity)
                if s.service == "efr":
                    a.row(
                        "fr-energy",
                        i,
                        {e: 1.0, fr: -EFR_BACKING_HOURS},
                        lb=s.soc_min * s.energy_capacity,
                    )
            # prevent myopic end-of-horizon drain of fixed storage
            if options.terminal_storage_soc and not n.children:
                a.floor("terminal-soc", i, e, s.initial_soc * s.energy_capacity)

        if fleet:
            st = avail[i]
            e, pc = ix["ev_e"], ix["ev_pc"]
            pd = ix.get("ev_pd")
            efr = ix.get("ev_efr")
            off_grid = st in (AvailabilityState.DRIVING, AvailabilityState.DEPARTURE)
            if unmanaged:
                a.fix("ev-window", i, pc, um_pc[i])
                tag = "ev-departure" if st is AvailabilityState.DEPARTURE else "ev-window"
                a.fix(tag, i, e, um_soc[i])
            elif off_grid:
                a.cap("ev-window", i, pc, 0.0)
                if pd is not None:
                    a.cap("ev-window", i, pd, 0.0)
                if efr is not None:
                    a.cap("ev-window", i, efr, 0.0)
                tag = "ev-departure" if st is AvailabilityState.DEPARTURE else "ev-window"
                a.fix(tag, i, e, disconnected_soc(fleet, n.t_ab))
            else:
                if st is AvailabilityState.ARRIVAL:
                    a.fix("ev-window", i, e, fleet.c_in)
                if n.parent is None:
                    a.fix("storage-init", i, e, state.ev_soc)
                if efr is not None:
                    if fleet.regime is Regime.V2G:
                        expr = {efr: 1.0, pc: -1.0}
                        if pd is not None:
                            expr[pd] = 1.0
                        a.row("fr-headroom", i, expr, ub=agg.power_capacity)
                    else:  # smart: can only drop its own charging
                        a.row("fr-headroom", i, {efr: 1.0, pc: -1.0}, ub=0.0)
                    a.row(
                        "fr-energy",
                        i,
                        {e: 1.0, efr: -EFR_BACKING_HOURS / agg.energy_capacity},
                        lb=fleet.soc_min,
                    )
                if "q_l" in ix:
                    dp = spec.degradation
                    a.row("deg-cuts", i, {ix["q_l"]: 1.0, e: -dp.alpha1}, lb=dp.alpha2)
                    a.row("deg-cuts", i, {ix["q_l"]: 1.0, e: -dp.beta1}, lb=dp.beta2)
            # SOC recursion applies whenever the parent interval is on-grid
            if n.parent is not None and avail[n.parent] in (
                AvailabilityState.CONNECTED,
                AvailabilityState.ARRIVAL,
            ) and not unmanaged:
                pix = index[n.parent]
                pdt = nodes[n.parent].delta_tau
                expr = {
                    e: 1.0,
                    pix["ev_e"]: -1.0,
                    pix["ev_pc"]: -pdt * fleet.efficiency / agg.energy_capacity,
                }
                if "ev_pd" in pix:
                    expr[pix["ev_pd"]] = pdt / (fleet.efficiency * agg.energy_capacity)
                a.row("storage-dyn", i, expr, lb=0.0, ub=0.0)

        if options.reserve_headroom:
            expr = {}
            for g in spec.generators:
                expr[ix["u"][g.name]] = g.unit_capacity
                expr[ix["p"][g.name]] = -1.0
            a.row("reserve", i, expr, lb=spec.freq.p_l + options.reserve_margin)

    problem = UcProblem(
        spec=spec,
        tree=tree,
        options=options,
        names=a.names,
        lb=np.array(a.lb),
        ub=np.array(a.ub),
        integer=np.array(a.integer),
        obj=np.array(a.obj),
        rows=a.rows,
        conic=[],
        index=index,
        availability=avail,
        bound_tags=a.bound_tags,
    )

    if options.frequency_secured:
        h_floor = rocof_min_inertia(spec.freq)
        for n in nodes:
            i = n.index
            h_expr, h_const, re_expr, rp_expr = problem.node_fr_exprs(i)
            problem.rows.append(
                Row("rocof", i, sorted(h_expr), [h_expr[c] for c in sorted(h_expr)], h_floor - h_const, math.inf)
            )
            ss = {}
            ss.update(re_expr)
            for c, v in rp_expr.items():
                ss[c] = ss.get(c, 0.0) + v
            problem.rows.append(
                Row("steady-state", i, sorted(ss), [ss[c] for c in sorted(ss)], spec.freq.p_l, math.inf)
            )
        if options.nadir_mode == "cuts":
            re_grid = np.linspace(0.0, spec.freq.p_l * 0.95, options.nadir_re_points)
            rp_grid = [f * spec.freq.p_l for f in options.nadir_rp_factors]
            for cut in nadir_cuts(spec.freq, re_grid, rp_grid):
                problem.add_nadir_cut(cut)
            for cut in extra_cuts:
                problem.add_nadir_cut(cut)
        else:
            for n in nodes:
                i = n.index
                h_expr, h_const, re_expr, rp_expr = problem.node_fr_exprs(i)
                problem.conic.append(
                    ConicNadir(
                        node=i,
                        h=(sorted(h_expr), [h_expr[c] for c in sorted(h_expr)], h_const),
                        r_e=(sorted(re_expr), [re_expr[c] for c in sorted(re_expr)], 0.0),
                        r_p=(sorted(rp_expr), [rp_expr[c] for c in sorted(rp_expr)], 0.0),
                    )
                )

    return problem


def _unmanaged_profile(
    fleet: EvFleetSpec, tree: ScenarioTree, state: SystemState, avail: list
) -> tuple[dict[int, float], dict[int, float]]:
    """Exogenous charge power and SOC per node for unmanaged fleets.

    Charging starts the moment the fleet reconnects and runs at full
    rate until the departure SOC is reached.  All branches share the
    same profile because it does not depend on wind.
    """
    agg = aggregate_fleet(fleet)
    pc: dict[int, float] = {}
    soc_out: dict[int, float] = {}
    # nodes at the same offset share time and hence the profile; walk one
    # branch tolerating repeats via caching on the rounded offset
    cache: dict[float, tuple[float, float]] = {}
    root_t = tree.nodes[0].t_ab
    for leaf in [n.index for n in tree.nodes if not tree.nodes[n.index].children]:
        path = tree.path_to_root(leaf)
        soc = state.ev_soc if state.ev_soc is not None else fleet.c_out
        for n in path:
            node = tree.nodes[n]
            off = round((node.t_ab - root_t).total_seconds() / 3600.0, 6)
            if off in cache:
                pc[n], soc_out[n] = cache[off]
                soc = _advance_unmanaged(fleet, agg, soc_out[n], pc[n], node.delta_tau, avail[n])
                continue
            if avail[n] in (AvailabilityState.DRIVING, AvailabilityState.DEPARTURE):
                soc = disconnected_soc(fleet, node.t_ab)
                power = 0.0
            else:
                if avail[n] is AvailabilityState.ARRIVAL:
                    soc = fleet.c_in
                deficit = max(fleet.c_out - soc, 0.0)
                power = min(
                    agg.power_capacity,
                    deficit * agg.energy_capacity / (fleet.efficiency * node.delta_tau),
                )
            pc[n], soc_out[n] = power, soc
            cache[off] = (power, soc)
            soc = _advance_unmanaged(fleet, agg, soc, power, node.delta_tau, avail[n])
    return pc, soc_out


def _advance_unmanaged(fleet, agg, soc, power, dtau, avail):
    if avail in (AvailabilityState.DRIVING, AvailabilityState.DEPARTURE):
        return soc
    return soc + power * fleet.efficiency * dtau / agg.energy_capacity


def fr_capability(decision: NodeDecision, spec: SystemSpec) -> tuple[float, float]:
    """Maximum EFR and PFR volumes available at a node's operating point."""
    r_p = 0.0
    for g in spec.generators:
        if g.max_pfr_share > 0:
            headroom = g.unit_capacity * decision.committed[g.name] - decision.output[g.name]
            r_p += g.max_pfr_share * max(headroom, 0.0)
    r_e = 0.0
    for s in spec.storages:
        sd = decision.storage[s.name]
        swing = s.power_capacity - sd.discharge + sd.charge
        if s.fr_limit is not None:
            swing = min(swing, s.fr_limit)
        if s.service == "efr":
            r_e += max(swing, 0.0)
        elif s.service == "pfr":
            r_p += max(swing, 0.0)
    fleet = spec.fleet
    if (
        fleet is not None
        and fleet.n_ev > 0
        and decision.ev is not None
        and fleet.fr_enabled
        and decision.ev.availability
        in (AvailabilityState.CONNECTED, AvailabilityState.ARRIVAL)
    ):
        agg = aggregate_fleet(fleet)
        if fleet.regime is Regime.V2G:
            r_e += agg.power_capacity - decision.ev.discharge + decision.ev.charge
        elif fleet.regime is Regime.SMART:
            r_e += decision.ev.charge
    return r_e, r_p


def verify_solution(problem: UcProblem, x: np.ndarray, tol: float = 1e-6) -> float:
    """Largest constraint/bound violation of a candidate solution."""
    worst = 0.0
    for r in problem.rows:
        val = sum(v * x[c] for c, v in zip(r.cols, r.vals))
        if r.lb != -math.inf:
            worst = max(worst, r.lb - val)
        if r.ub != math.inf:
            worst = max(worst, val - r.ub)
    worst = max(worst, float(np.max(problem.lb - x, initial=0.0)))
    worst = max(worst, float(np.max(x - problem.ub, initial=0.0)))
    return worst
