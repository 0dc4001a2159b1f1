"""Receding-horizon simulation with realized wind feedback.

Every half hour the scenario-tree commitment problem is rebuilt from
the measured system state, solved, and only the root decision applied
before the window rolls forward onto the next wind sample.  The ledger
records the realized half-hourly trajectory: costs split by source,
emissions, curtailment, frequency-response holdings and fleet SOC.

Battery fade is accounted ex post from the realized SOC trajectory.
Off-grid weekday hours follow the workday convention: the first half
of the away window fades at the departure SOC, the rest at the return
SOC, which reproduces the 4 h + 4 h split of ``workday_fade`` for the
standard commuting window.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from time import perf_counter

import numpy as np

from .backends import BranchAndBoundConic, HighsBackend, solve
from .config import RunConfig, SolverConfig, TreeConfig
from .degradation import fade_cubic, fleet_fade_cost
from .frequency import NadirCut
from .system import (
    AvailabilityState,
    Regime,
    SystemSpec,
    aggregate_fleet,
    fleet_window,
    disconnected_soc,
    window_anchor_offsets,
)
from .uc import (
    InfeasibleWindowError,
    SystemState,
    UcOptions,
    build_problem,
    initial_state,
)
from .wind import build_tree, sample_wind_path

__all__ = [
    "SimulationOptions",
    "StepRecord",
    "SimulationLedger",
    "simulate",
    "run_config",
    "value_per_ev",
    "marginal_value",
    "EmissionsReport",
    "emissions",
    "write_ledger_csv",
    "write_summary_json",
]

ON_GRID = (AvailabilityState.CONNECTED, AvailabilityState.ARRIVAL)


@dataclass(frozen=True)
class SimulationOptions:
    tree: TreeConfig = TreeConfig()
    solver: SolverConfig = SolverConfig()
    uc: UcOptions = UcOptions()
    start: datetime = datetime(2025, 1, 6)
    name: str = "run"
    config_hash: str = ""

    @classmethod
    def from_run(cls, cfg: RunConfig) -> "SimulationOptions":
        return cls(
            tree=cfg.tree,
            solver=cfg.solver,
            uc=cfg.options,
            start=cfg.start,
            name=cfg.name,
            config_hash=cfg.hash,
        )


@dataclass
class StepRecord:
    """One applied root decision and its realized bookkeeping."""

    step: int
    time: datetime
    demand: float  # GW, interval mean
    wind_available: float  # GW
    wind_used: float
    wind_curtailed: float
    shed: float  # GW
    fuel_cost: float  # pounds over the interval
    no_load_cost: float
    startup_cost: float
    shed_cost: float
    degradation_cost: float
    co2_t: float
    inertia: float  # GWs post-loss
    r_e: float  # GW
    r_p: float
    efr: float  # scheduled EFR, GW
    pfr: float
    committed: dict[str, int]
    storage_soc: dict[str, float]  # GWh at interval start
    ev_connected: bool
    ev_soc: float | None  # normalised, at interval start
    ev_charge: float
    ev_discharge: float
    ev_efr: float
    fade_rate: float  # percent per hour per vehicle
    balance_residual: float  # GW
    objective: float  # expected cost over the tree
    solver_status: str
    cut_rounds: int
    solve_seconds: float

    @property
    def operating_cost(self) -> float:
        return self.fuel_cost + self.no_load_cost + self.startup_cost + self.shed_cost


@dataclass
class SimulationLedger:
    name: str
    config_hash: str
    seed: int
    days: int
    start: datetime
    step_hours: float
    n_ev: int
    records: list[StepRecord] = field(default_factory=list)
    wind_path: np.ndarray = field(default_factory=lambda: np.empty(0))
    aborted: bool = False
    abort_reason: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def fuel_cost(self) -> float:
        return float(sum(r.fuel_cost for r in self.records))

    @property
    def no_load_cost(self) -> float:
        return float(sum(r.no_load_cost for r in self.records))

    @property
    def startup_cost(self) -> float:
        return float(sum(r.startup_cost for r in self.records))

    @property
    def shed_cost(self) -> float:
        return float(sum(r.shed_cost for r in self.records))

    @property
    def operating_cost(self) -> float:
        """System cost: fuel, no-load, startups and load shedding."""
        return self.fuel_cost + self.no_load_cost + self.startup_cost + self.shed_cost

    @property
    def degradation_cost(self) -> float:
        return float(sum(r.degradation_cost for r in self.records))

    @property
    def net_cost(self) -> float:
        return self.operating_cost + self.degradation_cost

    @property
    def co2_t(self) -> float:
        return float(sum(r.co2_t for r in self.records))

    @property
    def wind_available_gwh(self) -> float:
        return float(sum(r.wind_available for r in self.records)) * self.step_hours

    @property
    def wind_used_gwh(self) -> float:
        return float(sum(r.wind_used for r in self.records)) * self.step_hours

    @property
    def wind_curtailed_gwh(self) -> float:
        return float(sum(r.wind_curtailed for r in self.records)) * self.step_hours

    @property
    def shed_gwh(self) -> float:
        return float(sum(r.shed for r in self.records)) * self.step_hours

    @property
    def solve_seconds(self) -> float:
        return float(sum(r.solve_seconds for r in self.records))

    def totals(self) -> dict:
        return {
            "steps": len(self.records),
            "fuel_cost": self.fuel_cost,
            "no_load_cost": self.no_load_cost,
            "startup_cost": self.startup_cost,
            "shed_cost": self.shed_cost,
            "operating_cost": self.operating_cost,
            "degradation_cost": self.degradation_cost,
            "net_cost": self.net_cost,
            "co2_t": self.co2_t,
            "wind_available_gwh": self.wind_available_gwh,
            "wind_used_gwh": self.wind_used_gwh,
            "wind_curtailed_gwh": self.wind_curtailed_gwh,
            "shed_gwh": self.shed_gwh,
        }


def _clock(t: datetime) -> float:
    return t.hour + t.minute / 60.0 + t.second / 3600.0


def realized_fade_rate(spec: SystemSpec, t: datetime, soc: float) -> float:
    """Fade rate in percent per hour per vehicle over [t, t + step).

    Connected intervals fade at the held SOC; away intervals follow
    the workday convention keyed on the midpoint of the driving window.
    """
    fleet = spec.fleet
    assert fleet is not None
    avail = fleet_window(fleet, t)
    if avail in (AvailabilityState.DRIVING, AvailabilityState.DEPARTURE):
        mid = 0.5 * (fleet.t_out_hour + fleet.t_in_hour)
        ref = fleet.c_out if _clock(t) < mid else fleet.c_in
        return fade_cubic(ref, spec.degradation)
    return fade_cubic(soc, spec.degradation)


def _make_backend(conic: bool, solver: SolverConfig):
    if conic or solver.backend == "bnb-conic":
        return BranchAndBoundConic()
    return HighsBackend(
        node_limit=solver.node_limit, heuristic_effort=solver.heuristic_effort
    )


def _reference_chain(tree) -> list[int]:
    """Root plus the most probable quantile chain (ties widen to the median)."""
    root = tree.nodes[0]
    if not root.children:
        return [0]
    qs = tree.quantiles

    def rank(k: int):
        child = tree.nodes[root.children[k]]
        return (child.probability, -abs(qs[k] - 0.5), -k)

    best = max(range(len(root.children)), key=rank)
    chain = [0]
    node = tree.nodes[root.children[best]]
    while True:
        chain.append(node.index)
        if not node.children:
            return chain
        node = tree.nodes[node.children[0]]


def _harvest_orders(spec, tree, decs, state: SystemState, t_next: datetime) -> None:
    """Roll pending startup orders for blocks with a commitment lead.

    The nodes about to enter the lead window on the reference chain fix
    which startups stay allowed at the next step; stale orders expire.
    """
    chain = _reference_chain(tree)
    root_t = tree.nodes[0].t_ab
    dt_root = tree.nodes[0].delta_tau
    for g in spec.generators:
        if g.commitment_lead_hours <= 0 or g.must_run:
            continue
        orders = [
            (t_ord, c)
            for t_ord, c in state.pending_startups.get(g.name, [])
            if t_ord >= t_next
        ]
        for prev, n in zip(chain, chain[1:]):
            node = tree.nodes[n]
            off = (node.t_ab - root_t).total_seconds() / 3600.0
            if g.commitment_lead_hours - 1e-9 <= off < g.commitment_lead_hours + dt_root - 1e-9:
                started = decs[n].committed[g.name] - decs[prev].committed[g.name]
                if started > 0:
                    orders.append((node.t_ab, started))
        state.pending_startups[g.name] = orders


def _advance(
    spec: SystemSpec, state: SystemState, dec, dt: float, t_next: datetime
) -> None:
    """Apply the root decision in place: commitment events, SOC, clock."""
    for g in spec.generators:
        bs = state.blocks[g.name]
        new = dec.committed[g.name]
        if new > bs.committed:
            bs.startups.append((state.t, new - bs.committed))
        elif new < bs.committed:
            bs.shutdowns.append((state.t, bs.committed - new))
        bs.committed = new
        bs.startups = [
            (te, c)
            for te, c in bs.startups
            if (t_next - te).total_seconds() / 3600.0 < g.min_up_hours
        ]
        bs.shutdowns = [
            (te, c)
            for te, c in bs.shutdowns
            if (t_next - te).total_seconds() / 3600.0 < g.min_down_hours
        ]

    for s in spec.storages:
        sd = dec.storage[s.name]
        soc = sd.soc + dt * (s.efficiency * sd.charge - sd.discharge / s.efficiency)
        state.storage_soc[s.name] = min(
            max(soc, s.soc_min * s.energy_capacity), s.soc_max * s.energy_capacity
        )

    fleet = spec.fleet
    if fleet is not None and fleet.n_ev > 0:
        if fleet_window(fleet, state.t) in ON_GRID:
            agg = aggregate_fleet(fleet)
            ev = dec.ev
            soc = ev.soc + dt * (
                fleet.efficiency * ev.charge - ev.discharge / fleet.efficiency
            ) / agg.energy_capacity
            state.ev_soc = min(max(soc, fleet.soc_min), fleet.soc_max)
        else:
            state.ev_soc = disconnected_soc(fleet, t_next)

    state.t = t_next


def simulate(
    spec: SystemSpec, days: int, seed: int, options: SimulationOptions = SimulationOptions()
) -> SimulationLedger:
    """Run the half-hourly control loop and return the realized ledger.

    Deterministic for a fixed seed and configuration: the wind path is
    drawn up front and the solver runs without wall-clock dependence.
    A solver failure stops the loop and flags the partial ledger.
    """
    if days < 1:
        raise ValueError("days must be at least 1")
    problems = spec.errors()
    if problems:
        raise ValueError("invalid system spec: " + "; ".join(problems))

    cfg = options.tree
    n_steps = int(round(days * 24.0 / cfg.step_hours))
    wind = sample_wind_path(spec.wind, seed, n_steps)
    fleet = spec.fleet if spec.fleet is not None and spec.fleet.n_ev > 0 else None
    state = initial_state(spec, options.start)
    ledger = SimulationLedger(
        name=options.name,
        config_hash=options.config_hash,
        seed=seed,
        days=days,
        start=options.start,
        step_hours=cfg.step_hours,
        n_ev=fleet.n_ev if fleet else 0,
        wind_path=wind,
    )
    pool: list[NadirCut] = []
    deg_price = spec.degradation.cost_per_percent

    for k in range(n_steps):
        t = state.t
        anchors = (
            window_anchor_offsets(fleet, t, cfg.horizon_hours)
            if fleet and cfg.anchor_fleet_events
            else ()
        )
        tree = build_tree(
            spec.wind,
            float(wind[k]),
            t,
            cfg.quantiles,
            cfg.horizon_hours,
            cfg.step_hours,
            cfg.coarsen,
            anchors,
        )
        try:
            problem = build_problem(
                spec, tree, state, options.uc,
                extra_cuts=pool[-options.solver.cut_pool_size :],
            )
        except InfeasibleWindowError as err:
            ledger.aborted = True
            ledger.abort_reason = f"step {k}: {err}"
            break

        backend = _make_backend(bool(problem.conic), options.solver)
        t0 = perf_counter()
        res = solve(
            problem,
            backend,
            gap=options.solver.gap,
            time_limit=options.solver.time_limit,
            max_cut_rounds=options.solver.max_cut_rounds,
            nadir_tol=options.solver.nadir_tol,
        )
        elapsed = perf_counter() - t0
        if not res.ok:
            ledger.aborted = True
            ledger.abort_reason = f"step {k}: solver returned {res.status} ({res.message})"
            break
        pool = (pool + res.new_cuts)[-options.solver.cut_pool_size :]

        decs = problem.decode(res.x)
        root = decs[0]
        dt = tree.nodes[0].delta_tau
        demand = spec.demand.mean_over(t, dt)

        fuel = sum(
            g.marginal_cost * root.output[g.name] * 1e3 * dt for g in spec.generators
        )
        no_load = sum(
            g.no_load_cost * root.committed[g.name] * dt for g in spec.generators
        )
        startup = sum(
            g.startup_cost * max(root.committed[g.name] - state.blocks[g.name].committed, 0)
            for g in spec.generators
        )
        co2 = sum(
            g.emission_factor * root.output[g.name] * 1e3 * dt for g in spec.generators
        )
        thermal = sum(root.output[g.name] for g in spec.generators)
        discharge = sum(sd.discharge - sd.charge for sd in root.storage.values())
        ev_net = root.ev.discharge - root.ev.charge if root.ev else 0.0
        residual = abs(thermal + root.wind_used + discharge + ev_net + root.shed - demand)

        connected = bool(fleet) and fleet_window(fleet, t) in ON_GRID
        fade = realized_fade_rate(spec, t, state.ev_soc) if fleet else 0.0
        deg_cost = fleet_fade_cost(fade, dt, fleet.n_ev, deg_price) if fleet else 0.0

        ledger.records.append(
            StepRecord(
                step=k,
                time=t,
                demand=demand,
                wind_available=float(wind[k]),
                wind_used=root.wind_used,
                wind_curtailed=root.wind_curtailed,
                shed=root.shed,
                fuel_cost=fuel,
                no_load_cost=no_load,
                startup_cost=startup,
                shed_cost=spec.voll * root.shed * 1e3 * dt,
                degradation_cost=deg_cost,
                co2_t=co2,
                inertia=root.inertia,
                r_e=root.r_e,
                r_p=root.r_p,
                efr=sum(sd.efr for sd in root.storage.values())
                + (root.ev.efr if root.ev else 0.0),
                pfr=sum(root.pfr_thermal.values())
                + sum(sd.pfr for sd in root.storage.values()),
                committed=dict(root.committed),
                storage_soc={s.name: root.storage[s.name].soc for s in spec.storages},
                ev_connected=connected,
                ev_soc=root.ev.soc if root.ev else None,
                ev_charge=root.ev.charge if root.ev else 0.0,
                ev_discharge=root.ev.discharge if root.ev else 0.0,
                ev_efr=root.ev.efr if root.ev else 0.0,
                fade_rate=fade,
                balance_residual=residual,
                objective=res.objective,
                solver_status=res.status,
                cut_rounds=res.cut_rounds,
                solve_seconds=elapsed,
            )
        )

        t_next = t + timedelta(hours=dt)
        _harvest_orders(spec, tree, decs, state, t_next)
        _advance(spec, state, root, dt, t_next)

    return ledger


def run_config(cfg: RunConfig) -> SimulationLedger:
    return simulate(cfg.spec, cfg.days, cfg.seed, SimulationOptions.from_run(cfg))


def _check_paired(a: SimulationLedger, b: SimulationLedger) -> None:
    if (a.seed, a.days, a.start) != (b.seed, b.days, b.start):
        raise ValueError("ledgers must share seed, days and start to be compared")


def value_per_ev(
    fleet_ledger: SimulationLedger, benchmark: SimulationLedger, n_ev: int
) -> float:
    """Annualized system-cost saving per vehicle against the zero-EV run."""
    if n_ev <= 0:
        raise ValueError("n_ev must be positive")
    _check_paired(fleet_ledger, benchmark)
    saving = benchmark.operating_cost - fleet_ledger.operating_cost
    return saving / n_ev * 365.0 / fleet_ledger.days


def marginal_value(lo: SimulationLedger, hi: SimulationLedger) -> float:
    """Annualized value of the additional vehicles between two penetrations."""
    _check_paired(lo, hi)
    dn = hi.n_ev - lo.n_ev
    if dn == 0:
        raise ValueError("penetrations are equal: zero denominator")
    return (lo.operating_cost - hi.operating_cost) / dn * 365.0 / lo.days


@dataclass(frozen=True)
class EmissionsReport:
    total_t: float
    delta_per_ev_t: float | None = None  # annualized, negative is a reduction


def emissions(
    ledger: SimulationLedger, benchmark: SimulationLedger | None = None
) -> EmissionsReport:
    if benchmark is None:
        return EmissionsReport(total_t=ledger.co2_t)
    _check_paired(ledger, benchmark)
    if ledger.n_ev <= 0:
        raise ValueError("per-EV delta needs a fleet ledger")
    delta = (ledger.co2_t - benchmark.co2_t) / ledger.n_ev * 365.0 / ledger.days
    return EmissionsReport(total_t=ledger.co2_t, delta_per_ev_t=delta)


def _fmt(v: float) -> str:
    v = float(v)
    if v == 0.0:
        v = 0.0  # normalise -0.0
    return f"{v:.9g}"


def write_ledger_csv(ledger: SimulationLedger, path: str) -> None:
    """Half-hourly records; reruns of the same config are byte-identical.

    Wall-clock figures are deliberately left to the manifest.
    """
    block_names = sorted(ledger.records[0].committed) if ledger.records else []
    store_names = sorted(ledger.records[0].storage_soc) if ledger.records else []
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={ledger.config_hash} seed={ledger.seed}\n")
        writer = csv.writer(f)
        writer.writerow(
            ["step", "time_iso8601", "demand_gw", "wind_available_gw", "wind_used_gw",
             "wind_curtailed_gw", "shed_gw", "fuel_cost", "no_load_cost",
             "startup_cost", "shed_cost", "degradation_cost", "co2_t",
             "inertia_gws", "r_e_gw", "r_p_gw", "efr_gw", "pfr_gw",
             "ev_connected", "ev_soc", "ev_charge_gw", "ev_discharge_gw",
             "ev_efr_gw", "fade_pct_per_h", "balance_residual_gw",
             "objective", "solver_status", "cut_rounds"]
            + [f"committed_{b}" for b in block_names]
            + [f"soc_{s}_gwh" for s in store_names]
        )
        for r in ledger.records:
            writer.writerow(
                [r.step, r.time.isoformat(), _fmt(r.demand), _fmt(r.wind_available),
                 _fmt(r.wind_used), _fmt(r.wind_curtailed), _fmt(r.shed),
                 _fmt(r.fuel_cost), _fmt(r.no_load_cost), _fmt(r.startup_cost),
                 _fmt(r.shed_cost), _fmt(r.degradation_cost), _fmt(r.co2_t),
                 _fmt(r.inertia), _fmt(r.r_e), _fmt(r.r_p), _fmt(r.efr), _fmt(r.pfr),
                 int(r.ev_connected), "" if r.ev_soc is None else _fmt(r.ev_soc),
                 _fmt(r.ev_charge), _fmt(r.ev_discharge), _fmt(r.ev_efr),
                 _fmt(r.fade_rate), _fmt(r.balance_residual), _fmt(r.objective),
                 r.solver_status, r.cut_rounds]
                + [r.committed[b] for b in block_names]
                + [_fmt(r.storage_soc[s]) for s in store_names]
            )


def write_summary_json(
    ledger: SimulationLedger, path: str, extra: dict | None = None
) -> None:
    doc = {
        "name": ledger.name,
        "config_hash": ledger.config_hash,
        "seed": ledger.seed,
        "days": ledger.days,
        "n_ev": ledger.n_ev,
        "aborted": ledger.aborted,
        "abort_reason": ledger.abort_reason,
        "totals": ledger.totals(),
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
