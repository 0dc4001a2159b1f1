"""Command-line front end: single runs, case-study sweeps, security curves.

Artifacts are reproducible by construction: results and plot data carry
the configuration hash, and everything wall-clock lives in the manifest.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import ConfigError, RunConfig, config_hash, load_config, packaged_profiles
from .frequency import mstg_curve, rocof_min_inertia
from .simulate import (
    SimulationLedger,
    SimulationOptions,
    emissions,
    simulate,
    value_per_ev,
    write_ledger_csv,
    write_summary_json,
)
from .system import Regime
from .wind import write_wind_csv

REGIMES = {r.value: r for r in Regime}


def _parse_set(pairs: list[str]) -> dict:
    """`--set a.b=c` strings into a nested override mapping."""
    out: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"--set expects key=value, got '{pair}'")
        key, _, value = pair.partition("=")
        node = out
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = yaml.safe_load(value)
    return out


def _write_manifest(path: Path, cfg: RunConfig, extra: dict) -> None:
    doc = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "package_version": __version__,
        "python": platform.python_version(),
        "config_name": cfg.name,
        "config_hash": cfg.hash,
        "solver_gap": cfg.solver.gap,
        "days": cfg.days,
    }
    doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _apply_flags(overrides: dict, args) -> dict:
    if getattr(args, "days", None) is not None:
        overrides["days"] = args.days
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "nadir_mode", None):
        overrides.setdefault("options", {})["nadir_mode"] = args.nadir_mode
    if getattr(args, "penalize_degradation", False):
        overrides.setdefault("options", {})["penalize_degradation"] = True
    return overrides


def cmd_simulate(args) -> int:
    overrides = _apply_flags(_parse_set(args.set), args)
    cfg = load_config(args.config, overrides or None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ledger = simulate(cfg.spec, cfg.days, cfg.seed, SimulationOptions.from_run(cfg))
    write_ledger_csv(ledger, str(out / "results.csv"))
    write_summary_json(ledger, str(out / "summary.json"))
    write_wind_csv(ledger.wind_path, cfg.start, str(out / "wind.csv"),
                   config_hash=cfg.hash)
    _write_manifest(out / "manifest.json", cfg, {
        "seed": cfg.seed,
        "solve_seconds": ledger.solve_seconds,
        "aborted": ledger.aborted,
    })
    if ledger.aborted:
        print(f"aborted at step {len(ledger)}: {ledger.abort_reason}", file=sys.stderr)
        return 1
    t = ledger.totals()
    print(f"{cfg.name}: {len(ledger)} steps, operating cost "
          f"{t['operating_cost']:,.0f}, curtailed {t['wind_curtailed_gwh']:.2f} GWh")
    return 0


# --- sweeps ---------------------------------------------------------------

def _with_fleet(spec, **changes):
    return dataclasses.replace(spec, fleet=dataclasses.replace(spec.fleet, **changes))


def _axis_apply(cfg: RunConfig, axis: str, value: str) -> RunConfig:
    """One swept run: the axis value patches the loaded system."""
    spec = cfg.spec
    if axis == "ev_count":
        spec = _with_fleet(spec, n_ev=int(value))
    elif axis == "wind_gw":
        spec = dataclasses.replace(
            spec, wind=dataclasses.replace(spec.wind, installed_capacity=float(value))
        )
    elif axis == "battery":
        power, _, energy = value.partition(":")
        batteries = [s for s in spec.storages if s.service == "efr"]
        if not batteries:
            raise SystemExit("battery axis needs a storage with service 'efr'")
        new = dataclasses.replace(
            batteries[0], power_capacity=float(power), energy_capacity=float(energy)
        )
        spec = dataclasses.replace(
            spec,
            storages=tuple(new if s.name == batteries[0].name else s for s in spec.storages),
        )
    elif axis == "delivery":
        te, _, tp = value.partition(":")
        spec = dataclasses.replace(
            spec, freq=dataclasses.replace(spec.freq, t_e=float(te), t_p=float(tp))
        )
    else:
        raise SystemExit(f"unknown axis '{axis}'")
    return dataclasses.replace(cfg, spec=spec)


def _sweep_run(task) -> dict:
    cfg, axis, value, regime, seed, base_hash = task
    run_hash = config_hash(
        {"base": base_hash, "axis": axis, "value": value, "regime": regime, "seed": seed}
    )
    cfg = _axis_apply(cfg, axis, value) if axis != "none" else cfg
    if regime == "benchmark":
        if cfg.spec.fleet is not None:
            cfg = dataclasses.replace(cfg, spec=_with_fleet(cfg.spec, n_ev=0))
    else:
        cfg = dataclasses.replace(
            cfg, spec=_with_fleet(cfg.spec, regime=REGIMES[regime])
        )
    name = f"{axis}={value}_{regime}_s{seed}"
    opts = dataclasses.replace(
        SimulationOptions.from_run(cfg), name=name, config_hash=run_hash
    )
    try:
        ledger = simulate(cfg.spec, cfg.days, seed, opts)
    except Exception as err:  # partial sweeps survive one bad run
        return {"name": name, "axis": axis, "value": value, "regime": regime,
                "seed": seed, "failed": str(err)}
    return {"name": name, "axis": axis, "value": value, "regime": regime,
            "seed": seed, "failed": "", "ledger": ledger}


def cmd_sweep(args) -> int:
    overrides = _apply_flags(_parse_set(args.set), args)
    cfg = load_config(args.config, overrides or None)
    out = Path(args.out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]
    values = args.values.split(",") if args.values else ["none"]
    regimes = args.regimes.split(",")
    for r in regimes:
        if r not in REGIMES:
            raise SystemExit(f"unknown regime '{r}' (choose from {sorted(REGIMES)})")

    # the zero-EV benchmark is re-run per axis value because the axis may
    # change the underlying system; the ev_count axis shares one benchmark
    bench_values = ["none"] if args.axis == "ev_count" else values
    tasks = []
    for seed in seeds:
        for v in bench_values:
            tasks.append((cfg, args.axis if v != "none" else "none", v,
                          "benchmark", seed, cfg.hash))
        for v in values:
            for regime in regimes:
                tasks.append((cfg, args.axis, v, regime, seed, cfg.hash))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_run, tasks))
    else:
        results = [_sweep_run(t) for t in tasks]

    benches: dict[tuple, SimulationLedger] = {}
    for task, res in zip(tasks, results):
        if res["regime"] == "benchmark" and not res["failed"]:
            benches[(res["seed"], res["value"])] = res["ledger"]

    rows = []
    for res in results:
        if res["regime"] == "benchmark":
            continue
        row = {k: res[k] for k in ("name", "axis", "value", "regime", "seed", "failed")}
        if res["failed"]:
            rows.append(row)
            continue
        led: SimulationLedger = res["ledger"]
        bench_key = (res["seed"], "none" if args.axis == "ev_count" else res["value"])
        bench = benches.get(bench_key)
        row.update(led.totals())
        row["n_ev"] = led.n_ev
        if bench is not None and led.n_ev > 0:
            row["value_per_ev"] = value_per_ev(led, bench, led.n_ev)
            row["co2_delta_per_ev_t"] = emissions(led, bench).delta_per_ev_t
        write_ledger_csv(led, str(out / "plotdata" / f"{res['name']}.csv"))
        rows.append(row)

    fields = sorted({k for r in rows for k in r})
    with open(out / "table.csv", "w", newline="") as f:
        f.write(f"# config_hash={cfg.hash}\n")
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    # per (value, regime) mean and standard error over seeds
    grouped: dict[tuple, list[float]] = {}
    for row in rows:
        if "value_per_ev" in row:
            grouped.setdefault((row["value"], row["regime"]), []).append(
                row["value_per_ev"]
            )
    summary = {}
    for (value, regime), vals in sorted(grouped.items()):
        arr = np.array(vals)
        stderr = float(arr.std(ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else 0.0
        summary[f"{args.axis}={value}/{regime}"] = {
            "value_per_ev_mean": float(arr.mean()),
            "value_per_ev_stderr": stderr,
            "seeds": len(arr),
        }
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_manifest(out / "manifest.json", cfg, {
        "seeds": seeds,
        "axis": args.axis,
        "values": values,
        "regimes": regimes,
        "failed_runs": [r["name"] for r in rows if r["failed"]],
    })
    failed = sum(1 for r in rows if r["failed"])
    print(f"sweep: {len(rows)} runs, {failed} failed, table at {out / 'table.csv'}")
    return 1 if failed else 0


def cmd_mstg(args) -> int:
    cfg = load_config(args.config, _parse_set(args.set) or None)
    spec = cfg.spec
    cap = sum(g.block_capacity for g in spec.generators)
    avg_h = args.avg_inertia or sum(
        g.inertia_constant * g.block_capacity for g in spec.generators
    ) / cap
    msg = args.msg_fraction or sum(
        g.msg_fraction * g.block_capacity for g in spec.generators
    ) / cap
    fr_max = args.fr_max or 2.0 * spec.freq.p_l
    levels = np.linspace(0.0, fr_max, args.points)
    times = [float(t) for t in args.delivery_times.split(",")]
    curves = {t: mstg_curve(spec.freq, avg_h, msg, t, levels) for t in times}

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "mstg.csv"
    with open(path, "w", newline="") as f:
        f.write(f"# config_hash={cfg.hash} avg_inertia_s={avg_h:.6g} msg_fraction={msg:.6g}\n")
        writer = csv.writer(f)
        header = ["fr_gw"]
        for t in times:
            header += [f"mstg_t{t:g}s_gw", f"binding_t{t:g}s"]
        writer.writerow(header)
        for i, fr in enumerate(levels):
            row = [f"{fr:.6f}"]
            for t in times:
                p = curves[t][i]
                row += [f"{p.mstg_gw:.6f}", p.binding]
            writer.writerow(row)
    _write_manifest(out / "manifest.json", cfg, {
        "delivery_times_s": times, "points": args.points,
    })
    print(f"mstg: {len(times)} curves x {args.points} points at {path}")
    return 0


# --- validate --------------------------------------------------------------

def _validate_checks(cfg: RunConfig):
    """Fast self-contained checks; yields (name, ok, detail)."""
    from datetime import datetime as dt

    from .degradation import DegradationParams, fade_cubic, fade_linear
    from .frequency import FrequencyParams, FrState, nadir_ok, swing_nadir_oracle
    from .system import GeneratorSpec, StorageSpec, SystemSpec, synthetic_demand
    from .uc import UcOptions, build_problem, initial_state, verify_solution
    from .wind import WindModel, build_tree, sample_wind_path
    from .backends import solve

    freq = FrequencyParams(f0=50.0, delta_f_max=0.8, rocof_max=0.125, p_l=1.8,
                           t_e=1.0, t_p=10.0)
    yield ("rocof floor 360 GWs at 0.125 Hz/s", abs(rocof_min_inertia(freq) - 360.0) < 1e-9,
           f"{rocof_min_inertia(freq):.6f}")

    # sample the polytope the commitment actually lives in: inertia above
    # the rocof floor, delivered FR covering the loss
    rng = np.random.default_rng(1)
    h_floor = rocof_min_inertia(freq)
    bad = 0
    for _ in range(200):
        r_e = rng.uniform(0.0, 1.1 * freq.p_l)
        st = FrState(h=rng.uniform(h_floor, 3.0 * h_floor),
                     r_e=r_e,
                     r_p=rng.uniform(max(freq.p_l - r_e, 0.0), 2.0 * freq.p_l))
        dev = swing_nadir_oracle(st, freq, dt=1e-3)
        cheap = nadir_ok(st, freq)
        exact = dev <= freq.delta_f_max + 1e-9
        if cheap != exact and abs(dev - freq.delta_f_max) > 1e-3 * freq.delta_f_max:
            bad += 1
    yield ("nadir check agrees with swing integration", bad == 0, f"{bad} disagreements")

    dp = DegradationParams()
    grid = np.linspace(0.2, 0.9, 141)
    worst = max(fade_linear(s, dp) - fade_cubic(s, dp) for s in grid)
    yield ("linear fade stays within 1e-5 of cubic", worst <= 1e-5, f"overshoot {worst:.2e}")

    model = WindModel(installed_capacity=10.0)
    cf = model.capacity_factor()
    path = sample_wind_path(model, seed=3, steps=20000)
    mc = float(path.mean()) / model.installed_capacity
    yield ("wind capacity factor quadrature vs simulation", abs(cf - mc) < 0.02,
           f"quad {cf:.4f} vs mc {mc:.4f}")

    gens = (GeneratorSpec("a", 3, 0.4, 0.5, 4.5, 40.0, no_load_cost=200.0,
                          startup_cost=1500.0, max_pfr_share=0.3),
            GeneratorSpec("b", 4, 0.25, 0.2, 4.0, 90.0, no_load_cost=50.0,
                          startup_cost=200.0),)
    spec = SystemSpec(
        generators=gens,
        storages=(StorageSpec("bat", power_capacity=0.05, energy_capacity=0.2,
                              efficiency=0.9, service="efr"),),
        fleet=None,
        wind=WindModel(installed_capacity=0.6),
        demand=synthetic_demand(dt(2025, 1, 6), 0.6, 1.2),
        freq=FrequencyParams(50.0, 0.8, 1.0, 0.12, 1.0, 10.0),
        degradation=dp, voll=30000.0, loss_block="a",
    )
    state = initial_state(spec, dt(2025, 1, 6))
    tree = build_tree(spec.wind, 0.3, dt(2025, 1, 6), (0.3, 0.7), 2.0, 0.5)
    problem = build_problem(spec, tree, state, UcOptions())
    res = solve(problem, gap=1e-6, nadir_tol=1e-6)
    ok = res.ok and verify_solution(problem, res.x) < 1e-6
    yield ("small stochastic instance solves and verifies", ok,
           res.status if res.x is None else f"violation {verify_solution(problem, res.x):.1e}")

    sec = [n for n in range(len(tree.nodes))
           if not nadir_ok(problem.fr_state(res.x, n), spec.freq, tol=1e-6)] if res.ok else [0]
    yield ("dispatch is nadir-secure at every node", not sec, f"violated at {sec}")


def cmd_validate(args) -> int:
    cfg = load_config(args.config, _parse_set(args.set) or None)
    failures = 0
    for name, ok, detail in _validate_checks(cfg):
        if ok:
            print(f"PASS {name}")
        else:
            failures += 1
            print(f"FAIL {name}: {detail}")
    print(f"{failures} failure(s)" if failures else "all checks passed")
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="evsuc",
        description="Frequency-secured stochastic unit commitment with EV fleets",
    )
    parser.add_argument("--version", action="version", version=f"evsuc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="desk",
                       help=f"profile name ({', '.join(packaged_profiles())}) or YAML path")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set solver.gap=1e-3")

    p = sub.add_parser("simulate", help="run one ledger")
    common(p)
    p.add_argument("--days", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--nadir-mode", choices=["cuts", "conic"])
    p.add_argument("--penalize-degradation", action="store_true")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="case-study matrix over one axis")
    common(p)
    p.add_argument("--axis", required=True,
                   choices=["ev_count", "wind_gw", "battery", "delivery"])
    p.add_argument("--values", required=True,
                   help="comma list; battery as GW:GWh, delivery as te:tp seconds")
    p.add_argument("--regimes", default="v2g,smart")
    p.add_argument("--seeds", default="0")
    p.add_argument("--days", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--penalize-degradation", action="store_true")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mstg", help="minimum stable generation vs FR volume")
    common(p)
    p.add_argument("--delivery-times", default="1,10", help="comma list of seconds")
    p.add_argument("--points", type=int, default=61)
    p.add_argument("--fr-max", type=float, default=None)
    p.add_argument("--avg-inertia", type=float, default=None)
    p.add_argument("--msg-fraction", type=float, default=None)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_mstg)

    p = sub.add_parser("validate", help="fast oracle and invariant checks")
    common(p)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(str(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
