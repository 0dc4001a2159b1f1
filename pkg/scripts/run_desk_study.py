#!/usr/bin/env python3
# Run the four charging regimes on a shared wind draw and report per-EV value.

import argparse
import dataclasses
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from evsuc.config import load_config
from evsuc.simulate import (
    SimulationOptions,
    emissions,
    simulate,
    value_per_ev,
    write_ledger_csv,
    write_summary_json,
)
from evsuc.system import Regime

REGIMES = ("unmanaged", "smart", "v2g")


def run_one(cfg, label, fleet_changes):
    spec = cfg.spec
    if fleet_changes is not None:
        spec = dataclasses.replace(
            spec, fleet=dataclasses.replace(spec.fleet, **fleet_changes)
        )
    opts = dataclasses.replace(
        SimulationOptions.from_run(cfg), name=f"{cfg.name}_{label}"
    )
    ledger = simulate(spec, cfg.days, cfg.seed, opts)
    if ledger.aborted:
        raise SystemExit(f"{label}: aborted at step {len(ledger)}: {ledger.abort_reason}")
    return ledger


def main():
    ap = argparse.ArgumentParser(
        description="Compare Unmanaged / Smart / V2G against a zero-EV benchmark."
    )
    ap.add_argument("--config", default="desk", help="profile name or YAML path")
    ap.add_argument("--days", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--gap", type=float, default=None, help="override MIP gap")
    ap.add_argument("--out", default="runs/desk_study")
    args = ap.parse_args()

    overrides = {}
    if args.days is not None:
        overrides["days"] = args.days
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.gap is not None:
        overrides["solver"] = {"gap": args.gap}
    cfg = load_config(args.config, overrides or None)
    if cfg.spec.fleet is None:
        raise SystemExit("config has no EV fleet, nothing to compare")
    n_ev = cfg.spec.fleet.n_ev

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"{cfg.name}: {cfg.days} day(s), seed {cfg.seed}, {n_ev} EVs")
    ledgers = {}
    bench = run_one(cfg, "benchmark", {"n_ev": 0})
    ledgers["benchmark"] = bench
    print(f"  benchmark     operating {bench.operating_cost:15,.0f}")
    for regime in REGIMES:
        led = run_one(cfg, regime, {"regime": Regime(regime)})
        ledgers[regime] = led
        print(f"  {regime:<13} operating {led.operating_cost:15,.0f}")

    rows = []
    for label, led in ledgers.items():
        row = {
            "regime": label,
            "operating_cost": led.operating_cost,
            "degradation_cost": led.degradation_cost,
            "net_cost": led.net_cost,
            "curtailed_gwh": led.wind_curtailed_gwh,
            "shed_gwh": led.shed_gwh,
            "co2_t": led.co2_t,
        }
        if label != "benchmark":
            row["value_per_ev_yr"] = value_per_ev(led, bench, n_ev)
            row["co2_delta_per_ev_t_yr"] = emissions(led, bench).delta_per_ev_t
        rows.append(row)
        write_ledger_csv(led, str(out / f"results_{label}.csv"))
        write_summary_json(led, str(out / f"summary_{label}.json"))

    with open(out / "kpis.json", "w") as f:
        json.dump({"config_hash": cfg.hash, "rows": rows}, f, indent=2)
        f.write("\n")

    print()
    print(f"{'regime':<12} {'value/EV/yr':>12} {'deg cost':>12} "
          f"{'curtailed GWh':>14} {'tCO2/EV/yr':>11}")
    for row in rows:
        if row["regime"] == "benchmark":
            print(f"{row['regime']:<12} {'-':>12} {'-':>12} "
                  f"{row['curtailed_gwh']:>14.2f} {'-':>11}")
        else:
            print(f"{row['regime']:<12} {row['value_per_ev_yr']:>12,.0f} "
                  f"{row['degradation_cost']:>12,.0f} {row['curtailed_gwh']:>14.2f} "
                  f"{row['co2_delta_per_ev_t_yr']:>11.3f}")
    print(f"\nwrote {out}/kpis.json")


if __name__ == "__main__":
    main()
