#!/usr/bin/env python3
# Value of V2G versus fleet size: average and marginal value per EV.
#
# All runs share the benchmark's wind draw, so differences are purely the
# fleet's doing.  Marginal value is the finite difference between adjacent
# penetrations; expect it to fall below the average as services saturate.

import argparse
import dataclasses
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from evsuc.config import load_config
from evsuc.simulate import (
    SimulationOptions,
    marginal_value,
    simulate,
    value_per_ev,
)


def run_at(cfg, n_ev):
    spec = dataclasses.replace(
        cfg.spec, fleet=dataclasses.replace(cfg.spec.fleet, n_ev=n_ev)
    )
    opts = dataclasses.replace(
        SimulationOptions.from_run(cfg), name=f"{cfg.name}_n{n_ev}"
    )
    ledger = simulate(spec, cfg.days, cfg.seed, opts)
    if ledger.aborted:
        raise SystemExit(f"n_ev={n_ev}: aborted: {ledger.abort_reason}")
    return ledger


def main():
    ap = argparse.ArgumentParser(description="V2G value saturation study.")
    ap.add_argument("--config", default="desk")
    ap.add_argument("--sizes", default="2000,5000,10000,20000,40000",
                    help="comma-separated fleet sizes")
    ap.add_argument("--days", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default="runs/fleet_size.csv")
    args = ap.parse_args()

    overrides = {"fleet": {"regime": "v2g"}}
    if args.days is not None:
        overrides["days"] = args.days
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_config(args.config, overrides)
    if cfg.spec.fleet is None:
        raise SystemExit("config has no EV fleet")
    sizes = sorted(int(s) for s in args.sizes.split(","))

    bench = run_at(cfg, 0)
    print(f"benchmark operating cost {bench.operating_cost:,.0f}")

    rows = []
    prev = None
    for n in sizes:
        led = run_at(cfg, n)
        avg = value_per_ev(led, bench, n)
        marg = marginal_value(prev, led) if prev is not None else marginal_value(bench, led)
        rows.append({
            "n_ev": n,
            "value_per_ev_yr": avg,
            "marginal_value_yr": marg,
            "operating_cost": led.operating_cost,
            "degradation_cost": led.degradation_cost,
            "curtailed_gwh": led.wind_curtailed_gwh,
        })
        print(f"n_ev {n:>7}: avg {avg:>10,.0f}  marginal {marg:>10,.0f}  "
              f"curtailed {led.wind_curtailed_gwh:.2f} GWh")
        prev = led

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write(f"# config_hash={cfg.hash} seed={cfg.seed}\n")
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
