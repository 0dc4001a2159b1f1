#!/usr/bin/env python3
# Plot minimum stable thermal generation against procured FR volume.

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from evsuc.config import load_config
from evsuc.frequency import mstg_curve, rocof_min_inertia


def main():
    ap = argparse.ArgumentParser(description="MSTG curves for a system profile.")
    ap.add_argument("--config", default="gb2025")
    ap.add_argument("--delivery-times", default="1,10",
                    help="comma-separated FR delivery times [s]")
    ap.add_argument("--points", type=int, default=121)
    ap.add_argument("--out", default="runs/mstg.png")
    args = ap.parse_args()

    cfg = load_config(args.config)
    spec = cfg.spec
    cap = sum(g.block_capacity for g in spec.generators)
    avg_h = sum(g.inertia_constant * g.block_capacity for g in spec.generators) / cap
    msg = sum(g.msg_fraction * g.block_capacity for g in spec.generators) / cap

    levels = np.linspace(0.0, 2.0 * spec.freq.p_l, args.points)
    fig, ax = plt.subplots(figsize=(6, 4))
    for t in (float(x) for x in args.delivery_times.split(",")):
        pts = mstg_curve(spec.freq, avg_h, msg, t, levels)
        ax.plot([p.fr_gw for p in pts], [p.mstg_gw for p in pts],
                label=f"delivery {t:g} s")
    floor = msg * rocof_min_inertia(spec.freq) / avg_h
    ax.axhline(floor, color="grey", linestyle=":", linewidth=1,
               label="RoCoF floor")
    ax.set_xlabel("Frequency response procured [GW]")
    ax.set_ylabel("Minimum stable thermal generation [GW]")
    ax.set_title(f"{cfg.name}: avg H {avg_h:.2f} s, MSG fraction {msg:.2f}")
    ax.grid(alpha=0.4)
    ax.legend()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150, bbox_inches="tight")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
