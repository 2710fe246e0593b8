"""Sweep the migration-rate cap on the hot-set-doubling scenario.

A too-low cap restores the miss ratio slowly; a mid cap restores it
quickly; an oversized cap moves so much memory per epoch that the
allocation overshoots and oscillates instead of settling.
"""

from pathlib import Path

from tiersim.cli import main

scenario = Path(__file__).resolve().parent.parent / "scenarios" / "cap_sensitivity.toml"
out = Path(__file__).resolve().parent / "demo_out" / "cap_sweep"

main(["sweep", str(scenario),
      "--param", "migration_cap",
      "--values", "1280KiB,2MiB,64MiB",
      "--out", str(out)])
print(f"\nper-point runs and sweep.csv in {out}/")
