"""Paired Monte-Carlo benchmark across structures.

Runs the sweep driver over four pilot setups at two SNRs with shared
scenes per trial index: concurrent boundary waveguides, the same budget
time-multiplexed on one guide, a two-subarray guide line, and a single
dense 96-PA subarray matched with a ring x angle dictionary. Aggregates
land in rmse.csv / nmse.csv next to this script. Trial counts are kept
small here; raise trials (and snr_db) for smooth curves.
"""

import time
from pathlib import Path

from passloc.harness import ExperimentConfig, run_sweep

out = Path(__file__).parent / "out" / "sweep"

cfg = ExperimentConfig(
    scenarios=("mw", "sw", "sw2", "nf"),
    m=3,
    snr_db=(15.0, 25.0),
    trials=40,
    seed=1,
)

t0 = time.perf_counter()
res = run_sweep(cfg)
print(f"{len(cfg.scenarios) * len(cfg.snr_db) * cfg.trials} trials "
      f"in {time.perf_counter() - t0:.1f} s\n")

print("scenario   snr    rmse_m    median_m   flag%  slots   nmse_db")
nm = {(r["scenario"], r["snr_db"]): r["nmse_db"] for r in res.nmse_rows}
for r in res.rmse_rows:
    key = (r["scenario"], r["snr_db"])
    print(f"{r['scenario']:<9}{r['snr_db']:5.0f}{r['rmse_m']:10.3f}"
          f"{r['median_m']:11.4f}{100 * r['flag_rate']:7.1f}{r['total_slots']:7d}"
          f"{nm[key]:9.1f}")

res.write_csv(out)
print(f"\nwrote {out / 'rmse.csv'}, {out / 'nmse.csv'}, {out / 'meta.json'}")
