"""
Graph size versus accuracy across motion regimes
================================================

Each synthetic trajectory is processed once without clustering and once
with the map-quality selector. Merging pays off most when the platform is
slow, and costs little accuracy when it moves.
"""

# %%
import numpy as np

from fgsync import simgen
from fgsync.pipeline import PipelineConfig, run_trajectory

cfg = PipelineConfig()
rows = []
for regime in simgen.Regime:
    truth, stream = simgen.generate(
        simgen.WorldModel.room(), simgen.MotionProfile.of(regime, 8.0), simgen.default_sensors(), seed=0
    )
    base = run_trajectory(stream, "base", cfg, truth)
    mom = run_trajectory(stream, "mom_based", cfg, truth, base_factors=base.factors)
    rows.append((regime.value, base.factors, mom.factors, mom.compression_pct, base.rpe_m, mom.rpe_m))

# %%
print(f"{'regime':16s} {'base f':>7s} {'mom f':>6s} {'compr':>7s} {'RPE base':>9s} {'RPE mom':>8s}")
for r in rows:
    print(f"{r[0]:16s} {r[1]:7d} {r[2]:6d} {r[3]:6.1f}% {r[4]:9.4f} {r[5]:8.4f}")
print(f"mean compression {np.mean([r[3] for r in rows]):.1f}%")
