"""
How many graph topologies does one epoch offer?
================================================

Adjacent core measurements may share a pose (a merge), and the gaps between
the resulting clusters are bridged by preintegrated connections (a tiling).
"""

# %%
from fgsync.combinatorics import brute_force_oracle, count_closed_form, enumerate_merges, enumerate_tilings
import numpy as np

from fgsync.core import BodyRatePayload, Measurement, PositionPayload, SensorKind, combination_from_mask, to_ns
from fgsync.pipeline import PipelineConfig
from fgsync.simgen import coincidence_peak_epoch, default_sensors


def gps(t):
    return Measurement("gps", to_ns(t), SensorKind.GPS, PositionPayload(np.zeros(2)), np.eye(2) * 0.01)


def imu(t):
    return Measurement("imu", to_ns(t), SensorKind.CONTINUOUS, BodyRatePayload(np.zeros(2), 0.0), np.eye(3) * 1e-4)


# %% Four measurements, a body-rate sample in every gap
core = [gps(float(i)) for i in range(4)]
cont = [imu(i + 0.5) for i in range(3)]
for mask in enumerate_merges(4):
    comb = combination_from_mask(core, mask.value)
    sizes = [len(c) for c in comb.clusters]
    tilings = [t.intervals for t in enumerate_tilings(comb, cont)] if len(comb) > 1 else [()]
    print(f"merge bits {mask.value:03b}  clusters {sizes}  tilings {tilings}")

# %% The count grows as 3^(N-1)/2, which is why epochs are kept short
print(" N  merges  candidates  oracle")
for n in range(1, 11):
    c = count_closed_form(n)
    oracle = brute_force_oracle(n).total_with_connections
    print(f"{n:2d}  {c.merge_count:6d}  {c.total_with_connections:10d}  {oracle:6d}")

# %% The default sensor rig peaks at this many seconds between coincidences
peak = coincidence_peak_epoch(default_sensors())
print(f"coincidence peak {peak:.2f} s, enumeration cap {PipelineConfig().n_max} core measurements")
