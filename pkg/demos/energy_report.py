"""The utilization-to-power model applied to two utilization traces.

Power grows linearly from idle to full draw with CPU utilization.  With
5 W idle and 25 W full, a robot at 95% median utilization draws an
estimated 24 W; offloading inference drops it to 16% and 8.2 W.

The traces here are constructed so their medians are 95 and 16; real
traces come from ``oricf run --telemetry trace.csv`` on each setup.

    python3 demos/energy_report.py
"""

import numpy as np

from oricf.telemetry import PowerParams, UtilizationTrace, build_report, power_at



def with_median(values, m):
    """Sorted copy of an odd-length array whose middle element is m."""
    v = np.sort(values)
    mid = len(v) // 2
    v[mid] = m
    v[:mid] = np.minimum(v[:mid], m)
    v[mid + 1:] = np.maximum(v[mid + 1:], m)
    return v


rng = np.random.default_rng(0)
onboard = with_median(np.clip(rng.normal(92, 8, 301), 0, 100), 95.0)
offload = with_median(np.clip(rng.normal(18, 10, 301), 0, 100), 16.0)

params = PowerParams(p_idle_w=5, p_full_w=25)
for u in (0.0, 0.16, 0.95, 1.0):
    print(f"P({u:.2f}) = {power_at(u, params):.1f} W")
print()

report = build_report(UtilizationTrace.from_values(rng.permutation(onboard), "robot"),
                      UtilizationTrace.from_values(rng.permutation(offload), "edge-offload"), params)
print(report.to_table())
