"""Boundaries of the spike-count regions, computed by backward sweeps.

Transversal boundary pieces come from seeding the threshold set and flowing
backward for the pulse duration (inverse-resetting on the way); tangential
pieces start at the point where the driven field runs parallel to the
threshold.  A raster of the region index shows the partition the map acts
on.
"""
import numpy as np

from grazelab import (ForcingParams, StroboMap, make_lif, published_params,
                      rasterize_regions, tangency_points, tangent_boundaries,
                      transversal_boundaries)
from grazelab.flow import flow_to_event

params = published_params(b=0.1)
forcing = ForcingParams(A=2.0, T=3.0, d=0.5)

polys = transversal_boundaries(params, forcing, n_max=3, samples=256)
for pl in polys:
    print(f"boundary {pl.kind}_{pl.n}: {len(pl.points):3d} points, "
          f"V in [{pl.points[:, 0].min():.3f}, {pl.points[:, 0].max():.3f}]")

# Defining property: a first-boundary point reaches the threshold exactly
# when the pulse switches off.
lif = make_lif(params)
pl1 = next(p for p in polys if p.n == 1)
z = pl1.points[len(pl1.points) // 2]
z_hit, t_hit = flow_to_event(lif, z, forcing.A, 2 * forcing.on_time)
print(f"\nmid-boundary point flows to the threshold at t = {t_hit:.12f}")
print(f"pulse-on duration                              = {forcing.on_time:.12f}")

print("\ntangency points of the driven field on the threshold set:")
print("  A=0.0:", tangency_points(params, 0.0) or "none")
print("  A=2.0:", tangency_points(params, 2.0))

steep = published_params(b=0.5)
slow = ForcingParams(A=2.0, T=5.0, d=0.5)
spl = tangent_boundaries(steep, slow, n_max=1, samples=48)
print(f"\nsteep-nullcline, slow-drive case: {len(spl)} tangential piece(s)")

Vs, Ts, reg = rasterize_regions(params, forcing, v_range=(0.0, 3.0),
                                theta_range=(0.6, 3.0), nv=60, ntheta=24)
print("\nregion raster (rows: theta top to bottom; '.' = outside domain):")
chars = {-1: ".", 0: "0", 1: "1", 2: "2", 3: "3"}
for j in reversed(range(0, 24, 2)):
    print("  " + "".join(chars.get(int(r), "+") for r in reg[j]))
