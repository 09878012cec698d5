"""Census of attracting periodic orbits and their symbolic itineraries.

Between the amplitude where the quiet fixed point dies and the one where
the every-period spiker appears, the attractor is a periodic orbit mixing
quiet and spiking periods.  Its per-period spike sequence is the itinerary;
the fraction of spiking periods (the rotation number) climbs a staircase as
the amplitude grows, and every block is maximin (evenly spread ones).
"""
import numpy as np

from grazelab import ForcingParams, census, published_params, scan_1d

params = published_params(b=0.1)
forcing = ForcingParams(A=1.0, T=0.5, d=0.5)

print("single census runs inside the period-adding range:")
for A in (1.94, 2.5, 3.1, 4.05, 5.6, 8.4):
    rep = census(params, forcing.with_updates(A=A), n_grid=(32, 32))
    for o in rep.orbits:
        if o.period > 1 or len(rep.orbits) == 1:
            print(f"  A={A:5.2f}: period {o.period:2d}  itinerary {o.itinerary}  "
                  f"rotation {o.rotation}  maximin={o.maximin}")

print("\ncoarse staircase (rotation number vs amplitude):")
A_values = np.linspace(1.88, 9.4, 16)
rows = scan_1d(params, forcing, A_values, n_grid=(24, 24))
for r in rows:
    if r["failed"] or not r["orbits"]:
        print(f"  A={r['A']:5.2f}: census failed (accumulation zone)")
        continue
    o = max(r["orbits"], key=lambda q: q["period"])
    val = o["rotation_value"]
    bar = "#" * int(round(40 * val)) if val == val else ""
    print(f"  A={r['A']:5.2f}: rho={o['rotation']:>5s} {bar}")

print("\nmultistability at a steeper threshold nullcline (b = 0.55):")
steep = published_params(b=0.55)
rep = census(steep, ForcingParams(A=7.131, T=0.5, d=0.5), n_grid=(40, 40))
for o in rep.orbits:
    print(f"  period {o.period}  itinerary {o.itinerary or o.spikes}")
print("  -> several attractors coexist at one parameter point")
