"""The time-T return map: regions, differentials and virtual branches.

Sampling the driven flow once per forcing period turns the hybrid system
into a piecewise-smooth planar map.  Its pieces are indexed by the spike
count during the pulse; the derivative across a spike needs the event-time
correction (saltation), which we verify here against finite differences.
"""
import numpy as np

from grazelab import ForcingParams, StroboMap, published_params

params = published_params(b=0.1)
forcing = ForcingParams(A=2.0, T=0.5, d=0.5)
sm = StroboMap(params, forcing)

quiet = np.array([0.2, 1.4])
spiky = np.array([0.9, 1.05])

for name, z in (("quiet", quiet), ("spiking", spiky)):
    res = sm.map(z)
    print(f"{name:8s} z={z}  ->  image={res.image}  region={res.region} "
          f"symbol={res.symbol}")

print()
print("exact differential vs central finite differences:")
for name, z in (("quiet", quiet), ("spiking", spiky)):
    D = sm.differential(z)
    fd = np.zeros((2, 2))
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd[:, j] = (sm.map(z + e).as_array() - sm.map(z - e).as_array()) / (2 * h)
    err = np.abs(D - fd).max() / np.abs(fd).max()
    rho = np.max(np.abs(np.linalg.eigvals(D)))
    print(f"{name:8s} rel err {err:.2e}   spectral radius {rho:.4f}")

print()
print("virtual branches extend the pieces past their true domains:")
v0 = sm.virtual_no_spike(spiky)
v1 = sm.virtual_one_spike(quiet)
print(f"no-spike branch at a spiking state : {v0}")
print(f"one-spike branch at a quiet state  : {v1}")
print("(the second needs a threshold hit within the search horizon; with a")
print(" weak pulse it would be undefined and return None)")
