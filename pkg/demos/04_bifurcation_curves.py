"""Continuation of grazing border-collision curves in the (b, A) plane.

Each curve is the locus where a fixed point of the return map touches a
switching boundary: the critical orbit closes up while grazing the
threshold.  A minimum-norm Newton corrector walks the curve from a
bisection seed; the no-spike curve folds back in b, so sweeping the
amplitude at fixed b crosses it twice -- the quiet state dies and later
returns.
"""
import numpy as np

from grazelab import (ForcingParams, ResidualSystem, Z0_NS1, Z1_NS1,
                      codim2_points, find_fixed_point, published_params,
                      seed_curve, trace_curve)

params = published_params(b=0.1)
forcing = ForcingParams(A=2.0, T=0.5, d=0.5)
box = np.array([[-5.0, 500.0], [0.0, 1.0], [0.05, 400.0]])

print("seeding the quiet-state grazing curve at b = 0.1 ...")
rs0 = ResidualSystem(Z0_NS1, params, forcing)
w0 = seed_curve(Z0_NS1, params, forcing, A_range=(1.2, 2.4))
print(f"  grazes at A = {w0[-1]:.6f} (graze voltage {w0[0]:.6f})")

pts0 = trace_curve(rs0, w0, step=1e-2, box=box, max_step=0.6,
                   orient=np.array([0.0, 1.0, 0.0]), max_points=300)
bs = np.array([q.w[-2] for q in pts0])
As = np.array([q.w[-1] for q in pts0])
print(f"  traced {len(pts0)} points: b in [{bs.min():.3f}, {bs.max():.3f}], "
      f"A in [{As.min():.2f}, {As.max():.2f}]")
nose = int(np.argmax(bs))
print(f"  fold (nose) near b = {bs[nose]:.3f}, A = {As[nose]:.3f}: the curve "
      "doubles back, so A sweeps at fixed b < nose cross it twice")

print("\nseeding the one-spike grazing curve ...")
rs1 = ResidualSystem(Z1_NS1, params, forcing)
w1 = seed_curve(Z1_NS1, params, forcing, A_range=(4.0, 20.0))
pts1 = trace_curve(rs1, w1, step=1e-2, box=box, max_step=0.6,
                   orient=np.array([0.0, 1.0, 0.0]), max_points=300)
print(f"  traced {len(pts1)} points")

cross = codim2_points(pts0, pts1, rs0, rs1)
for q in cross:
    print(f"\ntransversal crossing at b = {q.b:.5f}, A = {q.A:.5f} "
          f"(joint residual {q.residual:.1e})")

if cross:
    q = cross[0]
    print("\nfixed-point probes around the crossing:")
    for db, dA, tag in ((-0.05, -1.2, "low-b / low-A "),
                        (-0.05, +1.2, "low-b / high-A"),
                        (+0.05, -1.2, "high-b / low-A"),
                        (+0.05, +1.2, "high-b / high-A")):
        m = params.with_updates(b=q.b + db, unsafe=True)
        f = forcing.with_updates(A=q.A + dA)
        kinds = []
        for region in (0, 1):
            try:
                fp = find_fixed_point(region, m, f, m.equilibrium().as_array())
                if not fp.virtual and fp.stable:
                    kinds.append(f"z{region}")
            except Exception:
                pass
        print(f"  {tag}: {' and '.join(kinds) if kinds else 'neither'}")
