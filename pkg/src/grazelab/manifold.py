"""Switching boundaries of the stroboscopic map and region rasterization.

The boundary between the n-1 and n spike-count regions has two pieces: a
transversal piece (trajectories that reach the threshold exactly when the
pulse switches off) and a tangential piece (trajectories that graze the
threshold tangentially during the pulse).  Both are computed by backward
integration under the pulse-on flow: the transversal piece from a sweep of
seeds on the threshold set, the tangential piece from the tangency point,
applying the inverse reset at each hit of the reset manifold {V = Vr} and
counting hits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .flow import DEFAULT_ATOL, DEFAULT_RTOL, OK, EventSpec, integrate
from .model import ForcingParams, HybridSystem, ModelParams, State, make_lif

__all__ = [
    "ManifoldPolyline",
    "transversal_boundaries",
    "tangency_points",
    "tangent_boundaries",
    "rasterize_regions",
]


@dataclass(frozen=True)
class ManifoldPolyline:
    """Ordered sample of one switching-boundary piece.

    ``kind`` is "NS" (transversal graze at the pulse switch-off) or "S"
    (tangential graze); the boundary with index n separates the regions with
    n-1 and n spikes.
    """

    kind: str
    n: int
    points: np.ndarray

    def __post_init__(self) -> None:
        if self.kind not in ("NS", "S"):
            raise ValueError(f"kind must be 'NS' or 'S', got {self.kind!r}")


def _reset_manifold_event(system: HybridSystem, Vr: float) -> EventSpec:
    """Backward hit of the reset manifold {V = Vr}, mapped by the inverse reset."""

    def fn(y):
        return y[:, 0] - Vr

    def grad(y):
        g = np.zeros_like(y)
        g[:, 0] = 1.0
        return g

    return EventSpec(fn=fn, grad=grad, direction=-1, action="map",
                     mapper=lambda y: system.reset_inverse(y))


def _threshold_exit_event(system: HybridSystem, min_time: float = 0.0) -> EventSpec:
    """Crossing into the superthreshold side {h > 0}; stops the lane."""
    accept = None
    if min_time > 0.0:
        def accept(times, _m=min_time):
            return np.abs(times) > _m

    return EventSpec(fn=lambda y: system.h(y), grad=lambda y: system.grad_h(y),
                     direction=1, action="stop", accept=accept)


def transversal_boundaries(model: ModelParams, forcing: ForcingParams, *,
                           n_max: int = 1, samples: int = 512,
                           theta_range: tuple[float, float] | None = None,
                           system: HybridSystem | None = None,
                           rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL
                           ) -> list[ManifoldPolyline]:
    """Backward sweep from the threshold set: the "NS" boundary pieces.

    Seeds (theta, theta) are swept uniformly over ``theta_range`` (default
    covers grazing heights reachable with up to ``n_max`` resets), integrated
    backward for the pulse-on duration, applying the inverse reset at each
    hit of {V = Vr}.  An endpoint reached after k hits lies on the NS
    boundary of index k+1.  Seeds whose backward path exits the subthreshold
    domain are skipped (they signal a tangential-boundary piece), as are
    seeds producing states outside the domain.
    """
    if forcing.A <= 0.0:
        raise ValueError("transversal boundaries require a positive pulse amplitude")
    sys = make_lif(model) if system is None else system
    if sys.reset_inverse is None:
        raise ValueError("system lacks an inverse reset map")
    theta_eq = float(model.theta_inf(model.V0))
    if theta_range is None:
        theta_range = (theta_eq - model.Delta,
                       theta_eq + n_max * model.Delta + forcing.A)
    thetas = np.linspace(theta_range[0], theta_range[1], samples)
    seeds = np.stack([thetas, thetas], axis=1)

    def rhs(y):
        return sys.f(y, forcing.A)

    events = [_reset_manifold_event(sys, model.Vr), _threshold_exit_event(sys)]
    res = integrate(rhs, seeds, -forcing.on_time, rtol=rtol, atol=atol,
                    events=events, record=False)
    hits = res.n_events[:, 0]
    keep = res.status == OK
    # Endpoints must still be subthreshold; inverse resets may have dropped
    # below the voltage floor.
    z = res.y
    keep &= (z[:, 0] >= model.Vr - 1e-12) & (z[:, 0] < z[:, 1])

    out = []
    for k in range(n_max):
        sel = keep & (hits == k)
        if sel.any():
            out.append(ManifoldPolyline(kind="NS", n=k + 1, points=z[sel].copy()))
    return out


def tangency_points(model: ModelParams, A: float, *,
                    v_range: tuple[float, float] | None = None,
                    scan: int = 4096) -> list[State]:
    """Points on the threshold set where the pulse-on flow is tangent to it.

    Solves (V - V0 - A)*tau_theta - V + theta_inf(V) = 0 on V = theta by a
    bracketing scan plus safeguarded root refinement; returns all roots in
    ascending V (often none: with the pulse off and feasible parameters the
    equation has no solution).
    """
    def g(V):
        return (V - model.V0 - A) * model.tau_theta - V + float(model.theta_inf(V))

    if v_range is None:
        v_range = (model.Vr, model.V0 + max(A, 1.0) + 10.0)
    Vs = np.linspace(v_range[0], v_range[1], scan)
    vals = np.array([g(v) for v in Vs])
    roots: list[float] = []
    sign = np.sign(vals)
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        root = brentq(g, Vs[i], Vs[i + 1], xtol=1e-14, rtol=8.9e-16)
        roots.append(float(root))
    for i in np.flatnonzero(vals == 0.0):
        roots.append(float(Vs[i]))
    roots = sorted(set(roots))
    return [State(V, V) for V in roots]


def tangent_boundaries(model: ModelParams, forcing: ForcingParams, *,
                       n_max: int = 1, samples: int = 256,
                       system: HybridSystem | None = None,
                       rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL
                       ) -> list[ManifoldPolyline]:
    """Backward sweep from tangency points: the "S" boundary pieces.

    Each tangency point is integrated backward for the pulse-on duration,
    sampling the path uniformly in backward time; a sample reached after k
    inverse resets lies on the S boundary of index k+1.  Sampling stops if
    the backward path crosses the threshold set (forward trajectories from
    beyond that crossing would spike transversally before the graze).
    """
    sys = make_lif(model) if system is None else system
    if sys.reset_inverse is None:
        raise ValueError("system lacks an inverse reset map")
    points = tangency_points(model, forcing.A)
    out: list[ManifoldPolyline] = []

    def rhs(y):
        return sys.f(y, forcing.A)

    def grazes_from_below(tp) -> bool:
        # h has a maximum along the flow at the tangency; a minimum means the
        # touch comes from the superthreshold side and bounds no region.
        z = tp.as_array()[None, :]
        f = sys.f(z, forcing.A)[0]
        J = sys.jac(z, forcing.A)[0]
        gh = sys.grad_h(z)[0]
        return float(gh @ (J @ f)) < 0.0

    points = [tp for tp in points if grazes_from_below(tp)]
    for tp in points:
        chunk = forcing.on_time / samples
        z = tp.as_array()[None, :]
        hits = 0
        buckets: dict[int, list[np.ndarray]] = {0: [z[0].copy()]}
        events = [_reset_manifold_event(sys, model.Vr),
                  _threshold_exit_event(sys, min_time=1e-9)]
        for _ in range(samples):
            res = integrate(rhs, z, -chunk, rtol=rtol, atol=atol, events=events,
                            record=False)
            if res.status[0] != OK:
                break
            hits += int(res.n_events[0, 0])
            z = res.y
            if z[0, 0] < model.Vr - 1e-12:
                break
            buckets.setdefault(hits, []).append(z[0].copy())
            if hits >= n_max:
                break
        for k, pts in sorted(buckets.items()):
            if k < n_max and pts:
                out.append(ManifoldPolyline(kind="S", n=k + 1, points=np.array(pts)))
    return out


def rasterize_regions(model: ModelParams, forcing: ForcingParams, *,
                      v_range: tuple[float, float], theta_range: tuple[float, float],
                      nv: int = 128, ntheta: int = 128,
                      system: HybridSystem | None = None,
                      rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL):
    """Spike-count region index on a rectangular grid.

    Returns (V_values (nv,), theta_values (ntheta,), regions (ntheta, nv))
    with -1 marking grid cells outside the subthreshold domain.
    """
    from .strobo import StroboMap

    sm = StroboMap(model, forcing, system=system, rtol=rtol, atol=atol)
    Vs = np.linspace(v_range[0], v_range[1], nv)
    Ts = np.linspace(theta_range[0], theta_range[1], ntheta)
    VV, TT = np.meshgrid(Vs, Ts)
    Z = np.stack([VV.ravel(), TT.ravel()], axis=1)
    inside = model.is_subthreshold(Z)
    regions = np.full(Z.shape[0], -1, dtype=int)
    if inside.any():
        counts = sm.classify(Z[inside])
        regions[inside] = counts
    return Vs, Ts, regions.reshape(ntheta, nv)
