"""Adaptive Runge-Kutta flow engine with event location.

The integrator is a Dormand-Prince 5(4) embedded pair with the classic
quartic dense-output interpolant, vectorized over a batch of trajectories:
every lane carries its own (signed) duration, step size and error control,
so grids of initial conditions integrate in lockstep numpy operations.

Events are located inside accepted steps by sign-change bracketing on the
dense interpolant (bisection) followed by Newton polish steps in time that
re-integrate from the step start, so the reported event state satisfies the
event equation to roughly the integration tolerance rather than the
interpolant's.  Forcing discontinuities are never stepped across: callers
split the schedule into constant-drive segments (see
:func:`flow_with_events`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ForcingParams, HybridSystem, State, as_points

__all__ = [
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "EVENT_TIME_TOL",
    "TANGENCY_TOL",
    "MAX_SPIKES",
    "FlowError",
    "DivergenceError",
    "TangencyError",
    "EventSpec",
    "IntegrationResult",
    "SpikeEvent",
    "integrate",
    "flow",
    "variational",
    "extended_variational",
    "flow_to_event",
    "flow_with_events",
    "phase_segments",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
#: Event times are located to this absolute accuracy.
EVENT_TIME_TOL = 1e-12
#: |grad_h . f| below this at a spike counts as a tangential (non-transversal) hit.
TANGENCY_TOL = 1e-10
#: Abort threshold for resets within a single forcing period.
MAX_SPIKES = 64

_MAX_STEPS = 500_000
_MIN_STEP = 1e-14


class FlowError(RuntimeError):
    """Integration failure (step-size underflow, nonfinite state)."""


class DivergenceError(FlowError):
    """Too many resets in one forcing period (sliding/tangential lock-up)."""


class TangencyError(FlowError):
    """Differential requested across a non-transversal threshold hit."""


# Dormand-Prince 5(4) tableau.
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)
# Dense-output coefficients (Hairer's DOPRI5 interpolant).
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423


@dataclass(frozen=True)
class EventSpec:
    """One event to watch during integration.

    ``fn`` maps integrator states (m, dim) to scalars (m,); an event fires on
    a sign change across an accepted step, filtered by ``direction`` (+1 for
    negative-to-positive along the integration path, -1 for the reverse, 0
    for either).  ``action`` is "map" (apply ``mapper`` and continue) or
    "stop" (freeze the lane at the event).  ``accept`` may veto located
    events based on their absolute times (vetoed events are skipped as if the
    crossing never happened).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    direction: int = 0
    action: str = "map"
    mapper: Callable[[np.ndarray], np.ndarray] | None = None
    accept: Callable[[np.ndarray], np.ndarray] | None = None


@dataclass
class EventRecord:
    """Flat log of events across a batch; rows sorted by occurrence."""

    lane: np.ndarray
    spec: np.ndarray
    t: np.ndarray
    y_pre: np.ndarray
    y_post: np.ndarray

    def for_lane(self, lane: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        sel = self.lane == lane
        order = np.argsort(self.t[sel], kind="stable")
        return (self.spec[sel][order], self.t[sel][order],
                self.y_pre[sel][order], self.y_post[sel][order])


# Lane status codes.
OK = 0
STOPPED = 1
FAILED = 2
TOO_MANY_EVENTS = 3


@dataclass
class IntegrationResult:
    y: np.ndarray
    t: np.ndarray
    status: np.ndarray
    n_events: np.ndarray
    events: EventRecord | None


def _empty_record(dim: int) -> EventRecord:
    return EventRecord(lane=np.empty(0, dtype=int), spec=np.empty(0, dtype=int),
                       t=np.empty(0), y_pre=np.empty((0, dim)), y_post=np.empty((0, dim)))


def _dense_eval(theta, y0, ydiff, r3, r4, r5):
    th = theta[:, None]
    return y0 + th * (ydiff + (1.0 - th) * (r3 + th * (r4 + (1.0 - th) * r5)))


def integrate(rhs, y0, dur, *, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              events: Sequence[EventSpec] = (), max_events: int = MAX_SPIKES,
              t_offset: float = 0.0, record: bool = True,
              h0: float | None = None) -> IntegrationResult:
    """Integrate dy/dt = rhs(y) for per-lane signed durations with event handling.

    ``y0`` has shape (n, dim); ``dur`` is scalar or (n,).  The returned times
    are elapsed (signed) times per lane; recorded event times include
    ``t_offset``.  Lanes that fail keep their last valid state and carry a
    nonzero status.
    """
    y = np.array(y0, dtype=float)
    if y.ndim != 2:
        raise ValueError("integrate expects a batch of shape (n, dim)")
    n, dim = y.shape
    dur = np.broadcast_to(np.asarray(dur, dtype=float), (n,)).copy()
    t = np.zeros(n)
    status = np.zeros(n, dtype=int)
    n_ev = np.zeros((n, max(1, len(events))), dtype=int)
    log: list[tuple[int, int, float, np.ndarray, np.ndarray]] = []

    active = (dur != 0.0) & np.isfinite(dur)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial states must be finite")
    if not active.any():
        rec = _empty_record(dim) if record else None
        return IntegrationResult(y=y, t=t, status=status, n_events=n_ev, events=rec)

    sign = np.sign(dur)
    first = np.maximum(1e-6, 0.2 * np.abs(dur)) if h0 is None else np.full(n, abs(h0))
    h = sign * np.minimum(np.abs(dur), first)
    with np.errstate(all="ignore"):
        k1 = rhs(y)

    for _ in range(_MAX_STEPS):
        if not active.any():
            break
        act = active
        rem = dur - t
        hs = np.where(act, h, 0.0)
        land = act & (np.abs(hs) >= np.abs(rem))
        hs = np.where(land, rem, hs)
        hcol = hs[:, None]

        with np.errstate(all="ignore"):
            k2 = rhs(y + hcol * (_A21 * k1))
            k3 = rhs(y + hcol * (_A31 * k1 + _A32 * k2))
            k4 = rhs(y + hcol * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = rhs(y + hcol * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = rhs(y + hcol * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
            ynew = y + hcol * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            k7 = rhs(ynew)
            errv = hcol * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
            err = np.sqrt(np.mean((errv / sc) ** 2, axis=1))

        finite = np.all(np.isfinite(ynew), axis=1) & np.isfinite(err)
        err = np.where(finite, err, np.inf)
        accept = act & (err <= 1.0) & finite

        # Locate the earliest event per accepted lane.
        ev_theta = np.full(n, np.inf)
        ev_spec = np.full(n, -1, dtype=int)
        if events and accept.any():
            idx = np.flatnonzero(accept)
            y0s, y1s = y[idx], ynew[idx]
            for si, spec in enumerate(events):
                g0 = np.asarray(spec.fn(y0s), dtype=float)
                g1 = np.asarray(spec.fn(y1s), dtype=float)
                if spec.direction > 0:
                    cross = (g0 <= 0.0) & (g1 > 0.0)
                elif spec.direction < 0:
                    cross = (g0 >= 0.0) & (g1 < 0.0)
                else:
                    cross = ((g0 <= 0.0) & (g1 > 0.0)) | ((g0 >= 0.0) & (g1 < 0.0))
                if not cross.any():
                    continue
                sub = idx[cross]
                theta = _bisect_dense(spec, y[sub], ynew[sub], hs[sub],
                                      k1[sub], k3[sub], k4[sub], k5[sub],
                                      k6[sub], k7[sub], g0[cross], g1[cross])
                better = theta < ev_theta[sub]
                ev_theta[sub] = np.where(better, theta, ev_theta[sub])
                ev_spec[sub] = np.where(better, si, ev_spec[sub])

        hit = accept & (ev_spec >= 0)
        plain = accept & ~hit

        if hit.any():
            for si, spec in enumerate(events):
                sel = np.flatnonzero(hit & (ev_spec == si))
                if sel.size == 0:
                    continue
                theta = ev_theta[sel]
                t_ev, y_ev = _polish_event(rhs, spec, y[sel], hs[sel], theta,
                                           rtol=rtol, atol=atol)
                t_abs = t_offset + t[sel] + t_ev
                keep = np.ones(sel.size, dtype=bool)
                if spec.accept is not None:
                    keep = np.asarray(spec.accept(t_abs), dtype=bool)
                dropped = sel[~keep]
                if dropped.size:
                    # Vetoed: finish the step as if the crossing never happened.
                    t[dropped] += hs[dropped]
                    y[dropped] = ynew[dropped]
                    k1[dropped] = k7[dropped]
                kept = sel[keep]
                if kept.size:
                    t[kept] += t_ev[keep]
                    if spec.action == "stop":
                        y[kept] = y_ev[keep]
                        status[kept] = STOPPED
                        active[kept] = False
                        if record:
                            for j, lane in enumerate(kept):
                                log.append((int(lane), si, float(t_abs[keep][j]),
                                            y_ev[keep][j].copy(), y_ev[keep][j].copy()))
                    else:
                        y_post = np.asarray(spec.mapper(y_ev[keep]), dtype=float)
                        y[kept] = y_post
                        with np.errstate(all="ignore"):
                            k1[kept] = rhs(y_post)
                        if record:
                            for j, lane in enumerate(kept):
                                log.append((int(lane), si, float(t_abs[keep][j]),
                                            y_ev[keep][j].copy(), y_post[j].copy()))
                    n_ev[kept, si] += 1
                    over = kept[n_ev[kept, si] > max_events]
                    if over.size:
                        status[over] = TOO_MANY_EVENTS
                        active[over] = False

        if plain.any():
            sel = plain
            t[sel] += hs[sel]
            y[sel] = ynew[sel]
            k1[sel] = k7[sel]
            done = sel & land
            active[done] = False

        # Step-size update (accepted lanes may grow, rejected must shrink);
        # err = 0 maps to the maximal growth factor, err = inf to the minimal.
        with np.errstate(all="ignore"):
            fac = 0.9 * err ** -0.2
        grow = np.where(accept, np.clip(fac, 0.2, 5.0), np.clip(fac, 0.2, 0.9))
        h = np.where(act, hs * grow, h)
        dead = act & active & (np.abs(h) < _MIN_STEP * np.maximum(1.0, np.abs(t)))
        if dead.any():
            status[dead] = FAILED
            active[dead] = False
    else:
        status[active] = FAILED
        active[:] = False

    rec = None
    if record:
        if log:
            lanes = np.array([e[0] for e in log], dtype=int)
            specs = np.array([e[1] for e in log], dtype=int)
            times = np.array([e[2] for e in log])
            pres = np.array([e[3] for e in log])
            posts = np.array([e[4] for e in log])
            rec = EventRecord(lane=lanes, spec=specs, t=times, y_pre=pres, y_post=posts)
        else:
            rec = _empty_record(dim)
    return IntegrationResult(y=y, t=t, status=status, n_events=n_ev, events=rec)


def _bisect_dense(spec, y0, y1, hs, k1, k3, k4, k5, k6, k7, g0, g1, iters: int = 52):
    """Bisection for the crossing fraction theta in (0, 1] on the dense interpolant."""
    hcol = hs[:, None]
    ydiff = y1 - y0
    r3 = hcol * k1 - ydiff
    r4 = ydiff - hcol * k7 - r3
    r5 = hcol * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
    lo = np.zeros(len(hs))
    hi = np.ones(len(hs))
    s0 = np.where(g0 != 0.0, np.sign(g0), -np.sign(g1))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = np.asarray(spec.fn(_dense_eval(mid, y0, ydiff, r3, r4, r5)), dtype=float)
        same = np.sign(gm) == s0
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return hi


def _polish_event(rhs, spec, y_start, hs, theta, *, rtol, atol, iters: int = 3):
    """Newton-in-time refinement against the true flow from the step start.

    Starts from the interpolant's root estimate; each iteration re-integrates
    the bracketing lanes from the step-start state to the candidate time.
    Returns the signed elapsed times within the step and the on-event states.
    """
    tt = theta * hs
    sub_rtol = min(rtol, 1e-12)
    sub_atol = min(atol, 1e-13)
    y_ev = y_start
    for _ in range(iters):
        res = integrate(rhs, y_start, tt, rtol=sub_rtol, atol=sub_atol, record=False)
        y_ev = res.y
        g = np.asarray(spec.fn(y_ev), dtype=float)
        with np.errstate(all="ignore"):
            gdot = np.einsum("nd,nd->n", np.asarray(spec.grad(y_ev), dtype=float), rhs(y_ev))
            step = np.where(np.abs(gdot) > 0.0, g / gdot, 0.0)
        step = np.clip(step, -np.abs(hs), np.abs(hs))
        tt = np.clip(tt - step, np.minimum(0.0, hs), np.maximum(0.0, hs))
    res = integrate(rhs, y_start, tt, rtol=sub_rtol, atol=sub_atol, record=False)
    return tt, res.y


# ---------------------------------------------------------------------------
# Public flow operations.


def _as_batch(z) -> tuple[np.ndarray, bool]:
    arr = as_points(z)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr.reshape(-1, 2), False


def flow(system: HybridSystem, z, I: float, dur, *, rtol: float = DEFAULT_RTOL,
         atol: float = DEFAULT_ATOL) -> np.ndarray:
    """Integrate the smooth flow for a (signed) duration; no event handling.

    The caller guarantees no threshold crossing occurs on the way; crossings
    are neither detected nor applied here.
    """
    zz, single = _as_batch(z)

    def rhs(y):
        return system.f(y, I)

    res = integrate(rhs, zz, dur, rtol=rtol, atol=atol, record=False)
    if np.any(res.status != OK):
        raise FlowError("flow integration failed (step-size underflow or nonfinite state)")
    return res.y[0] if single else res.y.reshape(np.shape(z))


def variational(system: HybridSystem, z, I: float, dur, *, rtol: float = DEFAULT_RTOL,
                atol: float = DEFAULT_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Co-integrate the flow and its state differential; returns (z_end, delta).

    ``delta`` is the 2x2 derivative of the time-``dur`` flow map at z,
    initialized at the identity.  No events may occur on the segment.
    """
    zz, single = _as_batch(z)
    m = zz.shape[0]
    y0 = np.concatenate([zz, np.tile(np.eye(2).reshape(1, 4), (m, 1))], axis=1)

    def rhs(y):
        zpart = y[:, :2]
        delta = y[:, 2:6].reshape(-1, 2, 2)
        out = np.empty_like(y)
        out[:, :2] = system.f(zpart, I)
        J = system.jac(zpart, I)
        out[:, 2:6] = np.einsum("nij,njk->nik", J, delta).reshape(-1, 4)
        return out

    res = integrate(rhs, y0, dur, rtol=rtol, atol=atol, record=False)
    if np.any(res.status != OK):
        raise FlowError("variational integration failed")
    zend = res.y[:, :2]
    delta = res.y[:, 2:6].reshape(-1, 2, 2)
    if single:
        return zend[0], delta[0]
    return zend, delta


def extended_variational(system: HybridSystem, z, I: float, dur, *,
                         drive_on: bool | None = None, rtol: float = DEFAULT_RTOL,
                         atol: float = DEFAULT_ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Variational propagation extended by the two continuation parameters.

    Returns (z_end, delta4) where delta4 is 4x4 with block structure
    [[d z'/d z, d z'/d(b, A)], [0, I]]; the bottom rows are exact by
    construction.  ``drive_on`` marks whether this segment carries the pulse
    (the amplitude column is identically zero on off-segments); by default it
    is inferred from ``I != 0``.
    """
    if system.param_jac is None:
        raise ValueError(f"system {system.name!r} has no parameter derivatives")
    on = bool(I != 0.0) if drive_on is None else bool(drive_on)
    zz, single = _as_batch(z)
    m = zz.shape[0]
    m0 = np.zeros((m, 8))
    m0[:, 0] = 1.0  # rows of [I2 | 0] flattened
    m0[:, 5] = 1.0
    y0 = np.concatenate([zz, m0], axis=1)

    def rhs(y):
        zpart = y[:, :2]
        M = y[:, 2:10].reshape(-1, 2, 4)
        out = np.empty_like(y)
        out[:, :2] = system.f(zpart, I)
        J = system.jac(zpart, I)
        dM = np.einsum("nij,njk->nik", J, M)
        dM[:, :, 2:4] += system.param_jac(zpart, on)
        out[:, 2:10] = dM.reshape(-1, 8)
        return out

    res = integrate(rhs, y0, dur, rtol=rtol, atol=atol, record=False)
    if np.any(res.status != OK):
        raise FlowError("extended variational integration failed")
    zend = res.y[:, :2]
    top = res.y[:, 2:10].reshape(-1, 2, 4)
    full = np.zeros((m, 4, 4))
    full[:, :2, :] = top
    full[:, 2, 2] = 1.0
    full[:, 3, 3] = 1.0
    if single:
        return zend[0], full[0]
    return zend, full


def threshold_event(system: HybridSystem, *, direction: int = 1, action: str = "map",
                    accept=None) -> EventSpec:
    """Event spec for hits of the threshold set {h = 0} on plain 2-D states."""
    mapper = None if action == "stop" else (lambda y: system.reset(y))
    return EventSpec(fn=lambda y: system.h(y[:, :2]),
                     grad=lambda y: _pad_grad(system.grad_h(y[:, :2]), y.shape[1]),
                     direction=direction, action=action, mapper=mapper, accept=accept)


def _pad_grad(g, dim):
    g = np.asarray(g, dtype=float)
    if dim == 2:
        return g
    out = np.zeros((g.shape[0], dim))
    out[:, :2] = g
    return out


def flow_to_event(system: HybridSystem, z, I: float, t_max: float, *,
                  direction: int = 1, rtol: float = DEFAULT_RTOL,
                  atol: float = DEFAULT_ATOL):
    """Flow until the first threshold hit within |t| <= |t_max|.

    Returns (hit_states, hit_times, found_mask) for batches, or
    (hit_state, t_hit) / None for a single state.
    """
    zz, single = _as_batch(z)
    spec = threshold_event(system, direction=direction, action="stop")

    def rhs(y):
        return system.f(y, I)

    res = integrate(rhs, zz, t_max, rtol=rtol, atol=atol, events=[spec], record=False)
    found = res.status == STOPPED
    if np.any(res.status == FAILED):
        raise FlowError("flow_to_event integration failed")
    if single:
        if not found[0]:
            return None
        return res.y[0], float(res.t[0])
    return res.y, res.t, found


@dataclass(frozen=True)
class SpikeEvent:
    """A located threshold hit: time, on-threshold state, post-reset state."""

    t: float
    pre_state: State
    post_state: State
    transversal: bool


def phase_segments(forcing: ForcingParams, t_end: float):
    """Constant-drive segments (t_start, t_stop, I, on_flag) covering (0, t_end]."""
    segs = []
    t = 0.0
    k = 0
    while t < t_end - 1e-15 * max(1.0, t_end):
        on_stop = min(k * forcing.T + forcing.on_time, t_end)
        if on_stop > t:
            segs.append((t, on_stop, forcing.A, True))
        t = on_stop
        off_stop = min((k + 1) * forcing.T, t_end)
        if off_stop > t:
            segs.append((t, off_stop, 0.0, False))
        t = off_stop
        k += 1
    return segs


def flow_with_events(system: HybridSystem, forcing: ForcingParams, z, t_end: float, *,
                     rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                     max_spikes: int = MAX_SPIKES,
                     phase_end_tol: float = EVENT_TIME_TOL):
    """Integrate the driven hybrid system from t = 0, applying resets at spikes.

    Splits (0, t_end] at the drive breakpoints and locates threshold hits in
    each constant-drive segment.  A hit within ``phase_end_tol`` of the end of
    an on-phase is treated as a graze and not reset (the boundary convention
    that keeps region counts deterministic).  Returns (state, [SpikeEvent])
    for a single input state; for batches use :func:`flow_with_events_batch`.
    """
    zz, single = _as_batch(z)
    if not single:
        raise ValueError("flow_with_events takes a single state; see flow_with_events_batch")
    zend, counts, record, status = flow_with_events_batch(
        system, forcing, zz, t_end, rtol=rtol, atol=atol, max_spikes=max_spikes,
        phase_end_tol=phase_end_tol, record=True)
    if status[0] == TOO_MANY_EVENTS:
        raise DivergenceError(f"more than {max_spikes} resets in one forcing period")
    if status[0] == FAILED:
        raise FlowError("integration failed")
    _, times, pres, posts = record.for_lane(0)
    evs = []
    for t_ev, pre, post in zip(times, pres, posts):
        fval = system.f(pre[None, :2], drive_value(forcing, t_ev))[0]
        gh = system.grad_h(pre[None, :2])[0]
        evs.append(SpikeEvent(t=float(t_ev), pre_state=State.from_array(pre[:2]),
                              post_state=State.from_array(post[:2]),
                              transversal=bool(abs(float(gh @ fval)) > TANGENCY_TOL)))
    return zend[0], evs


def drive_value(forcing: ForcingParams, t_ev: float) -> float:
    """Drive level in effect at an event time strictly inside a phase."""
    from .model import drive_at

    return float(drive_at(t_ev, forcing))


def flow_with_events_batch(system: HybridSystem, forcing: ForcingParams, z, t_end: float, *,
                           rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
                           max_spikes: int = MAX_SPIKES,
                           phase_end_tol: float = EVENT_TIME_TOL, record: bool = False):
    """Batch version of :func:`flow_with_events`.

    Returns (end_states (n,2), spike_counts (n,), EventRecord | None,
    status (n,)).  ``spike_counts`` counts accepted resets over the whole
    span.
    """
    zz = as_points(z).reshape(-1, 2).copy()
    n = zz.shape[0]
    counts = np.zeros(n, dtype=int)
    status = np.zeros(n, dtype=int)
    logs: list[EventRecord] = []

    for (t0, t1, I, on) in phase_segments(forcing, t_end):
        if t1 - t0 <= 0:
            continue
        live = status == 0
        if not live.any():
            break
        if on:
            end = t1

            def accept(times, _end=end):
                return times <= _end - phase_end_tol

            spec = threshold_event(system, direction=1, action="map", accept=accept)
            specs = [spec]
        else:
            specs = [threshold_event(system, direction=1, action="map")]

        def rhs(y, _I=I):
            return system.f(y, _I)

        res = integrate(rhs, zz[live], t1 - t0, rtol=rtol, atol=atol, events=specs,
                        max_events=max_spikes, t_offset=t0, record=record)
        zz[live] = res.y
        idx = np.flatnonzero(live)
        counts[idx] += res.n_events[:, 0]
        bad = res.status != OK
        if bad.any():
            status[idx[bad]] = res.status[bad]
        if record and res.events is not None and res.events.lane.size:
            remapped = EventRecord(lane=idx[res.events.lane], spec=res.events.spec,
                                   t=res.events.t, y_pre=res.events.y_pre,
                                   y_post=res.events.y_post)
            logs.append(remapped)

    rec = None
    if record:
        if logs:
            rec = EventRecord(lane=np.concatenate([l.lane for l in logs]),
                              spec=np.concatenate([l.spec for l in logs]),
                              t=np.concatenate([l.t for l in logs]),
                              y_pre=np.concatenate([l.y_pre for l in logs]),
                              y_post=np.concatenate([l.y_post for l in logs]))
        else:
            rec = _empty_record(2)
    return zz, counts, rec, status
