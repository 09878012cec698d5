"""The stroboscopic (time-T return) map of the driven hybrid system.

The map sends a subthreshold state through one forcing period: pulse-on flow
with resets at threshold hits, then pulse-off flow.  It is smooth on each
region of constant spike count and discontinuous across the switching
boundaries between them.  This module provides region classification, the
map itself (single and batched), its exact differential including the
event-time (saltation) corrections, and the virtual extensions of the
no-spike and one-spike branches past their true domains.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import (DEFAULT_ATOL, DEFAULT_RTOL, EVENT_TIME_TOL, MAX_SPIKES, OK,
                   TANGENCY_TOL, TOO_MANY_EVENTS, DivergenceError, FlowError,
                   SpikeEvent, TangencyError, flow, flow_to_event,
                   flow_with_events, flow_with_events_batch, variational)
from .model import ForcingParams, HybridSystem, ModelParams, State, as_points, make_lif

__all__ = ["StroboResult", "StroboMap"]


@dataclass(frozen=True)
class StroboResult:
    """One application of the stroboscopic map.

    ``region`` is the spike count over the pulse-on window; ``symbol`` is the
    binary itinerary letter (0 or 1), defined only for regions 0 and 1.
    """

    image: State
    region: int
    events: tuple[SpikeEvent, ...]
    symbol: int | None

    def as_array(self) -> np.ndarray:
        return self.image.as_array()


class StroboMap:
    """Stroboscopic map of a square-wave-forced hybrid threshold system.

    The boundary convention: a threshold hit within ``EVENT_TIME_TOL`` of the
    end of the pulse-on window counts as a graze, not a spike, so the
    boundary state belongs to the smaller-index region deterministically.
    """

    def __init__(self, model: ModelParams, forcing: ForcingParams, *,
                 system: HybridSystem | None = None, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL, max_spikes: int = MAX_SPIKES,
                 virtual_horizon_periods: float = 10.0):
        self.model = model
        self.forcing = forcing
        self.system = make_lif(model) if system is None else system
        self.rtol = rtol
        self.atol = atol
        self.max_spikes = max_spikes
        self.virtual_horizon = virtual_horizon_periods * forcing.T

    # -- basic map -----------------------------------------------------

    def map(self, z) -> StroboResult:
        """Apply the map to one state, with the full event log."""
        zz = as_points(z)
        image, events = flow_with_events(self.system, self.forcing, zz, self.forcing.T,
                                         rtol=self.rtol, atol=self.atol,
                                         max_spikes=self.max_spikes)
        on_events = tuple(e for e in events
                          if e.t <= self.forcing.on_time - EVENT_TIME_TOL / 2)
        region = len(on_events)
        symbol = min(region, 1) if region <= 1 else None
        return StroboResult(image=State.from_array(image), region=region,
                            events=tuple(events), symbol=symbol)

    def __call__(self, z) -> StroboResult:
        return self.map(z)

    def map_batch(self, Z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized map: returns (images (n,2), spike counts (n,), status (n,)).

        Nonzero status marks lanes that failed (divergence or integrator
        breakdown); their images are the last valid states.
        """
        Z = as_points(Z).reshape(-1, 2)
        images, counts, _, status = flow_with_events_batch(
            self.system, self.forcing, Z, self.forcing.T, rtol=self.rtol,
            atol=self.atol, max_spikes=self.max_spikes, record=False)
        return images, counts, status

    def classify(self, z) -> int:
        """Spike count of the trajectory over the pulse-on window (region index)."""
        zz = as_points(z)
        single = zz.ndim == 1
        Z = zz.reshape(-1, 2)
        _, counts, _, status = flow_with_events_batch(
            self.system, self.forcing, Z, self.forcing.on_time, rtol=self.rtol,
            atol=self.atol, max_spikes=self.max_spikes, record=False)
        if np.any(status == TOO_MANY_EVENTS):
            raise DivergenceError(
                f"more than {self.max_spikes} resets during the pulse-on window")
        if np.any(status != OK):
            raise FlowError("classification integration failed")
        return int(counts[0]) if single else counts

    # -- differential ---------------------------------------------------

    def differential(self, z, *, return_image: bool = False):
        """Exact differential of the map branch the state sits on.

        Propagates the 2x2 variational matrix across each pulse segment and
        applies the event-time correction (saltation matrix) at every
        transversal reset.  Raises :class:`TangencyError` when a hit is
        tangential (the map is non-differentiable there).
        """
        res = self.map(z)
        on_events = [e for e in res.events if e.t <= self.forcing.on_time - EVENT_TIME_TOL / 2]
        M, image = self._chain(as_points(z), on_events)
        if return_image:
            return M, image
        return M

    def _chain(self, z0, events, durations: tuple[float, float] | None = None):
        """Variational product over [0, on] + [on, T] with saltation jumps.

        ``events`` carry absolute hit times under the pulse-on flow; the hit
        times may exceed the pulse-on duration (virtual one-spike branch), in
        which case the post-reset segment runs backward.
        """
        sys = self.system
        A = self.forcing.A
        on = self.forcing.on_time if durations is None else durations[0]
        off = self.forcing.off_time if durations is None else durations[1]
        M = np.eye(2)
        z_cur = np.asarray(z0, dtype=float)
        t_cur = 0.0
        for ev in events:
            pre = ev.pre_state.as_array()
            post = ev.post_state.as_array()
            _, d = variational(sys, z_cur, A, ev.t - t_cur, rtol=self.rtol, atol=self.atol)
            M = d @ M
            fm = sys.f(pre[None, :], A)[0]
            fp = sys.f(post[None, :], A)[0]
            gh = sys.grad_h(pre[None, :])[0]
            den = float(gh @ fm)
            if abs(den) < TANGENCY_TOL:
                raise TangencyError(
                    f"tangential threshold hit at t = {ev.t:.6g}: |grad_h . f| = "
                    f"{abs(den):.3g} is below {TANGENCY_TOL:g}; the map is not "
                    "differentiable here")
            RJ = sys.reset_jac(pre[None, :])[0]
            salt = RJ + np.outer(fp - RJ @ fm, gh) / den
            M = salt @ M
            z_cur = post
            t_cur = ev.t
        z_on, d = variational(sys, z_cur, A, on - t_cur, rtol=self.rtol, atol=self.atol)
        M = d @ M
        image, d0 = variational(sys, z_on, 0.0, off, rtol=self.rtol, atol=self.atol)
        M = d0 @ M
        return M, State.from_array(image)

    # -- virtual extensions ----------------------------------------------

    def virtual_no_spike(self, z) -> State:
        """No-spike branch evaluated anywhere: ignore the reset and keep flowing."""
        image, _ = self.branch(z, 0)
        return image

    def virtual_one_spike(self, z) -> State | None:
        """One-spike branch extended past its domain, or None when undefined.

        Flows under the pulse field until the first threshold hit (searching
        up to the virtual horizon, possibly past the pulse-on window), resets,
        rewinds to the end of the on-window, then applies the off flow.
        """
        try:
            image, _ = self.branch(z, 1)
        except FlowError:
            return None
        return image

    def branch(self, z, n_spikes: int) -> tuple[State, list[SpikeEvent]]:
        """Evaluate the fixed n-spike branch, virtually extended if needed.

        For n = 0 the reset is ignored outright.  For n >= 1 the first n hits
        of the pulse-on flow are taken wherever they occur within the virtual
        horizon (hit times past the on-window rewind with backward flow).
        Raises FlowError when a required hit does not exist.
        """
        zz = as_points(z)
        sys = self.system
        A = self.forcing.A
        events: list[SpikeEvent] = []
        z_cur = zz.astype(float)
        t_cur = 0.0
        for _ in range(n_spikes):
            hit = flow_to_event(sys, z_cur, A, self.virtual_horizon - t_cur,
                                rtol=self.rtol, atol=self.atol)
            if hit is None:
                raise FlowError(
                    f"the {n_spikes}-spike branch is undefined here: no threshold "
                    f"hit within {self.virtual_horizon:g} time units")
            z_hit, dt = hit
            t_cur += dt
            post = sys.reset(z_hit[None, :])[0]
            fm = sys.f(z_hit[None, :], A)[0]
            gh = sys.grad_h(z_hit[None, :])[0]
            events.append(SpikeEvent(t=t_cur, pre_state=State.from_array(z_hit),
                                     post_state=State.from_array(post),
                                     transversal=bool(abs(float(gh @ fm)) > TANGENCY_TOL)))
            z_cur = post
        z_on = flow(sys, z_cur, A, self.forcing.on_time - t_cur,
                    rtol=self.rtol, atol=self.atol)
        image = flow(sys, z_on, 0.0, self.forcing.off_time, rtol=self.rtol, atol=self.atol)
        return State.from_array(image), events

    def branch_differential(self, z, n_spikes: int) -> tuple[State, np.ndarray]:
        """Image and differential of the fixed n-spike branch (virtual allowed)."""
        image, events = self.branch(z, n_spikes)
        M, image2 = self._chain(as_points(z), events)
        return image2, M
