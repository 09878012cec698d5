import numpy as np
import pytest

from grazelab.flow import flow, flow_to_event, integrate, flow_with_events
from grazelab.manifold import (rasterize_regions, tangency_points,
                               tangent_boundaries, transversal_boundaries)
from grazelab.model import ForcingParams, make_lif, published_params
from grazelab.strobo import StroboMap


@pytest.fixture(scope="module")
def fig1_forcing():
    return ForcingParams(A=2.0, T=3.0, d=0.5)


@pytest.fixture(scope="module")
def ns_polys(params, fig1_forcing):
    return transversal_boundaries(params, fig1_forcing, n_max=3, samples=256)


class TestTransversalBoundaries:
    def test_indices_one_to_three_nonempty(self, ns_polys):
        found = {pl.n for pl in ns_polys}
        assert {1, 2, 3} <= found

    def test_forward_hit_at_switch_off(self, params, fig1_forcing, ns_polys):
        lif = make_lif(params)
        pl = next(p for p in ns_polys if p.n == 1)
        for z in pl.points[:: max(1, len(pl.points) // 8)]:
            hit = flow_to_event(lif, z, fig1_forcing.A, 2 * fig1_forcing.on_time)
            assert hit is not None
            z_hit, t_hit = hit
            assert abs(t_hit - fig1_forcing.on_time) < 1e-9
            assert abs(z_hit[0] - z_hit[1]) < 1e-9

    def test_classify_flips_across(self, params, fig1_forcing, ns_polys):
        sm = StroboMap(params, fig1_forcing)
        pl = next(p for p in ns_polys if p.n == 1)
        z = pl.points[len(pl.points) // 2]
        n = np.array([1.0, -1.0]) / np.sqrt(2.0)
        assert sm.classify(z + 1e-6 * n) == 1
        assert sm.classify(z - 1e-6 * n) == 0

    def test_second_boundary_hit_count(self, params, fig1_forcing, ns_polys):
        # A point on the index-2 boundary resets once in the pulse and then
        # grazes exactly at switch-off.
        lif = make_lif(params)
        pl = next(p for p in ns_polys if p.n == 2)
        z = pl.points[len(pl.points) // 2]
        _, events = flow_with_events(lif, fig1_forcing, z, fig1_forcing.on_time)
        assert len(events) == 1
        assert events[0].t < fig1_forcing.on_time - 1e-9
        z_end = flow(lif, events[0].post_state.as_array(), fig1_forcing.A,
                     fig1_forcing.on_time - events[0].t)
        assert abs(z_end[0] - z_end[1]) < 1e-8

    def test_requires_positive_amplitude(self, params):
        with pytest.raises(ValueError, match="positive"):
            transversal_boundaries(params, ForcingParams(A=0.0, T=1.0, d=0.5))


class TestTangency:
    def test_none_when_drive_off(self, params):
        assert tangency_points(params, 0.0) == []

    def test_root_residual(self, params):
        pts = tangency_points(params, 2.0)
        assert len(pts) >= 1
        for s in pts:
            g = (s.V - params.V0 - 2.0) * params.tau_theta - s.V \
                + float(params.theta_inf(s.V))
            assert abs(g) < 1e-12

    def test_flow_parallel_to_threshold(self, params):
        # equal components of the driven field at the tangency point
        lif = make_lif(params)
        for s in tangency_points(params, 2.0):
            f = lif.f(s.as_array()[None, :], 2.0)[0]
            assert abs(f[0] - f[1]) < 1e-10


class TestTangentBoundaries:
    def test_double_root_in_time(self):
        # Slow drive with a steep threshold nullcline: the tangential
        # boundary genuinely separates regions there.
        p = published_params(b=0.5)
        f = ForcingParams(A=2.0, T=5.0, d=0.5)
        polys = tangent_boundaries(p, f, n_max=1, samples=64)
        assert polys
        lif = make_lif(p)
        pl = polys[0]
        z = pl.points[len(pl.points) // 3]

        def rhs(y):
            return lif.f(y, f.A)

        ts = np.linspace(0.0, f.on_time, 2000)
        res = integrate(rhs, np.tile(z, (ts.size, 1)), ts, record=False)
        h = res.y[:, 0] - res.y[:, 1]
        k = int(np.argmax(h))
        assert abs(h[k]) < 1e-8
        dh = np.gradient(h, ts)
        assert abs(dh[k]) < 1e-4

    def test_from_above_tangency_produces_no_boundary(self, params, fig1_forcing):
        # The fast-drive tangency touches from the superthreshold side and
        # must be filtered out.
        assert tangent_boundaries(params, fig1_forcing, n_max=1, samples=32) == []


class TestRaster:
    def test_drive_off_all_zero(self, params):
        f = ForcingParams(A=0.0, T=0.5, d=0.5)
        _, _, reg = rasterize_regions(params, f, v_range=(0.0, 0.9),
                                      theta_range=(1.05, 1.8), nv=12, ntheta=12)
        assert set(np.unique(reg)) <= {0}

    def test_adjacent_regions_differ_by_one(self, params, fig1_forcing):
        Vs, Ts, reg = rasterize_regions(params, fig1_forcing, v_range=(0.0, 2.4),
                                        theta_range=(0.9, 2.4), nv=40, ntheta=40)
        inside = reg >= 0
        dh = np.abs(np.diff(reg, axis=1))
        dh[~(inside[:, 1:] & inside[:, :-1])] = 0
        dv = np.abs(np.diff(reg, axis=0))
        dv[~(inside[1:, :] & inside[:-1, :])] = 0
        assert dh.max() <= 1
        assert dv.max() <= 1

    def test_deterministic(self, params, fig1_forcing):
        a = rasterize_regions(params, fig1_forcing, v_range=(0.0, 1.5),
                              theta_range=(1.0, 2.0), nv=16, ntheta=16)
        b = rasterize_regions(params, fig1_forcing, v_range=(0.0, 1.5),
                              theta_range=(1.0, 2.0), nv=16, ntheta=16)
        assert np.array_equal(a[2], b[2])
