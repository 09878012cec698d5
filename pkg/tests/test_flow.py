import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grazelab.flow import (EVENT_TIME_TOL, DivergenceError, extended_variational,
                           flow, flow_to_event, flow_with_events,
                           flow_with_events_batch, variational)
from grazelab.model import ForcingParams, make_lif, published_params

from oracles import (central_difference_jacobian, flat_threshold_spike_time,
                     scipy_flow, voltage_closed_form)


@pytest.fixture(scope="module")
def lif(params):
    return make_lif(params)


class TestFlow:
    def test_equilibrium_stays_put(self, params, lif):
        eq = params.equilibrium().as_array()
        for dur in (0.1, 1.0, 7.0):
            assert np.abs(flow(lif, eq, 0.0, dur) - eq).max() < 1e-13

    def test_voltage_closed_form(self, params, lif):
        rng = np.random.default_rng(7)
        for _ in range(20):
            V0 = rng.uniform(-0.5, 1.5)
            th0 = rng.uniform(1.0, 2.0)
            I = rng.uniform(0.0, 3.0)
            t = rng.uniform(0.05, 2.0)
            out = flow(lif, np.array([V0, th0]), I, t, rtol=1e-12, atol=1e-14)
            assert out[0] == pytest.approx(voltage_closed_form(V0, I, t, params),
                                           abs=5e-12)

    def test_group_property_roundtrip(self, params, lif):
        z = np.array([0.3, 1.2])
        tol = 1e-10
        zt = flow(lif, z, 2.0, 0.8, rtol=tol, atol=1e-12)
        zb = flow(lif, zt, 2.0, -0.8, rtol=tol, atol=1e-12)
        assert np.abs(zb - z).max() < 10 * tol * 10  # 10x tol contract, scaled

    @given(V=st.floats(0.0, 1.0), th=st.floats(1.05, 2.0),
           t=st.floats(0.05, 1.5), I=st.sampled_from([0.0, 0.7, 2.0]))
    @settings(max_examples=25, deadline=None)
    def test_backward_forward_identity(self, params, lif, V, th, t, I):
        z = np.array([V, th])
        zt = flow(lif, z, I, t)
        zb = flow(lif, zt, I, -t)
        assert np.abs(zb - z).max() < 1e-8

    def test_richardson_order(self, params, lif):
        # Halving the tolerance must reduce error against the closed form
        # consistently with a 5th-order scheme (ratio roughly 2^(5/5)=2 in
        # tolerance-controlled error; we only require monotone improvement
        # by about the tolerance ratio).
        z = np.array([0.2, 1.4])
        I, t = 2.0, 1.1
        exact = voltage_closed_form(0.2, I, t, params)
        errs = []
        for tol in (1e-6, 1e-8, 1e-10):
            out = flow(lif, z, I, t, rtol=tol, atol=tol * 1e-2)
            errs.append(abs(out[0] - exact))
        assert errs[1] < errs[0]
        assert errs[2] <= errs[1] + 1e-14
        assert errs[2] < 1e-9

    def test_matches_scipy(self, params, lif):
        z = np.array([0.4, 1.1])
        ours = flow(lif, z, 2.0, 1.3, rtol=1e-12, atol=1e-14)
        ref = scipy_flow(z, 2.0, 1.3, params)
        assert np.abs(ours - ref).max() < 1e-10

    def test_batch_matches_single(self, params, lif):
        rng = np.random.default_rng(3)
        Z = np.stack([rng.uniform(0, 1, 5), rng.uniform(1.1, 1.9, 5)], axis=1)
        batch = flow(lif, Z, 1.5, 0.7)
        for k in range(5):
            single = flow(lif, Z[k], 1.5, 0.7)
            assert np.abs(batch[k] - single).max() < 1e-12


class TestVariational:
    def test_zero_duration_identity(self, params, lif):
        _, d = variational(lif, np.array([0.3, 1.3]), 2.0, 0.0)
        assert np.array_equal(d, np.eye(2))

    def test_equilibrium_eigenvalues(self, params, lif):
        eq = params.equilibrium().as_array()
        T = 0.5
        _, d = variational(lif, eq, 0.0, T)
        eig = np.sort(np.linalg.eigvals(d).real)
        expect = np.sort([np.exp(-T), np.exp(-T / params.tau_theta)])
        assert np.abs(eig - expect).max() < 1e-8

    def test_matches_finite_differences(self, params, lif):
        z = np.array([0.45, 1.15])
        _, d = variational(lif, z, 2.0, 0.9)
        fd = central_difference_jacobian(lambda x: flow(lif, x, 2.0, 0.9), z)
        assert np.abs(d - fd).max() / np.abs(fd).max() < 1e-5


class TestExtendedVariational:
    def test_zero_duration_identity(self, params, lif):
        _, d4 = extended_variational(lif, np.array([0.3, 1.3]), 2.0, 0.0)
        assert np.array_equal(d4, np.eye(4))

    def test_block_structure_exact(self, params, lif):
        _, d4 = extended_variational(lif, np.array([0.3, 1.3]), 2.0, 0.9)
        assert np.array_equal(d4[2:, :2], np.zeros((2, 2)))
        assert np.array_equal(d4[2:, 2:], np.eye(2))

    def test_amplitude_column_zero_off_pulse(self, params, lif):
        _, d4 = extended_variational(lif, np.array([0.3, 1.3]), 0.0, 0.9)
        assert np.abs(d4[:2, 3]).max() == 0.0

    def test_parameter_columns_match_fd(self, params, lif):
        z = np.array([0.4, 1.1])
        dur = 0.9
        _, d4 = extended_variational(lif, z, 2.0, dur, drive_on=True)
        step = 1e-6

        def with_b(b):
            return flow(make_lif(published_params(b=b)), z, 2.0, dur)

        col_b = (with_b(0.1 + step) - with_b(0.1 - step)) / (2 * step)
        col_A = (flow(lif, z, 2.0 + step, dur) - flow(lif, z, 2.0 - step, dur)) \
            / (2 * step)
        assert np.abs(d4[:2, 2] - col_b).max() < 1e-5 * max(1, np.abs(col_b).max())
        assert np.abs(d4[:2, 3] - col_A).max() < 1e-5 * max(1, np.abs(col_A).max())


class TestEvents:
    def test_no_events_when_drive_off(self, params, lif):
        f = ForcingParams(A=0.0, T=0.5, d=0.5)
        rng = np.random.default_rng(11)
        Z = np.stack([rng.uniform(0, 1, 16), rng.uniform(1.05, 2.0, 16)], axis=1)
        _, counts, _, status = flow_with_events_batch(lif, f, Z, 5.0)
        assert counts.sum() == 0
        assert (status == 0).all()

    def test_flat_threshold_spike_time(self):
        p0 = published_params(b=0.0)
        sys0 = make_lif(p0)
        rng = np.random.default_rng(5)
        for _ in range(25):
            A = rng.uniform(1.5, 4.0)
            V0 = rng.uniform(0.0, 0.9)
            f = ForcingParams(A=A, T=4.0, d=0.5)
            t_star = flat_threshold_spike_time(V0, A, p0)
            if not 0 < t_star < f.on_time:
                continue
            z0 = np.array([V0, p0.a + 1.0])
            _, events = flow_with_events(sys0, f, z0, f.on_time)
            assert len(events) >= 1
            assert events[0].t == pytest.approx(t_star, abs=1e-9)
            # the located hit sits on the threshold set to the event tolerance
            pre = events[0].pre_state
            assert abs(pre.V - pre.theta) < 1e-12

    def test_event_times_monotone_and_in_pulse(self, params, lif):
        f = ForcingParams(A=3.0, T=0.5, d=0.5)
        z = np.array([0.9, 1.05])
        _, events = flow_with_events(lif, f, z, 4 * f.T)
        assert len(events) >= 1
        times = [e.t for e in events]
        assert times == sorted(times)
        for t in times:
            phase = t % f.T
            assert 0.0 < phase <= f.on_time + 1e-9

    def test_reset_applied(self, params, lif):
        f = ForcingParams(A=3.0, T=0.5, d=0.5)
        z = np.array([0.9, 1.05])
        _, events = flow_with_events(lif, f, z, f.T)
        ev = events[0]
        assert ev.post_state.V == params.Vr
        assert ev.post_state.theta == pytest.approx(ev.pre_state.theta + params.Delta,
                                                    abs=1e-12)
        assert ev.transversal

    def test_divergence_reported(self, params, lif):
        f = ForcingParams(A=3.0, T=0.5, d=0.5)
        with pytest.raises(DivergenceError):
            flow_with_events(lif, f, np.array([0.9, 1.05]), f.T, max_spikes=0)

    def test_flow_to_event_backward_horizon(self, params, lif):
        # no hit within the horizon -> None
        assert flow_to_event(lif, np.array([0.1, 1.5]), 0.0, 5.0) is None
