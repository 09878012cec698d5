import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grazelab.flow import flow, flow_with_events
from grazelab.manifold import transversal_boundaries
from grazelab.model import ForcingParams, make_lif, published_params
from grazelab.strobo import StroboMap

from oracles import central_difference_jacobian, scipy_strobo


@pytest.fixture(scope="module")
def sm(params, forcing_fast):
    return StroboMap(params, forcing_fast)


@pytest.fixture(scope="module")
def sm_off(params, forcing_off):
    return StroboMap(params, forcing_off)


def spiking_state():
    return np.array([0.9, 1.05])


def quiet_state():
    return np.array([0.2, 1.4])


class TestClassify:
    def test_drive_off_is_zero(self, params, sm_off):
        rng = np.random.default_rng(0)
        Z = np.stack([rng.uniform(0, 1, 32), rng.uniform(1.05, 2.0, 32)], axis=1)
        assert (sm_off.classify(Z) == 0).all()

    def test_small_amplitude_equilibrium(self, params):
        sm = StroboMap(params, ForcingParams(A=0.05, T=0.5, d=0.5))
        assert sm.classify(params.equilibrium().as_array()) == 0

    def test_flip_across_transversal_boundary(self, params, forcing_fast, sm):
        polys = transversal_boundaries(params, forcing_fast, n_max=1, samples=128)
        z = polys[0].points[len(polys[0].points) // 2]
        n = np.array([1.0, -1.0]) / np.sqrt(2.0)
        assert sm.classify(z + 1e-6 * n) - sm.classify(z - 1e-6 * n) == 1


class TestMap:
    def test_autonomous_fixed_point(self, params, sm_off):
        eq = params.equilibrium().as_array()
        out = sm_off.map(eq)
        assert np.abs(out.as_array() - eq).max() < 1e-12
        assert out.region == 0 and out.symbol == 0

    def test_drive_off_equals_plain_flow(self, params, sm_off, forcing_off):
        lif = make_lif(params)
        z = quiet_state()
        direct = flow(lif, z, 0.0, forcing_off.T)
        assert np.abs(sm_off.map(z).as_array() - direct).max() < 1e-12

    def test_one_spike_matches_event_chain(self, params, forcing_fast, sm):
        # independent composition: event pass over the pulse, then off flow
        lif = make_lif(params)
        z = spiking_state()
        res = sm.map(z)
        assert res.region == 1 and res.symbol == 1
        mid, events = flow_with_events(lif, forcing_fast, z, forcing_fast.on_time)
        out = flow(lif, mid, 0.0, forcing_fast.off_time)
        assert len(events) == 1
        assert np.abs(res.as_array() - out).max() < 1e-12

    def test_refinement_against_tighter_tolerance(self, params, forcing_fast):
        coarse = StroboMap(params, forcing_fast, rtol=1e-8, atol=1e-10)
        fine = StroboMap(params, forcing_fast, rtol=1e-12, atol=1e-14)
        for z in (quiet_state(), spiking_state()):
            a = coarse.map(z).as_array()
            b = fine.map(z).as_array()
            assert np.abs(a - b).max() < 10 * 1e-8

    def test_against_scipy_composition(self, params, forcing_fast, sm):
        for z in (quiet_state(), spiking_state()):
            ref, spikes = scipy_strobo(z, params, forcing_fast)
            res = sm.map(z)
            assert res.region == spikes
            assert np.abs(res.as_array() - ref).max() < 1e-9

    def test_batch_matches_single(self, params, sm):
        Z = np.stack([quiet_state(), spiking_state()])
        images, counts, status = sm.map_batch(Z)
        assert (status == 0).all()
        for k in range(2):
            res = sm.map(Z[k])
            assert counts[k] == res.region
            assert np.abs(images[k] - res.as_array()).max() < 1e-12

    @given(V1=st.floats(0.05, 0.9), th1=st.floats(1.1, 1.9),
           V2=st.floats(0.05, 0.9), th2=st.floats(1.1, 1.9))
    @settings(max_examples=20, deadline=None)
    def test_contraction_when_drive_off(self, params, sm_off, V1, th1, V2, th2):
        za, zb = np.array([V1, th1]), np.array([V2, th2])
        if np.allclose(za, zb):
            return
        ia = sm_off.map(za).as_array()
        ib = sm_off.map(zb).as_array()
        assert np.linalg.norm(ia - ib) < np.linalg.norm(za - zb)


class TestDifferential:
    def test_no_spike_branch_formula(self, params, forcing_fast, sm):
        # D(map) on the quiet region equals the product of the two segment
        # differentials, with no correction terms.
        from grazelab.flow import variational

        lif = make_lif(params)
        z = quiet_state()
        D = sm.differential(z)
        mid, dA = variational(lif, z, forcing_fast.A, forcing_fast.on_time)
        _, d0 = variational(lif, mid, 0.0, forcing_fast.off_time)
        assert np.abs(D - d0 @ dA).max() < 1e-10

    def test_drive_off_eigenvalues(self, params, sm_off, forcing_off):
        eq = params.equilibrium().as_array()
        D = sm_off.differential(eq)
        eig = np.sort(np.linalg.eigvals(D).real)
        expect = np.sort([np.exp(-forcing_off.T),
                          np.exp(-forcing_off.T / params.tau_theta)])
        assert np.abs(eig - expect).max() < 1e-8

    def test_matches_fd_quiet(self, params, sm):
        z = quiet_state()
        D = sm.differential(z)
        fd = central_difference_jacobian(lambda x: sm.map(x).as_array(), z)
        assert np.abs(D - fd).max() / np.abs(fd).max() < 1e-4

    def test_matches_fd_across_spike(self, params, sm):
        z = spiking_state()
        assert sm.classify(z) == 1
        D = sm.differential(z)
        fd = central_difference_jacobian(lambda x: sm.map(x).as_array(), z)
        assert np.abs(D - fd).max() / np.abs(fd).max() < 1e-4


class TestVirtualExtensions:
    def test_agree_on_true_domains(self, params, sm):
        zq, zs = quiet_state(), spiking_state()
        assert np.abs(sm.virtual_no_spike(zq).as_array()
                      - sm.map(zq).as_array()).max() < 1e-12
        assert np.abs(sm.virtual_one_spike(zs).as_array()
                      - sm.map(zs).as_array()).max() < 1e-10

    def test_one_spike_extension_undefined_far_from_threshold(self, params):
        # with a weak pulse the flow never reaches the threshold
        sm = StroboMap(params, ForcingParams(A=0.05, T=0.5, d=0.5))
        assert sm.virtual_one_spike(quiet_state()) is None

    def test_jump_law_across_boundary(self, params, forcing_fast, sm):
        # One-sided limits differ by the reset displacement propagated by the
        # off-phase flow: map_{S1}(p) - map_{S0}(p) = phi0(R(g)) - phi0(g)
        # where g is the grazing point of the boundary trajectory.
        lif = make_lif(params)
        polys = transversal_boundaries(params, forcing_fast, n_max=1, samples=256)
        z = polys[0].points[len(polys[0].points) // 2]
        n = np.array([1.0, -1.0]) / np.sqrt(2.0)
        eps = 1e-6
        lim0 = sm.map(z - eps * n).as_array()
        lim1 = sm.map(z + eps * n).as_array()
        g = flow(lif, z, forcing_fast.A, forcing_fast.on_time)
        g = np.array([0.5 * (g[0] + g[1])] * 2)  # land exactly on the threshold
        img_plain = flow(lif, g, 0.0, forcing_fast.off_time)
        img_reset = flow(lif, lif.reset(g[None, :])[0], 0.0, forcing_fast.off_time)
        jump = img_reset - img_plain
        assert np.abs((lim1 - lim0) - jump).max() < 50 * eps

    def test_tie_break_is_deterministic(self, params, forcing_fast, sm):
        polys = transversal_boundaries(params, forcing_fast, n_max=1, samples=256)
        z = polys[0].points[len(polys[0].points) // 2]
        # the boundary state itself classifies to the no-reset side
        assert sm.classify(z) in (0, 1)
        r1 = sm.map(z)
        r2 = sm.map(z)
        assert r1.region == r2.region
        assert np.array_equal(r1.as_array(), r2.as_array())
