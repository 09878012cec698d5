import numpy as np
import pytest

from grazelab.continuation import (NewtonFailure, ResidualSystem, Z0_NS1, Z0_S1,
                                   Z1_NS1, Z1_NS2, Z1_S1, Z1_S2, codim2_points,
                                   codim2_transition, find_fixed_point,
                                   kernel_vector, least_norm_newton, seed_curve,
                                   seed_tangent_from_transversal, trace_curve)
from grazelab.flow import flow, flow_to_event
from grazelab.model import ForcingParams, make_lif, published_params
from grazelab.strobo import StroboMap

from oracles import central_difference_jacobian


class TestLeastNormNewton:
    def test_symmetric_linear_constraint(self):
        cp = least_norm_newton(lambda w: np.array([w[0] + w[1] - 1.0]),
                               lambda w: np.array([[1.0, 1.0]]), np.zeros(2))
        assert np.array_equal(cp.w, np.array([0.5, 0.5]))

    def test_axis_aligned_constraint(self):
        cp = least_norm_newton(lambda w: np.array([w[0] - 2.0]),
                               lambda w: np.array([[1.0, 0.0]]), np.zeros(2))
        assert np.array_equal(cp.w, np.array([2.0, 0.0]))

    def test_matches_pseudoinverse_on_random_systems(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            m = rng.integers(1, 6)
            n = rng.integers(m + 1, 7)
            A = rng.normal(size=(m, n))
            b = rng.normal(size=m)
            if np.linalg.matrix_rank(A) < m:
                continue
            cp = least_norm_newton(lambda w: A @ w + b, lambda w: A, np.zeros(n))
            expect = -np.linalg.pinv(A) @ b
            assert np.abs(cp.w - expect).max() <= 1e-10 * max(1.0, np.abs(expect).max())

    def test_step_in_row_space(self):
        # minimum-norm corrections carry no kernel component
        rng = np.random.default_rng(1)
        A = rng.normal(size=(2, 4))
        b = rng.normal(size=2)
        cp = least_norm_newton(lambda w: A @ w + b, lambda w: A, np.zeros(4))
        Q, _ = np.linalg.qr(A.T, mode="complete")
        kernel = Q[:, 2:]
        assert np.abs(kernel.T @ cp.w).max() < 1e-10 * np.linalg.norm(cp.w)

    def test_rank_deficiency_reported(self):
        A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
        with pytest.raises(NewtonFailure, match="rank"):
            least_norm_newton(lambda w: A @ w + np.array([1.0, 2.0]),
                              lambda w: A, np.zeros(3))

    def test_quadratic_local_convergence(self, params, forcing_fast):
        rs = ResidualSystem(Z0_NS1, params, forcing_fast)
        w = seed_curve(Z0_NS1, params, forcing_fast, A_range=(1.2, 2.4))
        w = w + np.array([1e-3, 1e-3, 1e-3])
        norms = []
        for _ in range(5):
            g = rs.residual(w)
            norms.append(np.max(np.abs(g)))
            if norms[-1] < 1e-13:
                break
            J = rs.jacobian(w)
            Q, R = np.linalg.qr(J.T)
            import scipy.linalg

            w = w - Q @ scipy.linalg.solve_triangular(R.T, g, lower=True)
        drops = [n2 / n1 ** 2 for n1, n2 in zip(norms, norms[1:]) if n1 > 1e-9]
        assert drops and max(drops) < 1e4  # bounded quadratic constant


@pytest.fixture(scope="module")
def z0ns1(params, forcing_fast):
    rs = ResidualSystem(Z0_NS1, params, forcing_fast)
    w = seed_curve(Z0_NS1, params, forcing_fast, A_range=(1.2, 2.4))
    cp = least_norm_newton(rs.residual, rs.jacobian, w)
    return rs, cp


class TestResiduals:
    def test_z0ns1_closure_equation(self, params, forcing_fast, z0ns1):
        # at convergence: pulse-flow rewind of the graze point equals the
        # off-flow image of the same point
        rs, cp = z0ns1
        V, b, A = cp.w
        lif = make_lif(params.with_updates(b=b, unsafe=True))
        p1 = np.array([V, V])
        lhs = flow(lif, p1, A, -forcing_fast.on_time)
        rhs = flow(lif, p1, 0.0, forcing_fast.off_time)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_z1s1_tangency_row(self, params):
        f5 = ForcingParams(A=1.0, T=5.0, d=0.5)
        p5 = published_params(b=0.5)
        rs = ResidualSystem(Z1_S1, p5, f5)
        w = np.array([1.3, 0.8, 0.5, 1.2])
        g = rs.residual(w)
        V, b, A = 1.3, 0.5, 1.2
        pm = p5.with_updates(b=b, unsafe=True)
        expect = -V + pm.V0 + A - (-V + float(pm.theta_inf(V))) / pm.tau_theta
        assert g[-1] == pytest.approx(expect, abs=1e-12)

    def test_shooting_oracle_grazing_orbit(self, params, forcing_fast):
        # Build a grazing trajectory by backward shooting from the threshold
        # and verify the generic 1-hit transversal system's residual is tiny.
        rs = ResidualSystem(Z0_NS1, params, forcing_fast)
        lif = make_lif(params)
        # choose the graze voltage by matching the closure numerically:
        # scan V so that phiA(-dT, (V,V)) = phi0(T-dT, (V,V))
        def gap(V):
            p1 = np.array([V, V])
            a = flow(lif, p1, forcing_fast.A, -forcing_fast.on_time)
            b = flow(lif, p1, 0.0, forcing_fast.off_time)
            return a - b

        from scipy.optimize import brentq

        # the closure gap's voltage component brackets the graze voltage
        V_star = brentq(lambda V: gap(V)[0] + gap(V)[1], 1.05, 1.4, xtol=1e-13)
        w = np.array([V_star, params.b, forcing_fast.A])
        # one least-norm polish in (V, b, A) reaches the exact curve point
        cp = least_norm_newton(rs.residual, rs.jacobian, w)
        assert np.abs(rs.residual(cp.w)).max() < 1e-8

    @pytest.mark.parametrize("sid,setup", [
        (Z0_NS1, ("fast", 0.1, (1.2, 2.4))),
        (Z1_NS1, ("fast", 0.1, (4.0, 20.0))),
        (Z1_NS2, ("fast", 0.1, (10.0, 13.2))),
        (Z0_S1, ("slow", 0.5, (0.5, 3.0))),
    ])
    def test_jacobians_match_fd(self, sid, setup):
        kind, b, a_range = setup
        p = published_params(b=b)
        f = ForcingParams(A=1.0, T=0.5 if kind == "fast" else 5.0, d=0.5)
        rs = ResidualSystem(sid, p, f)
        w = seed_curve(sid, p, f, A_range=a_range)
        cp = least_norm_newton(rs.residual, rs.jacobian, w)
        J = rs.jacobian(cp.w)
        fd = central_difference_jacobian(rs.residual, cp.w)
        assert np.abs(J - fd).max() / np.abs(fd).max() < 1e-4

    def test_amplitude_column_zero_for_off_rows(self, params, forcing_fast, z0ns1):
        # Rows generated purely by the off-phase flow carry no amplitude
        # dependence; for the 1-hit transversal system both closure rows mix
        # the pulse flow, so check at the level of the off-segment itself.
        from grazelab.flow import extended_variational

        lif = make_lif(params)
        _, d4 = extended_variational(lif, np.array([1.1, 1.15]), 0.0,
                                     forcing_fast.off_time, drive_on=False)
        assert np.abs(d4[:2, 3]).max() == 0.0

    def test_time_column_is_vector_field(self, params, forcing_fast):
        # d(residual)/d t1 of the rewind segment equals minus the driven
        # field at the rewound point (the Appendix-style display).
        p = published_params(b=0.1)
        rs = ResidualSystem(Z1_NS2, p, forcing_fast)
        w = seed_curve(Z1_NS2, p, forcing_fast, A_range=(10.0, 13.2))
        cp = least_norm_newton(rs.residual, rs.jacobian, w)
        V1, V2, t1, b, A = cp.w
        lif = make_lif(p.with_updates(b=b, unsafe=True))
        z1 = flow(lif, np.array([V1, V1]), A, -t1)
        fz1 = lif.f(z1[None, :], A)[0]
        J = rs.jacobian(cp.w)
        # first two rows, t1 column: -(f at the rewound point)
        assert np.abs(J[:2, 2] - (-fz1)).max() < 1e-7 * max(1, np.abs(fz1).max())


class TestTraceCurve:
    def test_contract_residuals_and_spacing(self, params, forcing_fast, z0ns1):
        rs, cp = z0ns1
        box = np.array([[-5.0, 50.0], [0.0, 0.4], [0.5, 10.0]])
        pts = trace_curve(rs, cp.w, step=5e-3, box=box,
                          orient=np.array([0.0, 1.0, 0.0]), max_points=40)
        assert len(pts) > 10
        for q in pts:
            assert q.residual_norm <= 1e-10
        gaps = [np.linalg.norm(b.w - a.w) for a, b in zip(pts, pts[1:])]
        # adaptive growth: consecutive spacing within the contract envelope
        for g0, g1 in zip(gaps, gaps[1:]):
            assert g1 <= 4 * g0 + 1e-12
            assert g1 >= g0 / 4 - 1e-12

    def test_retrace_reproduces_polyline(self, params, forcing_fast, z0ns1):
        rs, cp = z0ns1
        box = np.array([[-5.0, 50.0], [0.0, 0.35], [0.5, 10.0]])
        fwd = trace_curve(rs, cp.w, step=1e-3, max_step=1e-3, box=box,
                          orient=np.array([0.0, 1.0, 0.0]), max_points=25)
        back = trace_curve(rs, fwd[-1].w, step=1e-3, max_step=1e-3, box=box,
                           orient=-fwd[-1].tangent, max_points=25)
        A = np.array([q.w for q in fwd])
        B = np.array([q.w for q in back])

        def point_to_polyline(p, poly):
            best = np.inf
            for a, b in zip(poly, poly[1:]):
                e = b - a
                t = np.clip(np.dot(p - a, e) / np.dot(e, e), 0.0, 1.0)
                best = min(best, np.linalg.norm(p - (a + t * e)))
            return best

        # interior retraced points lie on the forward polyline (Hausdorff)
        d = max(point_to_polyline(p, A) for p in B[1:-1])
        assert d < 1e-6

    def test_fold_flag_direction_independent(self, params, forcing_fast, z0ns1):
        rs, cp = z0ns1
        box = np.array([[-5.0, 500.0], [0.0, 0.6], [0.5, 20.0]])
        fwd = trace_curve(rs, cp.w, step=1e-2, box=box, max_step=0.4,
                          orient=np.array([0.0, 1.0, 0.0]), max_points=60)
        rev = trace_curve(rs, fwd[-1].w, step=1e-2, box=box, max_step=0.4,
                          orient=-fwd[-1].tangent, max_points=60)
        f1 = {round(q.w[-2], 3) for q in fwd if q.fold_flag}
        f2 = {round(q.w[-2], 3) for q in rev if q.fold_flag}
        # both directions agree about whether an amplitude fold exists here
        assert bool(f1) == bool(f2)


class TestFixedPoints:
    def test_drive_off_fixed_point(self, params, forcing_off):
        fp = find_fixed_point(0, params, forcing_off, np.array([0.3, 1.2]))
        eq = params.equilibrium()
        assert abs(fp.z.V - eq.V) < 1e-10
        assert abs(fp.z.theta - eq.theta) < 1e-9
        assert fp.region == 0 and not fp.virtual
        mags = np.sort(np.abs(fp.eigenvalues))
        expect = np.sort([np.exp(-0.5), np.exp(-0.25)])
        assert np.abs(mags - expect).max() < 1e-8

    def test_small_amplitude_unique_attractor(self, params):
        f = ForcingParams(A=0.2, T=0.5, d=0.5)
        fp = find_fixed_point(0, params, f, params.equilibrium().as_array())
        assert fp.region == 0 and fp.stable
        # attracts a neighborhood
        sm = StroboMap(params, f)
        z = fp.z.as_array() + np.array([0.05, 0.05])
        for _ in range(200):
            z = sm.map(z).as_array()
        assert np.abs(z - fp.z.as_array()).max() < 1e-6

    def test_virtual_flagging(self, params, forcing_fast):
        # requesting the one-spike branch at tiny amplitude has no true
        # one-spike region; expect failure or a virtual flag
        f = ForcingParams(A=0.05, T=0.5, d=0.5)
        with pytest.raises((NewtonFailure, Exception)):
            find_fixed_point(1, params, f, params.equilibrium().as_array())


class TestCodim2:
    def test_transition_seeding_and_refinement(self):
        # On the slow-drive no-spike curve the graze turns tangential; the
        # tangential curve seeds there and the joint refinement pins the
        # codimension-2 point.
        p = published_params(b=0.1)
        f = ForcingParams(A=1.0, T=5.0, d=0.5)
        rs_ns = ResidualSystem(Z0_NS1, p, f)
        w0 = seed_curve(Z0_NS1, p, f, A_range=(0.5, 2.0))
        box = np.array([[-5.0, 100.0], [0.0, 1.0], [0.05, 50.0]])
        pts = trace_curve(rs_ns, w0, step=1e-2, box=box, max_step=0.3,
                          orient=np.array([0.0, 1.0, 0.0]), max_points=120)
        assert len(pts) > 20
        w_s = seed_tangent_from_transversal(Z0_S1, pts, Z0_NS1, p, f)
        rs_s = ResidualSystem(Z0_S1, p, f)
        cp = least_norm_newton(rs_s.residual, rs_s.jacobian, w_s, max_iter=40)
        assert cp.residual_norm <= 1e-10
        c2 = codim2_transition(rs_ns, pts, rs_s)
        assert c2.residual <= 1e-8
        # both grazing conditions hold at the refined point with shared (b, A)
        assert c2.w_a[-2] == pytest.approx(c2.w_b[-2], abs=1e-12)
        assert c2.w_a[-1] == pytest.approx(c2.w_b[-1], abs=1e-12)
