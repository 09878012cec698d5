"""Grazing border-collision curves: residual systems and curve tracing.

A bifurcation curve lives in the space of unknowns w = (hit voltages, hit
times, b, A): n equations in n+1 unknowns.  Residuals assemble orbit-closure
rows, threshold-membership (built into the parametrization), and, for
tangential systems, the tangency row.  Jacobians are exact, built from the
parameter-extended variational solution of each flow segment plus
vector-field columns for the time unknowns.  Curves are traced by a tangent
predictor along the kernel of the Jacobian and a minimum-norm Newton
corrector (Lagrange-multiplier form).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .flow import FlowError, extended_variational, flow, flow_to_event
from .model import ForcingParams, ModelParams, State, make_lif
from .strobo import StroboMap

__all__ = [
    "BifSystemId",
    "Z0_NS1", "Z1_NS1", "Z1_NS2", "Z0_S1", "Z1_S1", "Z1_S2",
    "ResidualSystem",
    "CurvePoint",
    "FixedPoint",
    "least_norm_newton",
    "NewtonFailure",
    "trace_curve",
    "find_fixed_point",
    "codim2_points",
    "seed_curve",
]

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 25
COND_LIMIT = 1e12


class NewtonFailure(RuntimeError):
    """Corrector did not converge (iteration cap or rank-deficient Jacobian)."""


@dataclass(frozen=True)
class BifSystemId:
    """Identifies one grazing border-collision residual system.

    ``kind`` is "NS" (graze exactly at pulse switch-off) or "S" (tangential
    graze); ``n`` is the number of threshold hits on the critical orbit;
    ``side`` says which region's fixed point collides: "lower" (the fixed
    point with n-1 spikes; no reset at the final graze) or "upper" (the
    fixed point with n spikes; the final graze is reset).
    """

    kind: str
    n: int
    side: str

    def __post_init__(self) -> None:
        if self.kind not in ("NS", "S"):
            raise ValueError(f"kind must be 'NS' or 'S', got {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.side not in ("lower", "upper"):
            raise ValueError(f"side must be 'lower' or 'upper', got {self.side!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        n = self.n
        volts = tuple(f"V{i}" for i in range(1, n + 1))
        n_times = n if self.kind == "S" else n - 1
        times = tuple(f"t{i}" for i in range(1, n_times + 1))
        return volts + times + ("b", "A")

    @property
    def n_unknowns(self) -> int:
        return len(self.labels)

    @property
    def n_equations(self) -> int:
        return self.n_unknowns - 1

    def __str__(self) -> str:
        z = self.n - 1 if self.side == "lower" else self.n
        return f"Z{z}_{self.kind}{self.n}"


Z0_NS1 = BifSystemId("NS", 1, "lower")
Z1_NS1 = BifSystemId("NS", 1, "upper")
Z1_NS2 = BifSystemId("NS", 2, "lower")
Z0_S1 = BifSystemId("S", 1, "lower")
Z1_S1 = BifSystemId("S", 1, "upper")
Z1_S2 = BifSystemId("S", 2, "lower")


class _Tracked:
    """A point p(w) with its Jacobian d p / d w carried through segment maps."""

    __slots__ = ("p", "J")

    def __init__(self, p: np.ndarray, J: np.ndarray):
        self.p = p
        self.J = J


class ResidualSystem:
    """Callable residual/Jacobian pair for one bifurcation system.

    The unknown vector contains the hit voltages, the free hit times, and the
    continuation parameters (b, A).  Model and forcing act as templates whose
    b and A get replaced per evaluation; the drive duty and period stay fixed.
    """

    def __init__(self, sys_id: BifSystemId, model: ModelParams, forcing: ForcingParams,
                 *, rtol: float = 1e-12, atol: float = 1e-13):
        self.sys_id = sys_id
        self.model = model
        self.forcing = forcing
        self.rtol = rtol
        self.atol = atol
        self._cache_key: bytes | None = None
        self._cache_val = None

    # -- unknown-vector bookkeeping --------------------------------------

    def split(self, w) -> tuple[np.ndarray, np.ndarray, float, float]:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.sys_id.n_unknowns,):
            raise ValueError(
                f"{self.sys_id} expects {self.sys_id.n_unknowns} unknowns "
                f"({', '.join(self.sys_id.labels)}), got shape {w.shape}")
        n = self.sys_id.n
        n_t = n if self.sys_id.kind == "S" else n - 1
        return w[:n], w[n:n + n_t], float(w[-2]), float(w[-1])

    def model_at(self, w) -> ModelParams:
        _, _, b, _ = self.split(w)
        return self.model.with_updates(b=b, unsafe=True)

    def forcing_at(self, w) -> ForcingParams:
        _, _, _, A = self.split(w)
        return self.forcing.with_updates(A=A)

    # -- evaluation -------------------------------------------------------

    def _segments(self, w):
        """Run the orbit construction, tracking d/dw of every anchor point.

        Residual and Jacobian share this work; the latest evaluation is
        cached so back-to-back calls at the same w cost one orbit build.
        """
        key = np.asarray(w, dtype=float).tobytes()
        if key == self._cache_key:
            return self._cache_val
        out = self._segments_impl(w)
        self._cache_key = key
        self._cache_val = out
        return out

    def _segments_impl(self, w):
        volts, times, b, A = self.split(w)
        n = self.sys_id.n
        m = self.sys_id.n_unknowns
        ib, ia = m - 2, m - 1
        p = self.model.with_updates(b=b, unsafe=True)
        sys = make_lif(p)
        dT = self.forcing.on_time
        sel = np.zeros((2, m))
        sel[0, ib] = 1.0
        sel[1, ia] = 1.0

        def point(i) -> _Tracked:
            J = np.zeros((2, m))
            J[0, i] = 1.0
            J[1, i] = 1.0
            return _Tracked(np.array([volts[i], volts[i]]), J)

        def apply_reset(tr: _Tracked) -> _Tracked:
            RJ = sys.reset_jac(tr.p[None, :])[0]
            return _Tracked(sys.reset(tr.p[None, :])[0], RJ @ tr.J)

        def apply_flow(tr: _Tracked, I: float, tau: float, dtau: np.ndarray,
                       drive_on: bool) -> _Tracked:
            zend, d4 = extended_variational(sys, tr.p, I, tau, drive_on=drive_on,
                                            rtol=self.rtol, atol=self.atol)
            delta = d4[:2, :2]
            dparam = d4[:2, 2:4]
            fend = sys.f(zend[None, :], I)[0]
            J = delta @ tr.J + dparam @ sel + np.outer(fend, dtau)
            return _Tracked(zend, J)

        e_t = [np.zeros(m) for _ in range(len(times))]
        for k in range(len(times)):
            e_t[k][n + k] = 1.0

        hits = [point(i) for i in range(n)]

        # Left-hand side of the closure: rewind the first hit to t = 0.
        if self.sys_id.kind == "NS" and n == 1:
            t1, dt1 = dT, np.zeros(m)
        else:
            t1, dt1 = times[0], e_t[0]
        lhs = apply_flow(hits[0], A, -t1, -dt1, True)

        # Chain: hit i is the pulse-on image of the reset of hit i-1.
        chain_rows = []
        for i in range(1, n):
            start = apply_reset(hits[i - 1])
            if self.sys_id.kind == "S":
                tau, dtau = times[i], e_t[i]
            else:
                if i < n - 1:
                    tau, dtau = times[i], e_t[i]
                else:
                    tau = dT - float(np.sum(times))
                    dtau = -np.sum(e_t, axis=0) if e_t else np.zeros(m)
            img = apply_flow(start, A, tau, dtau, True)
            chain_rows.append((hits[i], img))

        # Right-hand side: from the last hit (reset on the "upper" side) run
        # the pulse-on flow out to the switch-off, then the off flow.
        last = hits[n - 1]
        if self.sys_id.side == "upper":
            last = apply_reset(last)
        if self.sys_id.kind == "S":
            tau = dT - float(np.sum(times))
            dtau = -np.sum(e_t, axis=0)
            last = apply_flow(last, A, tau, dtau, True)
        rhs = apply_flow(last, 0.0, self.forcing.off_time, np.zeros(m), False)

        return lhs, rhs, chain_rows, hits, p, sel

    def residual(self, w) -> np.ndarray:
        lhs, rhs, chain_rows, hits, p, _ = self._segments(w)
        rows = [lhs.p - rhs.p]
        rows.extend(hit.p - img.p for hit, img in chain_rows)
        vec = np.concatenate(rows)
        if self.sys_id.kind == "S":
            vec = np.append(vec, self._tangency(hits[-1].p[0], p, w))
        return vec

    def jacobian(self, w) -> np.ndarray:
        lhs, rhs, chain_rows, hits, p, sel = self._segments(w)
        blocks = [lhs.J - rhs.J]
        blocks.extend(hit.J - img.J for hit, img in chain_rows)
        J = np.vstack(blocks)
        if self.sys_id.kind == "S":
            V = hits[-1].p[0]
            dV = -1.0 + (1.0 - float(p.theta_inf_dV(V))) / p.tau_theta
            row = dV * hits[-1].J[0]
            row = row + sel[0] * (-float(p.theta_inf_db(V)) / p.tau_theta)
            row = row + sel[1]
            J = np.vstack([J, row])
        return J

    @staticmethod
    def _tangency(V: float, p: ModelParams, w) -> float:
        A = float(np.asarray(w)[-1])
        return -V + p.V0 + A - (-V + float(p.theta_inf(V))) / p.tau_theta


@dataclass(frozen=True)
class CurvePoint:
    """One converged point on an implicitly defined curve."""

    w: np.ndarray
    residual_norm: float
    tangent: np.ndarray
    fold_flag: bool = False


def _min_norm_step(J: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of J @ dw = -g via orthogonal factorization of J^T.

    One iterative-refinement pass follows the triangular solves; it removes
    the last-ulp round-off of the orthogonal factors (the textbook linear
    examples come out exact) and sharpens ill-conditioned steps near folds.
    """
    Q, R = np.linalg.qr(J.T)
    sv = np.abs(np.diag(R))
    if sv.min() == 0.0 or sv.max() / sv.min() > COND_LIMIT:
        raise NewtonFailure(
            f"rank-deficient constraint Jacobian (condition ~ {sv.max() / max(sv.min(), 1e-300):.3g})")

    def solve(rhs):
        mu = scipy.linalg.solve_triangular(R.T, rhs, lower=True)
        return -Q @ mu

    dw = solve(g)
    dw = dw + solve(J @ dw + g)
    # On benign systems the plain normal-equations step loses no digits and
    # often lands bit-exactly; keep whichever candidate satisfies the
    # linearization better (the factorized route wins near folds).
    try:
        dw_ne = -J.T @ np.linalg.solve(J @ J.T, g)
    except np.linalg.LinAlgError:
        return dw
    if np.max(np.abs(J @ dw_ne + g)) <= np.max(np.abs(J @ dw + g)):
        return dw_ne
    return dw


def kernel_vector(J: np.ndarray) -> np.ndarray:
    """Unit vector spanning the kernel of a full-rank (m-1) x m Jacobian."""
    Q, _ = np.linalg.qr(J.T, mode="complete")
    return Q[:, -1]


def least_norm_newton(residual_fn, jacobian_fn, w0, *, tol: float = NEWTON_TOL,
                      max_iter: int = NEWTON_MAX_ITER) -> CurvePoint:
    """Newton iteration with minimum-norm (Lagrange multiplier) corrections.

    Each update solves the linearized constraint with the smallest possible
    ||dw||_2, so underdetermined systems converge to the constraint point
    nearest the predictor.  Convergence is on the sup norm of the residual.
    """
    w = np.array(w0, dtype=float)
    for _ in range(max_iter):
        g = np.asarray(residual_fn(w), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NewtonFailure("residual evaluation returned nonfinite values")
        if np.max(np.abs(g)) <= tol:
            J = np.asarray(jacobian_fn(w), dtype=float)
            tangent = kernel_vector(J) if J.shape[0] + 1 == J.shape[1] else np.zeros_like(w)
            return CurvePoint(w=w, residual_norm=float(np.max(np.abs(g))), tangent=tangent)
        J = np.asarray(jacobian_fn(w), dtype=float)
        w = w + _min_norm_step(J, g)
    raise NewtonFailure(f"no convergence in {max_iter} iterations "
                        f"(last residual {np.max(np.abs(g)):.3g})")


def trace_curve(system: ResidualSystem, w_start, *, step: float = 1e-3,
                box: np.ndarray | None = None, max_points: int = 2000,
                tol: float = NEWTON_TOL, orient: np.ndarray | None = None,
                min_step: float = 1e-9, max_step: float = 0.2) -> list[CurvePoint]:
    """Predictor-corrector trace of one bifurcation curve.

    Predicts along the kernel tangent (orientation kept continuous by
    sign-matching consecutive tangents), corrects with the minimum-norm
    Newton; the step halves on corrector failure and grows by 1.3x after fast
    convergence.  Tracing stops on leaving ``box`` (an (m, 2) array of bounds,
    infinities allowed), after ``max_points``, or when the step underflows.
    ``fold_flag`` marks points where the tangent's A-component changes sign.
    """
    m = system.sys_id.n_unknowns
    if box is None:
        box = np.tile([[-np.inf, np.inf]], (m, 1))
    box = np.asarray(box, dtype=float)

    start = least_norm_newton(system.residual, system.jacobian, w_start, tol=tol)
    tangent = start.tangent
    if orient is not None and float(tangent @ orient) < 0.0:
        tangent = -tangent
    points = [CurvePoint(w=start.w, residual_norm=start.residual_norm, tangent=tangent)]

    delta = step
    while len(points) < max_points:
        prev = points[-1]
        converged = None
        while delta >= min_step:
            pred = prev.w + delta * prev.tangent
            try:
                converged = least_norm_newton(system.residual, system.jacobian,
                                              pred, tol=tol, max_iter=12)
                break
            except (NewtonFailure, FlowError):
                delta *= 0.5
        if converged is None:
            break
        tangent = converged.tangent
        if float(tangent @ prev.tangent) < 0.0:
            tangent = -tangent
        fold = bool(tangent[-1] * prev.tangent[-1] < 0.0)
        pt = CurvePoint(w=converged.w, residual_norm=converged.residual_norm,
                        tangent=tangent, fold_flag=fold)
        if np.any(pt.w < box[:, 0]) or np.any(pt.w > box[:, 1]):
            break
        points.append(pt)
        delta = min(delta * 1.3, max_step)
    return points


@dataclass(frozen=True)
class FixedPoint:
    """Fixed point of the stroboscopic map on a fixed spike-count branch."""

    z: State
    region: int
    requested_region: int
    eigenvalues: tuple[complex, complex]
    residual: float

    @property
    def virtual(self) -> bool:
        return self.region != self.requested_region

    @property
    def stable(self) -> bool:
        return max(abs(ev) for ev in self.eigenvalues) < 1.0


def find_fixed_point(region: int, model: ModelParams, forcing: ForcingParams,
                     z_guess, *, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER,
                     strobo: StroboMap | None = None) -> FixedPoint:
    """Newton solve of map(z) = z on the given spike-count branch.

    Iterates may wander across switching boundaries; the branch is then
    evaluated in its virtual extension, and the result is flagged virtual
    when the converged point's true region differs from the requested one.
    """
    sm = StroboMap(model, forcing) if strobo is None else strobo
    z = np.asarray(z_guess, dtype=float).copy()
    res = np.inf
    for _ in range(max_iter):
        if not np.all(np.isfinite(z)):
            raise NewtonFailure("fixed point iterate diverged")
        image, M = sm.branch_differential(z, region)
        g = image.as_array() - z
        res = float(np.max(np.abs(g)))
        if res <= tol:
            break
        try:
            dz = np.linalg.solve(M - np.eye(2), -g)
        except np.linalg.LinAlgError as exc:
            raise NewtonFailure("singular Newton matrix for fixed point") from exc
        z = z + dz
    else:
        raise NewtonFailure(f"fixed point iteration did not converge (last residual {res:.3g})")
    image, M = sm.branch_differential(z, region)
    eig = np.linalg.eigvals(M)
    actual = int(sm.classify(z)) if model.is_subthreshold(z) else -1
    return FixedPoint(z=State.from_array(z), region=actual, requested_region=region,
                      eigenvalues=(complex(eig[0]), complex(eig[1])), residual=res)


# ---------------------------------------------------------------------------
# Seeding and codimension-2 points.


def _graze_gap(sys_id: BifSystemId, model: ModelParams, forcing: ForcingParams,
               z_guess=None) -> tuple[float, np.ndarray]:
    """Signed distance-to-grazing of the relevant fixed point's orbit.

    Positive once the graze has happened (crossing zero at the bifurcation).
    Used for bisection seeding along A at fixed b; returns the gap and the
    converged fixed point so sweeps can thread it as the next guess.
    """
    sm = StroboMap(model, forcing)
    sys = sm.system
    dT = forcing.on_time
    n_branch = sys_id.n - 1 if sys_id.side == "lower" else sys_id.n
    guess = model.equilibrium().as_array() if z_guess is None else np.asarray(z_guess)
    try:
        fp = find_fixed_point(n_branch, model, forcing, guess, strobo=sm)
    except (NewtonFailure, FlowError):
        if z_guess is None:
            raise
        fp = find_fixed_point(n_branch, model, forcing,
                              model.equilibrium().as_array(), strobo=sm)
    z = fp.z.as_array()

    t_cur = 0.0
    z_cur = z.copy()
    z_last_hit = None
    for _ in range(n_branch):
        hit = flow_to_event(sys, z_cur, forcing.A, sm.virtual_horizon)
        if hit is None:
            raise NewtonFailure("branch fixed point lost its threshold hit")
        z_hit, dt = hit
        t_cur += dt
        z_last_hit = z_hit
        z_cur = sys.reset(z_hit[None, :])[0]

    if sys_id.kind == "NS":
        if sys_id.side == "upper" and sys_id.n == n_branch:
            # Grazing when the n-th (existing) hit reaches the switch-off time.
            return t_cur - dT, z
        # Lower side: a new hit appears exactly at switch-off.
        z_end = flow(sys, z_cur, forcing.A, dT - t_cur)
        return float(sys.h(z_end[None, :])[0]), z
    if sys_id.side == "upper":
        # Tangency of the existing n-th hit: transversality shrinking to zero.
        # This measure stays positive while the hit exists, so sweeps rarely
        # bracket it; seed upper-S curves from their transversal counterpart
        # via seed_tangent_from_transversal instead.
        fA = sys.f(z_last_hit[None, :], forcing.A)[0]
        gh = sys.grad_h(z_last_hit[None, :])[0]
        return float(gh @ fA), z
    # Lower side: the pulse-on tail develops a tangential touch of the threshold.
    ts = np.linspace(0.0, max(dT - t_cur, 1e-9), 160)
    zz = np.tile(z_cur, (ts.size, 1))
    from .flow import integrate

    def rhs(y):
        return sys.f(y, forcing.A)

    res = integrate(rhs, zz, ts, rtol=1e-10, atol=1e-12, record=False)
    hvals = sys.h(res.y)
    return float(np.max(hvals)), z


def seed_curve(sys_id: BifSystemId, model: ModelParams, forcing: ForcingParams,
               *, A_range: tuple[float, float], scan: int = 40,
               bisect_iter: int = 60) -> np.ndarray:
    """Locate a starting unknown vector by bisection in A at fixed b.

    Sweeps A over ``A_range`` until the grazing indicator of the relevant
    fixed point changes sign, bisects to the bifurcation amplitude, and
    assembles the unknown vector from the critical orbit.
    """
    def sweep(A_vals):
        gaps = []
        guesses: list[np.ndarray | None] = []
        z_guess = None
        for A in A_vals:
            try:
                g, z_guess = _graze_gap(sys_id, model,
                                        forcing.with_updates(A=float(A)), z_guess)
                gaps.append(g)
            except (NewtonFailure, FlowError):
                gaps.append(np.nan)
            guesses.append(None if z_guess is None else z_guess.copy())
        return np.array(gaps), guesses

    def bracket(A_vals, gaps):
        ok = np.isfinite(gaps)
        for i in range(len(A_vals) - 1):
            if ok[i] and ok[i + 1] and gaps[i] * gaps[i + 1] < 0.0:
                return i
        return None

    # Sweep upward first; near existence edges the branch fixed point only
    # converges when threaded from the robust side, so retry downward.
    A_up = np.linspace(A_range[0], A_range[1], scan)
    gaps, guesses = sweep(A_up)
    idx = bracket(A_up, gaps)
    A_vals = A_up
    if idx is None:
        A_down = A_up[::-1]
        gaps_d, guesses_d = sweep(A_down)
        idx_d = bracket(A_down, gaps_d)
        if idx_d is not None:
            A_vals, gaps, guesses, idx = A_down, gaps_d, guesses_d, idx_d
    if idx is None:
        raise NewtonFailure(
            f"no grazing sign change for {sys_id} with A in {A_range}; "
            "widen the range or adjust b")
    lo, hi = float(A_vals[idx]), float(A_vals[idx + 1])
    glo = gaps[idx]
    z_guess = guesses[idx]
    for _ in range(bisect_iter):
        mid = 0.5 * (lo + hi)
        try:
            gm, z_guess = _graze_gap(sys_id, model, forcing.with_updates(A=mid), z_guess)
        except (NewtonFailure, FlowError):
            hi = mid
            continue
        if glo * gm <= 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    A_star = 0.5 * (lo + hi)
    return _assemble_w(sys_id, model, forcing.with_updates(A=A_star), z_guess)


def _assemble_w(sys_id: BifSystemId, model: ModelParams, forcing: ForcingParams,
                z_guess=None) -> np.ndarray:
    """Unknown vector of the critical orbit at (approximately) grazing parameters."""
    sm = StroboMap(model, forcing)
    sys = sm.system
    dT = forcing.on_time
    n_branch = sys_id.n - 1 if sys_id.side == "lower" else sys_id.n
    guess = model.equilibrium().as_array() if z_guess is None else np.asarray(z_guess)
    fp = find_fixed_point(n_branch, model, forcing, guess, strobo=sm)
    z = fp.z.as_array()
    volts: list[float] = []
    times: list[float] = []
    t_cur = 0.0
    z_cur = z.copy()
    for _ in range(n_branch):
        z_hit, dt = flow_to_event(sys, z_cur, forcing.A, sm.virtual_horizon)
        t_cur += dt
        volts.append(float(z_hit[0]))
        times.append(t_cur)
        z_cur = sys.reset(z_hit[None, :])[0]

    if sys_id.kind == "NS":
        # The final hit sits at the switch-off time.
        if sys_id.side == "lower":
            z_end = flow(sys, z_cur, forcing.A, dT - t_cur)
            volts.append(float(0.5 * (z_end[0] + z_end[1])))
        seg_times = times[: sys_id.n - 1]
    else:
        # The final hit is the tangency: the maximum of h along the tail.
        ts = np.linspace(0.0, max(dT - t_cur, 1e-9), 400)
        from .flow import integrate

        def rhs(y):
            return sys.f(y, forcing.A)

        res = integrate(rhs, np.tile(z_cur, (ts.size, 1)), ts, rtol=1e-10,
                        atol=1e-12, record=False)
        hvals = sys.h(res.y)
        k = int(np.argmax(hvals))
        volts.append(float(0.5 * (res.y[k, 0] + res.y[k, 1])))
        times.append(t_cur + float(ts[k]))
        seg_times = [times[0]] + [times[i] - times[i - 1] for i in range(1, sys_id.n)]

    w = np.array(volts + list(seg_times) + [model.b, forcing.A])
    expect = sys_id.n_unknowns
    if w.shape != (expect,):
        raise NewtonFailure(f"assembled seed has {w.shape[0]} unknowns, expected {expect}")
    return w


def seed_tangent_from_transversal(s_id: BifSystemId, ns_curve: list[CurvePoint],
                                  ns_id: BifSystemId, model: ModelParams,
                                  forcing: ForcingParams) -> np.ndarray:
    """Seed a tangential-graze curve at the smooth/nonsmooth transition point.

    Along a traced transversal-graze curve, the transversality of the final
    hit (the tangency residual evaluated at the hit voltage) changes sign
    exactly at the codimension-two transition; the tangential curve of the
    same index and side starts there, with the final hit time equal to the
    pulse-on duration.
    """
    if s_id.kind != "S" or ns_id.kind != "NS":
        raise ValueError("expected a tangential target seeded from a transversal curve")
    if (s_id.n, s_id.side) != (ns_id.n, ns_id.side):
        raise ValueError("curves must share the hit count and collision side")

    def tangency(w) -> float:
        V = float(w[ns_id.n - 1])
        b, A = float(w[-2]), float(w[-1])
        p = model.with_updates(b=b, unsafe=True)
        return -V + p.V0 + A - (-V + float(p.theta_inf(V))) / p.tau_theta

    vals = np.array([tangency(q.w) for q in ns_curve])
    flips = np.flatnonzero(vals[:-1] * vals[1:] < 0.0)
    if flips.size == 0:
        raise NewtonFailure(
            f"no smooth/nonsmooth transition found along the {ns_id} curve")
    i = int(flips[0])
    frac = vals[i] / (vals[i] - vals[i + 1])
    w_ns = ns_curve[i].w + frac * (ns_curve[i + 1].w - ns_curve[i].w)

    n = s_id.n
    volts = list(w_ns[:n])
    times_ns = list(w_ns[n:n + (n - 1)])
    t_last = forcing.on_time - float(np.sum(times_ns))
    times = times_ns + [t_last]
    w0 = np.array(volts + times + [w_ns[-2], w_ns[-1]])
    if w0.shape != (s_id.n_unknowns,):
        raise NewtonFailure("assembled tangential seed has the wrong shape")
    return w0


@dataclass(frozen=True)
class Codim2Point:
    b: float
    A: float
    w_a: np.ndarray
    w_b: np.ndarray
    residual: float


def codim2_transition(ns_system: ResidualSystem, ns_curve: list[CurvePoint],
                      s_system: ResidualSystem, *, tol: float = 1e-8
                      ) -> Codim2Point:
    """Codim-2 point where a transversal-graze curve turns tangential.

    The smooth and nonsmooth grazing conditions hold simultaneously there;
    the transversal curve's final hit loses transversality.  Unlike a
    transversal crossing of two curves, this is a corner: the tangential
    curve starts on the transversal one, so the point is located along the
    traced transversal curve and polished by the joint Newton solve.
    """
    ns_id, s_id = ns_system.sys_id, s_system.sys_id
    w_s = seed_tangent_from_transversal(s_id, ns_curve, ns_id, ns_system.model,
                                        ns_system.forcing)
    w_ns = None
    target = w_s[[-2, -1]]
    best = np.inf
    for q in ns_curve:
        d = float(np.hypot(q.w[-2] - target[0], q.w[-1] - target[1]))
        if d < best:
            best, w_ns = d, q.w.copy()
    w_ns[-2:] = target
    wa, wb = _refine_codim2(ns_system, s_system, w_ns, w_s, tol=tol)
    res = max(float(np.max(np.abs(ns_system.residual(wa)))),
              float(np.max(np.abs(s_system.residual(wb)))))
    return Codim2Point(b=float(wa[-2]), A=float(wa[-1]), w_a=wa, w_b=wb,
                       residual=res)


def codim2_points(curve_a: list[CurvePoint], curve_b: list[CurvePoint],
                  system_a: ResidualSystem, system_b: ResidualSystem,
                  *, tol: float = 1e-8) -> list[Codim2Point]:
    """Transversal crossings of two traced curves in the (b, A) plane.

    Segment intersections of the polyline projections are refined by a joint
    Newton solve of both residual systems with shared (b, A).
    """
    pa = np.array([[p.w[-2], p.w[-1]] for p in curve_a])
    pb = np.array([[p.w[-2], p.w[-1]] for p in curve_b])
    raw: list[tuple[int, int, float]] = []
    for i in range(len(pa) - 1):
        d1 = pa[i + 1] - pa[i]
        for j in range(len(pb) - 1):
            d2 = pb[j + 1] - pb[j]
            den = d1[0] * d2[1] - d1[1] * d2[0]
            if den == 0.0:
                continue
            r = pb[j] - pa[i]
            s = (r[0] * d2[1] - r[1] * d2[0]) / den
            u = (r[0] * d1[1] - r[1] * d1[0]) / den
            if 0.0 <= s <= 1.0 and 0.0 <= u <= 1.0:
                raw.append((i, j, s))

    out: list[Codim2Point] = []
    for i, j, s in raw:
        wa = curve_a[i].w + s * (curve_a[i + 1].w - curve_a[i].w)
        wb0 = curve_b[j].w.copy()
        wb0[-2:] = wa[-2:]
        try:
            wa_ref, wb_ref = _refine_codim2(system_a, system_b, wa, wb0, tol=tol)
        except (NewtonFailure, FlowError):
            continue
        res = max(float(np.max(np.abs(system_a.residual(wa_ref)))),
                  float(np.max(np.abs(system_b.residual(wb_ref)))))
        out.append(Codim2Point(b=float(wa_ref[-2]), A=float(wa_ref[-1]),
                               w_a=wa_ref, w_b=wb_ref, residual=res))
    # Deduplicate near-identical refinements.
    unique: list[Codim2Point] = []
    for pt in sorted(out, key=lambda q: (q.b, q.A)):
        if not any(abs(pt.b - q.b) < 1e-6 and abs(pt.A - q.A) < 1e-6 for q in unique):
            unique.append(pt)
    return unique


def _refine_codim2(system_a: ResidualSystem, system_b: ResidualSystem,
                   wa, wb, *, tol: float, max_iter: int = NEWTON_MAX_ITER):
    """Joint Newton on the stacked residuals with shared (b, A)."""
    ma = system_a.sys_id.n_unknowns
    mb = system_b.sys_id.n_unknowns
    x = np.concatenate([wa[:-2], wb[:-2], wa[-2:]])

    def unpack(x):
        wa_ = np.concatenate([x[:ma - 2], x[-2:]])
        wb_ = np.concatenate([x[ma - 2:ma - 2 + mb - 2], x[-2:]])
        return wa_, wb_

    for _ in range(max_iter):
        wa_, wb_ = unpack(x)
        g = np.concatenate([system_a.residual(wa_), system_b.residual(wb_)])
        if float(np.max(np.abs(g))) <= tol * 1e-2:
            break
        Ja = system_a.jacobian(wa_)
        Jb = system_b.jacobian(wb_)
        J = np.zeros((g.size, x.size))
        J[:ma - 1, :ma - 2] = Ja[:, :ma - 2]
        J[:ma - 1, -2:] = Ja[:, -2:]
        J[ma - 1:, ma - 2:ma - 2 + mb - 2] = Jb[:, :mb - 2]
        J[ma - 1:, -2:] = Jb[:, -2:]
        x = x + _min_norm_step(J, g)
    wa_, wb_ = unpack(x)
    res = max(float(np.max(np.abs(system_a.residual(wa_)))),
              float(np.max(np.abs(system_b.residual(wb_)))))
    if res > tol:
        raise NewtonFailure(f"codim-2 refinement stalled at residual {res:.3g}")
    return wa_, wb_
