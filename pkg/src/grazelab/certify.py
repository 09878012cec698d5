"""Semi-rigorous quasi-contraction certification of a census orbit.

Builds a pair of quadrilaterals from a segment of the transversal switching
boundary and its images under the no-spike and one-spike branches, then
checks the three hypotheses that force at most one periodic orbit (whose
itinerary is then maximin): forward invariance of the union, contraction of
both branches on their quadrilaterals, and separation (boundary iterates
never return to the boundary, tested by itinerary coherence of a dense
boundary sample).  Verdicts are semi-rigorous: floating-point evaluation on
finite samples, not a computer-assisted proof.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .census import OrbitInfo, census, is_maximin
from .flow import FlowError, TangencyError
from .manifold import transversal_boundaries
from .model import ForcingParams, ModelParams
from .strobo import StroboMap

__all__ = [
    "Quadrilateral",
    "CertReport",
    "build_e_sets",
    "check_invariance",
    "check_contraction",
    "check_separation",
    "certify",
]

CONTAINMENT_MARGIN = -1e-9
SEPARATION_DISTANCE = 1e-6


@dataclass(frozen=True)
class Quadrilateral:
    """Simple quadrilateral with counter-clockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (4, 2):
            raise ValueError("a quadrilateral needs exactly 4 plane vertices")

    @staticmethod
    def from_segments(seg: np.ndarray, image: np.ndarray) -> "Quadrilateral | None":
        """Quad spanned by a segment and its image; None when degenerate."""
        verts = np.array([seg[0], seg[1], image[1], image[0]], dtype=float)
        edges = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
        if np.any(edges < 1e-14):
            return None
        if _signed_area(verts) < 0.0:
            verts = verts[::-1]
        if _signed_area(verts) <= 0.0 or not _is_simple(verts):
            return None
        return Quadrilateral(vertices=verts)

    def edge_midpoints(self) -> np.ndarray:
        v = self.vertices
        return 0.5 * (v + np.roll(v, -1, axis=0))

    def interior_mesh(self, n: int) -> np.ndarray:
        """n x n bilinear interior sample of the quad."""
        u = (np.arange(1, n + 1)) / (n + 1)
        U, W = np.meshgrid(u, u)
        U, W = U.ravel()[:, None], W.ravel()[:, None]
        v0, v1, v2, v3 = self.vertices
        return ((1 - U) * (1 - W) * v0 + U * (1 - W) * v1
                + U * W * v2 + (1 - U) * W * v3)


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segs_intersect(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def _is_simple(quad: np.ndarray) -> bool:
    return not (_segs_intersect(quad[0], quad[1], quad[2], quad[3])
                or _segs_intersect(quad[1], quad[2], quad[3], quad[0]))


def _union_polygon(gamma: np.ndarray, img0: np.ndarray, img1: np.ndarray) -> np.ndarray:
    """Boundary walk of quad(gamma, img0) U quad(gamma, img1) (shared edge gamma)."""
    return np.array([img0[0], img0[1], gamma[1], img1[1], img1[0], gamma[0]])


def _union_is_convex(poly: np.ndarray) -> bool:
    """Convexity via hull-vertex-count equality on the union polygon."""
    try:
        hull = ConvexHull(poly)
    except QhullError:
        return False
    return len(hull.vertices) == len(poly)


def _contains(hull_poly: np.ndarray, pts: np.ndarray, margin: float) -> np.ndarray:
    """Half-plane membership of pts in a convex CCW polygon, with margin."""
    poly = hull_poly if _signed_area(hull_poly) > 0 else hull_poly[::-1]
    ok = np.ones(pts.shape[0], dtype=bool)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = b - a
        nrm = np.hypot(*e)
        if nrm == 0.0:
            continue
        cross = (e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) / nrm
        ok &= cross >= margin
    return ok


@dataclass
class ESets:
    E0: Quadrilateral
    E1: Quadrilateral
    gamma: np.ndarray
    union: np.ndarray


def _gamma_segment(polyline: np.ndarray, center_idx: int, lo_len: float,
                   hi_len: float) -> np.ndarray | None:
    """Polyline sub-segment reaching lo_len/hi_len of arclength from a vertex."""
    d = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(d)])
    sc = s[center_idx]
    lo, hi = sc - lo_len, sc + hi_len
    if lo < s[0] or hi > s[-1]:
        return None

    def interp(sv):
        k = int(np.searchsorted(s, sv, side="right") - 1)
        k = min(max(k, 0), len(d) - 1)
        w = 0.0 if d[k] == 0 else (sv - s[k]) / d[k]
        return polyline[k] + w * (polyline[k + 1] - polyline[k])

    g = np.array([interp(lo), interp(hi)])
    if np.allclose(g[0], g[1]):
        return None
    return g


def build_e_sets(sm: StroboMap, orbit: OrbitInfo, boundary: np.ndarray, *,
                 seed_half_len: float = 5e-3, growth: float = 1.5,
                 max_rounds: int = 20) -> ESets | None:
    """Quadrilateral pair from a boundary segment near the orbit.

    The segment sits on the transversal switching boundary closest to the
    orbit; the two quadrilaterals are spanned by the segment and its images
    under the two branches.  The one-spike image (reset applied) lands on
    the no-spike side of the boundary, so that quadrilateral is the no-spike
    set E0; the no-spike image lands just across on the spiking side and
    spans E1.  The segment grows geometrically until the union is convex.
    Returns None when the construction degenerates or convexity is never
    reached.
    """
    if seed_half_len <= 0.0 or boundary.shape[0] < 2:
        return None
    dists = np.min(np.linalg.norm(boundary[:, None, :] - orbit.points[None, :, :],
                                  axis=2), axis=1)
    center = int(np.argmin(dists))
    lo = hi = seed_half_len
    for _ in range(max_rounds):
        sets = _build_once(sm, boundary, center, lo, hi)
        if sets == "degenerate":
            return None
        if isinstance(sets, ESets):
            return sets
        lo *= growth
        hi *= growth
    return None


def _build_once(sm: StroboMap, boundary: np.ndarray, center: int, lo: float,
                hi: float):
    """One construction attempt: ESets, None (not convex), or "degenerate"."""
    gamma = _gamma_segment(boundary, center, lo, hi)
    if gamma is None:
        return "degenerate"
    try:
        img0 = np.array([sm.branch(gamma[0], 0)[0].as_array(),
                         sm.branch(gamma[1], 0)[0].as_array()])
        img1 = np.array([sm.branch(gamma[0], 1)[0].as_array(),
                         sm.branch(gamma[1], 1)[0].as_array()])
    except FlowError:
        return "degenerate"
    E0 = Quadrilateral.from_segments(gamma, img1)
    E1 = Quadrilateral.from_segments(gamma, img0)
    if E0 is None or E1 is None:
        return "degenerate"
    union = _union_polygon(gamma, img1, img0)
    if _union_is_convex(union):
        return ESets(E0=E0, E1=E1, gamma=gamma, union=union)
    return None


def _violation(hull_poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Worst half-plane deficit per point (<= 0 means inside)."""
    poly = hull_poly if _signed_area(hull_poly) > 0 else hull_poly[::-1]
    worst = np.full(pts.shape[0], -np.inf)
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        e = b - a
        nrm = np.hypot(*e)
        if nrm == 0.0:
            continue
        cross = (e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) / nrm
        worst = np.maximum(worst, -cross)
    return worst


def _chord_sagitta(sm: StroboMap, gamma: np.ndarray) -> float:
    """Deviation of the branch images of the segment midpoint from the chords.

    The quadrilaterals replace the (curved) branch images of the boundary
    segment by straight chords; this measures how far the true midpoint
    images sit from those chords, which bounds the error committed by the
    vertex-and-midpoint containment proxy.
    """
    mid = 0.5 * (gamma[0] + gamma[1])
    worst = 0.0
    for branch in (0, 1):
        img_mid = sm.branch(mid, branch)[0].as_array()
        a = sm.branch(gamma[0], branch)[0].as_array()
        b = sm.branch(gamma[1], branch)[0].as_array()
        e = b - a
        nrm = np.hypot(*e)
        if nrm == 0.0:
            continue
        dist = abs(e[0] * (img_mid[1] - a[1]) - e[1] * (img_mid[0] - a[0])) / nrm
        worst = max(worst, float(dist))
    return worst


def check_invariance(sm: StroboMap, sets: ESets, *,
                     margin: float | None = None) -> tuple[bool, dict]:
    """Condition: both branch images of their quadrilaterals stay in the union.

    Maps the vertices and edge midpoints of each quadrilateral by its branch
    and tests containment in the convex union by half-plane inequalities.
    Straight quad edges stand in for mildly curved image arcs, so by default
    the containment tolerance is the larger of the round-off guard and twice
    the measured midpoint-to-chord deviation of the image arcs; exceeding
    that is a genuine escape, not linearization slop.  The diagnostics carry
    the worst deficit, which the set-growth loop in :func:`certify` uses to
    steer the segment extension.
    """
    if margin is None:
        slop = _chord_sagitta(sm, sets.gamma)
        margin = min(CONTAINMENT_MARGIN, -2.0 * slop)
    diag: dict = {"worst_deficit": -np.inf, "margin": margin}
    ok = True
    for name, quad, branch in (("E0", sets.E0, 0), ("E1", sets.E1, 1)):
        pts = np.vstack([quad.vertices, quad.edge_midpoints()])
        try:
            imgs = np.array([sm.branch(z, branch)[0].as_array() for z in pts])
        except FlowError as exc:
            diag[name] = f"branch evaluation failed: {exc}"
            return False, diag
        deficit = _violation(sets.union, imgs)
        outside = deficit > -margin
        diag[name] = {"n_outside": int(outside.sum()),
                      "max_deficit": float(deficit.max())}
        diag["worst_deficit"] = max(diag["worst_deficit"], float(deficit.max()))
        if outside.any():
            k = int(np.argmax(deficit))
            diag[name]["witness"] = {"point": pts[k].tolist(), "image": imgs[k].tolist()}
            ok = False
    return ok, diag


def check_contraction(sm: StroboMap, sets: ESets, *, mesh: int = 15) -> tuple[bool, dict]:
    """Condition: both branch differentials have spectral radius < 1 on a mesh.

    The one-spike branch is checked on the interior mesh of its quadrilateral
    (this is the one that can expand, through the reset); the no-spike branch
    is also verified on its own mesh.
    """
    diag: dict = {}
    for name, quad, branch in (("E1", sets.E1, 1), ("E0", sets.E0, 0)):
        pts = quad.interior_mesh(mesh)
        worst = 0.0
        witness = None
        for z in pts:
            try:
                _, M = sm.branch_differential(z, branch)
            except TangencyError as exc:
                diag[name] = f"tangential hit on the mesh: {exc}"
                return False, diag
            except FlowError as exc:
                diag[name] = f"differential evaluation failed: {exc}"
                return False, diag
            rho = float(np.max(np.abs(np.linalg.eigvals(M))))
            if rho > worst:
                worst, witness = rho, z
        diag[name] = {"max_spectral_radius": worst,
                      "witness": None if witness is None else witness.tolist()}
        if worst >= 1.0:
            return False, diag
    return True, diag


def check_separation(sm: StroboMap, sets: ESets, period: int, *,
                     horizon_multiple: int = 20, n_samples: int = 129) -> tuple[bool, dict]:
    """Condition: boundary iterates stay coherent (never re-straddle the boundary).

    The map is discontinuous exactly on the segment, so the segment's two
    one-sided image families (dense sample mapped once by each branch) are
    iterated under the true map.  Each family must keep identical per-period
    spike counts throughout the horizon and collapse onto a single point of
    the period-composed map by the end.
    """
    g = sets.gamma
    w = np.linspace(0.0, 1.0, n_samples)[:, None]
    base = (1 - w) * g[0] + w * g[1]
    horizon = horizon_multiple * max(period, 1)
    diag: dict = {}
    for branch in (0, 1):
        try:
            Z = np.array([sm.branch(z, branch)[0].as_array() for z in base])
        except FlowError as exc:
            return False, {"reason": f"one-sided image evaluation failed: {exc}"}
        for k in range(horizon):
            Z, counts, status = sm.map_batch(Z)
            if np.any(status != 0):
                return False, {"branch": branch, "step": k,
                               "reason": "map evaluation failed for some samples"}
            if not np.all(counts == counts[0]):
                ks = np.flatnonzero(counts != counts[0])
                return False, {"branch": branch, "step": k, "reason": "itineraries split",
                               "witness_pair": [Z[0].tolist(), Z[int(ks[0])].tolist()]}
        spread = float(np.max(np.linalg.norm(Z - Z[0], axis=1)))
        diag[f"branch{branch}_final_spread"] = spread
        if spread > SEPARATION_DISTANCE:
            diag["reason"] = "samples did not collapse"
            return False, diag
    return True, diag


@dataclass
class CertReport:
    """Outcome of one certification attempt (semi-rigorous, not a proof)."""

    sets: ESets | None
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    period: int
    itinerary: str
    verdict: str
    diagnostics: dict

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "rigor": "semi-rigorous",
            "conditions": {"invariance": self.cond_i, "contraction": self.cond_ii,
                           "separation": self.cond_iii},
            "period": self.period,
            "itinerary": self.itinerary,
            "gamma": None if self.sets is None else self.sets.gamma.tolist(),
            "E0": None if self.sets is None else self.sets.E0.vertices.tolist(),
            "E1": None if self.sets is None else self.sets.E1.vertices.tolist(),
            "diagnostics": self.diagnostics,
        }


def certify(model: ModelParams, forcing: ForcingParams, orbit: OrbitInfo, *,
            strobo: StroboMap | None = None, boundary: np.ndarray | None = None,
            seed_half_len: float = 5e-3, max_regrow: int = 8,
            mesh: int = 15, n_samples: int = 129) -> CertReport:
    """Run the three quasi-contraction checks for one census orbit.

    The boundary segment is regrown (and the sets rebuilt) when containment
    fails, up to ``max_regrow`` rounds; contraction and separation are then
    evaluated on the final sets.  The verdict is "pass" only when all three
    conditions hold; otherwise the failing conditions are named, with
    witnesses in the diagnostics.
    """
    sm = StroboMap(model, forcing) if strobo is None else strobo
    if boundary is None:
        polys = transversal_boundaries(model, forcing, n_max=1, samples=512)
        if not polys:
            return CertReport(sets=None, cond_i=False, cond_ii=False, cond_iii=False,
                              period=orbit.period,
                              itinerary=str(orbit.itinerary) if orbit.itinerary else "",
                              verdict="fail(i)",
                              diagnostics={"reason": "no transversal boundary found"})
        boundary = polys[0].points

    sets, ok_i, diag_i = _grow_until_invariant(
        sm, orbit, boundary, seed_half_len=seed_half_len, max_regrow=max_regrow)

    if sets is None:
        return CertReport(sets=None, cond_i=False, cond_ii=False, cond_iii=False,
                          period=orbit.period,
                          itinerary=str(orbit.itinerary) if orbit.itinerary else "",
                          verdict="fail(i)", diagnostics={"invariance": diag_i})

    ok_ii, diag_ii = check_contraction(sm, sets, mesh=mesh)
    ok_iii, diag_iii = check_separation(sm, sets, orbit.period, n_samples=n_samples)

    failing = [name for name, ok in (("i", ok_i), ("ii", ok_ii), ("iii", ok_iii)) if not ok]
    verdict = "pass" if not failing else "fail(" + ",".join(failing) + ")"
    return CertReport(sets=sets, cond_i=ok_i, cond_ii=ok_ii, cond_iii=ok_iii,
                      period=orbit.period,
                      itinerary=str(orbit.itinerary) if orbit.itinerary else "",
                      verdict=verdict,
                      diagnostics={"invariance": diag_i, "contraction": diag_ii,
                                   "separation": diag_iii})


def _grow_until_invariant(sm: StroboMap, orbit: OrbitInfo, boundary: np.ndarray, *,
                          seed_half_len: float, max_regrow: int):
    """Build sets and grow the segment in the direction that fails containment.

    Phase one grows the segment symmetrically until the quad union is convex;
    phase two compares three candidate extensions per round (low end, high
    end, both) and keeps the one with the smallest containment deficit,
    mirroring the grow-in-the-failing-direction refinement.
    """
    dists = np.min(np.linalg.norm(boundary[:, None, :] - orbit.points[None, :, :],
                                  axis=2), axis=1)
    center = int(np.argmin(dists))

    def attempt(lo, hi):
        built = _build_once(sm, boundary, center, lo, hi)
        if built == "degenerate":
            return None, False, {"reason": "set construction degenerated"}, np.inf
        if built is None:
            return None, False, {"reason": "union not convex"}, np.inf
        ok, diag = check_invariance(sm, built)
        score = -np.inf if ok else diag.get("worst_deficit", np.inf)
        return built, ok, diag, score

    lo = hi = seed_half_len
    sets, ok, diag, _ = attempt(lo, hi)
    grow_rounds = 0
    while sets is None and diag.get("reason") == "union not convex" and grow_rounds < 20:
        lo *= 1.5
        hi *= 1.5
        grow_rounds += 1
        sets, ok, diag, _ = attempt(lo, hi)
    if sets is None:
        return None, False, diag

    best = (sets, ok, diag)
    for _ in range(max_regrow):
        if ok:
            return sets, ok, diag
        candidates = [(lo * 1.5, hi), (lo, hi * 1.5), (lo * 1.5, hi * 1.5)]
        results = [attempt(lc, hc) for lc, hc in candidates]
        scores = [r[3] for r in results]
        k = int(np.argmin(scores))
        if results[k][0] is None:
            break
        lo, hi = candidates[k]
        sets, ok, diag, _ = results[k]
        best = (sets, ok, diag)
    return best


def certified_orbit_is_consistent(model: ModelParams, forcing: ForcingParams,
                                  report: CertReport, orbit: OrbitInfo) -> tuple[bool, str]:
    """Cross-checks behind a passing verdict: uniqueness in the union and maximin.

    Reruns the census and confirms that exactly one orbit lies inside
    E0 U E1 and that its itinerary is maximin.
    """
    if report.sets is None:
        return False, "no sets were built"
    rep = census(model, forcing)
    inside = []
    for o in rep.orbits:
        flags = _contains(report.sets.union, o.points, CONTAINMENT_MARGIN)
        if flags.any():
            inside.append(o)
    if len(inside) != 1:
        return False, f"{len(inside)} census orbits intersect the certified union"
    o = inside[0]
    if o.itinerary is None or not is_maximin(o.itinerary):
        return False, "orbit inside the union is not maximin"
    return True, "ok"
