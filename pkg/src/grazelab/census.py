"""Attracting-periodic-orbit census of the stroboscopic map.

A grid of initial conditions in the no-spike region is iterated forward; the
last two iterates of each trajectory give an (anchor, image) pair with the
spike count of the connecting step.  The pair lists are closed under the map
(forward images for orphan images, local map inversion for orphan anchors),
which yields a permutation on the closed point set whose cycles are the
attracting orbits.  Orbits stepping only on the no-spike/one-spike regions
get a binary itinerary, a rotation number, and a maximin verdict.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .flow import FlowError
from .model import ForcingParams, ModelParams
from .strobo import StroboMap

__all__ = [
    "Itinerary",
    "RotationNumber",
    "OrbitInfo",
    "CensusReport",
    "rotation_number",
    "is_maximin",
    "census",
    "default_grid",
    "scan_1d",
    "scan_2d",
]

POINT_TOL = 1e-8
_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Itinerary:
    """Periodic binary symbol block (0 = no spike that period, 1 = one spike)."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.bits:
            raise ValueError("itinerary must be nonempty")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"itinerary bits must be 0/1, got {self.bits}")

    @property
    def q(self) -> int:
        return len(self.bits)

    @property
    def p(self) -> int:
        return sum(self.bits)

    def rotations(self) -> list[tuple[int, ...]]:
        b = self.bits
        return [b[k:] + b[:k] for k in range(len(b))]

    def canonical(self) -> tuple[int, ...]:
        """Lexicographically minimal rotation of the block."""
        return min(self.rotations())

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


@dataclass(frozen=True)
class RotationNumber:
    """Fraction of spiking periods, kept both raw and in lowest terms."""

    p_raw: int
    q_raw: int

    def __post_init__(self) -> None:
        if self.q_raw < 1 or not 0 <= self.p_raw <= self.q_raw:
            raise ValueError(f"invalid rotation number {self.p_raw}/{self.q_raw}")

    @property
    def p(self) -> int:
        return self.p_raw // math.gcd(self.p_raw, self.q_raw) if self.p_raw else 0

    @property
    def q(self) -> int:
        return self.q_raw // math.gcd(max(self.p_raw, 1), self.q_raw) if self.p_raw \
            else 1

    @property
    def value(self) -> float:
        return self.p_raw / self.q_raw

    def __str__(self) -> str:
        return f"{self.p}/{self.q}"


def rotation_number(it: Itinerary) -> RotationNumber:
    """Rotation number of a periodic itinerary: ones per block length."""
    return RotationNumber(p_raw=it.p, q_raw=it.q)


def _primitive_root(bits: tuple[int, ...]) -> tuple[int, ...]:
    q = len(bits)
    for r in range(1, q + 1):
        if q % r == 0 and bits == bits[r:] + bits[:r]:
            return bits[:r]
    return bits


def is_maximin(it: Itinerary | tuple[int, ...]) -> bool:
    """Whether the block's symbols are distributed in the maximin pattern.

    Uses the cyclic-permutation characterization: encode every rotation as an
    integer with the first symbol as the most significant bit, order the
    rotations by that encoding, and demand that consecutive ordered rotation
    indices advance by a constant shift (mod block length).  Blocks that are
    powers of a shorter word reduce to that word first.
    """
    bits = it.bits if isinstance(it, Itinerary) else tuple(int(b) for b in it)
    q = len(bits)
    if not 1 <= q <= 63:
        raise ValueError(f"block length must be in [1, 63], got {q}")
    bits = _primitive_root(bits)
    q = len(bits)
    if q == 1:
        return True
    codes = []
    for k in range(q):
        rot = bits[k:] + bits[:k]
        code = 0
        for b in rot:
            code = (code << 1) | b
        codes.append(code)
    order = sorted(range(q), key=lambda k: codes[k])
    k0 = (order[1] - order[0]) % q
    return all((order[j] - order[j - 1]) % q == k0 for j in range(1, q))


@dataclass(frozen=True)
class OrbitInfo:
    """One attracting cycle found by the census."""

    points: np.ndarray
    period: int
    spikes: tuple[int, ...]
    itinerary: Itinerary | None
    rotation: RotationNumber | None
    maximin: bool | None
    residual: float

    @property
    def is_fixed_point(self) -> bool:
        return self.period == 1


@dataclass
class CensusReport:
    """Result of one census run.

    ``points`` is the closed, lexicographically ordered point set; ``nu`` the
    permutation mapping each point's index to its image's index; ``spikes``
    the per-edge spike counts.  Orbits touching regions with two or more
    spikes are kept but carry no itinerary.
    """

    orbits: list[OrbitInfo]
    points: np.ndarray
    nu: np.ndarray
    spikes: np.ndarray
    failed: bool
    messages: list[str]

    @property
    def fixed_points(self) -> list[OrbitInfo]:
        return [o for o in self.orbits if o.is_fixed_point]

    @property
    def cycles(self) -> list[OrbitInfo]:
        return [o for o in self.orbits if not o.is_fixed_point]


def default_grid(model: ModelParams, forcing: ForcingParams,
                 n: tuple[int, int] = (64, 64)) -> np.ndarray:
    """Initial-condition grid over the default census box.

    Voltage spans [Vr, theta_inf(V0) + Delta]; threshold spans
    [theta_inf(V0) - 0.1, theta_inf(V0) + Delta + A].  Points outside the
    subthreshold domain are dropped here; the no-spike-region filter happens
    inside :func:`census`.
    """
    th0 = float(model.theta_inf(model.V0))
    Vs = np.linspace(model.Vr, th0 + model.Delta, n[0])
    Ts = np.linspace(th0 - 0.1, th0 + model.Delta + forcing.A, n[1])
    VV, TT = np.meshgrid(Vs, Ts)
    Z = np.stack([VV.ravel(), TT.ravel()], axis=1)
    return Z[model.is_subthreshold(Z)]


class _PointSet:
    """Tolerance-keyed point registry with stable indices.

    Equality is per-component with a relative floor, so attractors far from
    the origin do not chain-split on round-off-scale spread.
    """

    def __init__(self, tol: float):
        self.tol = tol
        self.points: list[np.ndarray] = []

    def _close(self, q, z) -> bool:
        sx = self.tol * max(1.0, abs(q[0]), abs(z[0]))
        sy = self.tol * max(1.0, abs(q[1]), abs(z[1]))
        return abs(q[0] - z[0]) <= sx and abs(q[1] - z[1]) <= sy

    def find(self, z) -> int | None:
        z = np.asarray(z, dtype=float)
        for i, q in enumerate(self.points):
            if self._close(q, z):
                return i
        return None

    def add(self, z) -> int:
        i = self.find(z)
        if i is not None:
            return i
        self.points.append(np.asarray(z, dtype=float).copy())
        return len(self.points) - 1


def _merge_lanes(Z: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Collapse numerically identical lanes; returns (reps, lane->rep index)."""
    scale = tol * np.maximum(1.0, np.max(np.abs(Z), axis=1, keepdims=True))
    with np.errstate(invalid="ignore"):
        scaled = Z / scale
    # Nonfinite lanes collapse onto one sentinel group; they carry failed
    # status and are dropped by the caller.
    scaled = np.where(np.isfinite(scaled), np.round(scaled), 1e18)
    _, first, inverse = np.unique(scaled, axis=0, return_index=True,
                                  return_inverse=True)
    return Z[first], inverse


def census(model: ModelParams, forcing: ForcingParams, *, grid: np.ndarray | None = None,
           n_grid: tuple[int, int] = (64, 64), n_iter: int = 100,
           point_tol: float = POINT_TOL, max_closure: int = 50,
           strobo: StroboMap | None = None) -> CensusReport:
    """Find the attracting periodic orbits reachable from a no-spike grid.

    Follows the forward-iteration + list-closure procedure: N iterates per
    initial condition, deduplicated (anchor, image) endpoint pairs, forward/
    backward completion until the anchor and image sets coincide, then cycle
    extraction from the induced permutation.  Failure to close sets the
    ``failed`` flag rather than raising.
    """
    sm = StroboMap(model, forcing) if strobo is None else strobo
    messages: list[str] = []
    if grid is None:
        grid = default_grid(model, forcing, n_grid)
    Z = np.asarray(grid, dtype=float).reshape(-1, 2)

    # Restrict to the no-spike region.
    counts0 = sm.classify(Z)
    Z = Z[counts0 == 0]
    if Z.shape[0] == 0:
        return CensusReport(orbits=[], points=np.empty((0, 2)), nu=np.empty(0, dtype=int),
                            spikes=np.empty(0, dtype=int), failed=True,
                            messages=["no grid points in the no-spike region"])

    # Forward iteration with lane merging: trajectories that have met within
    # a tolerance whose residual influence provably decays below point_tol by
    # the final iterate are collapsed onto one representative.  The decay
    # rate estimate is the (conservative, halved-exponent) threshold-variable
    # contraction per period; the cap guards against locally expansive spots.
    lam = float(np.exp(-forcing.T / (2.0 * model.tau_theta)))
    lane_to_rep = np.arange(Z.shape[0])
    reps = Z
    prev = None
    spikes_last = np.zeros(reps.shape[0], dtype=int)
    for k in range(n_iter):
        images, counts, status = sm.map_batch(reps)
        ok = status == 0
        if not ok.all():
            messages.append(f"{int((~ok).sum())} trajectories failed at iterate {k + 1}")
            keep = np.flatnonzero(ok)
            remap = -np.ones(reps.shape[0], dtype=int)
            remap[keep] = np.arange(keep.size)
            lane_to_rep = remap[lane_to_rep]
            reps, images, counts = reps[ok], images[ok], counts[ok]
        prev = reps
        spikes_last = counts
        reps = images
        if 24 <= k < n_iter - 2 and k % 4 == 0 and reps.shape[0] > 8:
            remaining = n_iter - 1 - k
            with np.errstate(over="ignore"):
                budget = 0.25 * point_tol * lam ** (-float(remaining))
            tol_k = float(min(1e-7, max(_MERGE_TOL, budget)))
            merged, inv = _merge_lanes(reps, tol_k)
            if merged.shape[0] < reps.shape[0]:
                reps = merged
                good = lane_to_rep >= 0
                lane_to_rep[good] = inv[lane_to_rep[good]]

    anchors, images, spikes = prev, reps, spikes_last

    # Deduplicate endpoint pairs at the census tolerance.
    pset = _PointSet(point_tol)
    edges: dict[int, tuple[int, int]] = {}
    pre_scale = np.round(np.concatenate([anchors, images]) / (10 * _MERGE_TOL))
    _, uniq_rows = np.unique(pre_scale[: anchors.shape[0]], axis=0, return_index=True)
    for r in uniq_rows:
        ia = pset.add(anchors[r])
        jf = pset.add(images[r])
        if ia not in edges:
            edges[ia] = (jf, int(spikes[r]))

    failed = False
    for _ in range(max_closure):
        anchor_ids = set(edges.keys())
        image_ids = {j for j, _ in edges.values()}
        orphan_images = sorted(image_ids - anchor_ids)
        orphan_anchors = sorted(anchor_ids - image_ids)
        if not orphan_images and not orphan_anchors:
            break
        for j in orphan_images:
            # The image set is missing this point's own image: map it forward.
            img, cnt, status = sm.map_batch(pset.points[j][None, :])
            if status[0] != 0:
                failed = True
                messages.append("forward completion failed: map evaluation error")
                continue
            jj = pset.add(img[0])
            edges[j] = (jj, int(cnt[0]))
        for i in orphan_anchors:
            # The anchor set is missing this point's preimage: invert locally.
            pre = _invert_map(sm, pset, edges, pset.points[i], point_tol)
            if pre is None:
                failed = True
                messages.append("backward completion failed: no local preimage found")
                continue
            ii = pset.add(pre)
            if ii not in edges:
                img, cnt, status = sm.map_batch(pset.points[ii][None, :])
                if status[0] != 0 or pset.find(img[0]) != i:
                    # Inversion landed on a spurious branch; treat as failure.
                    failed = True
                    messages.append("backward completion produced an inconsistent preimage")
                    continue
                edges[ii] = (i, int(cnt[0]))
        if failed:
            break
    else:
        failed = True
        messages.append("closure did not converge within the round limit")

    # Freeze the permutation on the lexicographically ordered point set.
    pts = np.array(pset.points) if pset.points else np.empty((0, 2))
    order = np.lexsort((pts[:, 1], pts[:, 0])) if pts.size else np.empty(0, dtype=int)
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    pts_sorted = pts[order]
    nu = -np.ones(order.size, dtype=int)
    s_arr = -np.ones(order.size, dtype=int)
    for i, (j, s) in edges.items():
        nu[rank[i]] = rank[j]
        s_arr[rank[i]] = s
    if order.size and (np.any(nu < 0) or len(set(nu.tolist())) != order.size):
        failed = True
        messages.append("edge map is not a permutation of the closed point set")

    orbits: list[OrbitInfo] = []
    if not failed and order.size:
        seen = np.zeros(order.size, dtype=bool)
        for i0 in range(order.size):
            if seen[i0]:
                continue
            cycle = [i0]
            seen[i0] = True
            j = int(nu[i0])
            while j != i0 and not seen[j]:
                seen[j] = True
                cycle.append(j)
                j = int(nu[j])
            if j != i0:
                continue  # lead-in to a cycle handled from its own start
            cyc_pts = pts_sorted[cycle]
            cyc_spk = tuple(int(s_arr[i]) for i in cycle)
            # A-posteriori verification: the cycle really closes under the map.
            z = cyc_pts[0].copy()
            for _ in range(len(cycle)):
                img, _, status = sm.map_batch(z[None, :])
                if status[0] != 0:
                    break
                z = img[0]
            scale = max(1.0, float(np.max(np.abs(cyc_pts[0]))))
            residual = float(np.max(np.abs(z - cyc_pts[0]))) / scale
            if residual > 10 * point_tol:
                messages.append(
                    f"cycle of period {len(cycle)} failed verification "
                    f"(residual {residual:.3g}); dropped")
                continue
            if all(s <= 1 for s in cyc_spk):
                it = Itinerary(bits=cyc_spk)
                rot = rotation_number(it)
                mm = is_maximin(it)
            else:
                it, rot, mm = None, None, None
            orbits.append(OrbitInfo(points=cyc_pts, period=len(cycle), spikes=cyc_spk,
                                    itinerary=it, rotation=rot, maximin=mm,
                                    residual=residual))

    orbits.sort(key=lambda o: (o.period, tuple(o.points[0])))
    return CensusReport(orbits=orbits, points=pts_sorted, nu=nu, spikes=s_arr,
                        failed=failed, messages=messages)


def _invert_map(sm: StroboMap, pset: _PointSet, edges: dict, target: np.ndarray,
                point_tol: float) -> np.ndarray | None:
    """Preimage of ``target`` under the map: grid predecessor, else local Newton."""
    # Grid predecessor: some registered edge already maps onto the target.
    tgt = pset.find(target)
    if tgt is not None:
        preds = [i for i, (j, _) in edges.items() if j == tgt]
        if len(preds) == 1:
            return pset.points[preds[0]]
    # Local inversion: Newton on branch(z) = target, seeded from nearby points.
    seeds = sorted(pset.points, key=lambda q: float(np.hypot(*(q - target))))
    for seed in seeds[:6]:
        for branch in (0, 1, 2):
            z = seed.copy()
            try:
                for _ in range(30):
                    image, M = sm.branch_differential(z, branch)
                    g = image.as_array() - target
                    if np.max(np.abs(g)) <= point_tol * 0.1:
                        break
                    z = z + np.linalg.solve(M, -g)
                else:
                    continue
            except (FlowError, np.linalg.LinAlgError):
                continue
            img, _, status = sm.map_batch(z[None, :])
            if status[0] == 0 and np.max(np.abs(img[0] - target)) <= 10 * point_tol \
                    and sm.model.is_subthreshold(z):
                return z
    return None


# ---------------------------------------------------------------------------
# Parameter scans.


def _scan_cell(args):
    (model, forcing, n_grid, n_iter, point_tol) = args
    try:
        rep = census(model, forcing, n_grid=n_grid, n_iter=n_iter, point_tol=point_tol)
    except FlowError as exc:
        return {"b": model.b, "A": forcing.A, "failed": True, "error": str(exc),
                "orbits": []}
    return summarize_census(rep, b=model.b, A=forcing.A)


def summarize_census(rep: CensusReport, *, b: float, A: float) -> dict:
    """Flat per-parameter-point summary used by the scan tables."""
    orbs = [{
        "period": o.period,
        "itinerary": str(o.itinerary) if o.itinerary else "",
        "rotation": str(o.rotation) if o.rotation else "",
        "rotation_value": o.rotation.value if o.rotation else float("nan"),
        "maximin": o.maximin,
        "points": o.points.tolist(),
        "spikes": list(o.spikes),
        "residual": o.residual,
    } for o in rep.orbits]
    return {
        "b": b, "A": A, "failed": rep.failed, "error": "; ".join(rep.messages),
        "orbits": orbs,
        "n_orbits": len(orbs),
        "coexistence": len(orbs) > 1,
    }


def scan_1d(model: ModelParams, forcing: ForcingParams, A_values, *,
            n_grid: tuple[int, int] = (64, 64), n_iter: int = 100,
            point_tol: float = POINT_TOL, threads: int = 1) -> list[dict]:
    """Census at each amplitude in ``A_values`` (fixed b); failures recorded per cell."""
    jobs = [(model, forcing.with_updates(A=float(A)), n_grid, n_iter, point_tol)
            for A in A_values]
    return _run_jobs(jobs, threads)


def scan_2d(model: ModelParams, forcing: ForcingParams, b_values, A_values, *,
            n_grid: tuple[int, int] = (64, 64), n_iter: int = 100,
            point_tol: float = POINT_TOL, threads: int = 1) -> list[dict]:
    """Census over the (b, A) grid, row-major in b then A."""
    jobs = [(model.with_updates(b=float(b)), forcing.with_updates(A=float(A)),
             n_grid, n_iter, point_tol)
            for b in b_values for A in A_values]
    return _run_jobs(jobs, threads)


def _run_jobs(jobs, threads: int) -> list[dict]:
    if threads <= 1 or len(jobs) <= 1:
        return [_scan_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_scan_cell, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
