"""Command-line entry point: experiment orchestration with manifest emission.

Subcommands: simulate | regions | fixed-points | curves | scan | certify.
Every run writes its artifacts plus a manifest (config echo, version,
per-artifact sha256) into the output directory.  Exit codes: 0 = success,
1 = configuration or I/O error, 2 = partial (per-item failures recorded in
the artifacts).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .census import scan_1d, scan_2d, census, summarize_census
from .certify import certify
from .continuation import (BifSystemId, NewtonFailure, ResidualSystem, codim2_points,
                           codim2_transition, find_fixed_point, seed_curve,
                           seed_tangent_from_transversal, trace_curve,
                           Z0_NS1, Z0_S1, Z1_NS1, Z1_NS2, Z1_S1, Z1_S2)
from .flow import FlowError, flow_with_events_batch
from .io import curves_gnuplot_script, file_sha256, write_csv, write_json, write_manifest
from .manifold import rasterize_regions, tangent_boundaries, transversal_boundaries
from .model import (ForcingParams, ModelParams, drive_at, published_params,
                    read_param_file)
from .presets import preset_config
from .strobo import StroboMap

_SYSTEMS: dict[str, BifSystemId] = {
    "Z0_NS1": Z0_NS1, "Z1_NS1": Z1_NS1, "Z1_NS2": Z1_NS2,
    "Z0_S1": Z0_S1, "Z1_S1": Z1_S1, "Z1_S2": Z1_S2,
}


class ConfigError(ValueError):
    pass


def _load_config(args) -> dict:
    config: dict = {}
    if args.preset:
        config = preset_config(args.preset)
        if config.pop("command") != args.command:
            raise ConfigError(
                f"preset {args.preset!r} belongs to the "
                f"'{preset_config(args.preset)['command']}' subcommand")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        config.update(user)
    if not config:
        raise ConfigError("no configuration: pass --preset and/or --config")
    return config


def _resolve_params(config: dict) -> tuple[ModelParams, ForcingParams]:
    if "params_file" in config:
        return read_param_file(config["params_file"])
    raw = config.get("params")
    if raw is None:
        raise ConfigError("config needs 'params' (10 keys) or 'params_file'")
    required = {"V0", "Vr", "Delta", "a", "b", "c", "tau_theta", "A", "T", "d"}
    missing = required - set(raw)
    if missing:
        raise ConfigError(f"params missing keys: {', '.join(sorted(missing))}")
    unknown = set(raw) - required
    if unknown:
        raise ConfigError(f"params has unknown keys: {', '.join(sorted(unknown))}")
    try:
        model = ModelParams(V0=raw["V0"], Vr=raw["Vr"], Delta=raw["Delta"], a=raw["a"],
                            b=raw["b"], c=raw["c"], tau_theta=raw["tau_theta"])
        forcing = ForcingParams(A=raw["A"], T=raw["T"], d=raw["d"])
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc
    return model, forcing


def _values(spec, *, what: str) -> np.ndarray:
    if isinstance(spec, (list, tuple)):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict):
        if "values" in spec:
            return np.asarray(spec["values"], dtype=float)
        try:
            lo, hi, n = spec["min"], spec["max"], int(spec["n"])
        except KeyError as exc:
            raise ConfigError(f"{what}: needs min/max/n or values") from exc
        if spec.get("spacing") == "log":
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)
    raise ConfigError(f"{what}: expected a list or a range spec")


# ---------------------------------------------------------------------------
# Subcommand runners.  Each returns (exit_code, artifacts).


def _run_simulate(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    if "t_end" in config:
        t_end = float(config["t_end"])
    else:
        t_end = float(config.get("periods", 4)) * forcing.T
    stride = float(config.get("stride", forcing.T / 200.0))
    system = StroboMap(model, forcing, rtol=tol).system

    times = [0.0]
    while times[-1] < t_end - 1e-12:
        times.append(min(times[-1] + stride, t_end))
    z = np.asarray(config.get("initial", model.equilibrium().as_array()), dtype=float)

    rows = [(0.0, z[0], z[1], float(drive_at(0.0, forcing)), 0)]
    spike_rows = []
    state = z[None, :].copy()
    t_prev = 0.0
    for t_next in times[1:]:
        state, counts, record, status = _advance(system, forcing, state, t_prev,
                                                 t_next, tol)
        if status[0] != 0:
            return 2, {"error": "integration failure mid-trajectory"}
        if record is not None and record.lane.size:
            for t_ev, pre, post in zip(record.t, record.y_pre, record.y_post):
                spike_rows.append((float(t_ev), float(pre[0]), float(pre[1]),
                                   float(post[0]), float(post[1])))
        t_prev = t_next
        spike_flag = 1 if int(counts[0]) > 0 else 0
        rows.append((t_next, float(state[0, 0]), float(state[0, 1]),
                     float(drive_at(t_next, forcing)), spike_flag))

    artifacts = {}
    artifacts["trajectory.csv"] = write_csv(
        out / "trajectory.csv", ["t", "V", "theta", "I", "spike_flag"], rows,
        comments=[f"driven trajectory, t_end={t_end!r}, stride={stride!r}"])
    artifacts["events.csv"] = write_csv(
        out / "events.csv", ["t", "V_pre", "theta_pre", "V_post", "theta_post"],
        spike_rows, comments=["threshold hits with applied resets"])
    return 0, artifacts


def _advance(system, forcing: ForcingParams, state, t_from: float, t_to: float,
             tol: float):
    """Integrate the driven system over an absolute-time window."""
    from .flow import EventSpec, integrate, threshold_event
    from .flow import OK as _OK

    segs = []
    # Build constant-drive segments of (t_from, t_to].
    k0 = int(np.floor(t_from / forcing.T))
    t = t_from
    guard = 0
    while t < t_to - 1e-13 and guard < 10000:
        k = int(np.floor((t + 1e-13) / forcing.T))
        on_end = k * forcing.T + forcing.on_time
        period_end = (k + 1) * forcing.T
        nxt = on_end if t < on_end - 1e-13 else period_end
        nxt = min(nxt, t_to)
        I = forcing.A if t < on_end - 1e-13 else 0.0
        segs.append((t, nxt, I))
        t = nxt
        guard += 1
    z = np.asarray(state, dtype=float).copy()
    total = np.zeros(z.shape[0], dtype=int)
    recs = []
    status = np.zeros(z.shape[0], dtype=int)
    for (a, b, I) in segs:
        def rhs(y, _I=I):
            return system.f(y, _I)

        spec = threshold_event(system, direction=1, action="map")
        res = integrate(rhs, z, b - a, rtol=tol, atol=1e-12, events=[spec],
                        t_offset=a, record=True)
        z = res.y
        total += res.n_events[:, 0]
        status = np.maximum(status, res.status)
        if res.events is not None and res.events.lane.size:
            recs.append(res.events)
    record = None
    if recs:
        from .flow import EventRecord

        record = EventRecord(lane=np.concatenate([r.lane for r in recs]),
                             spec=np.concatenate([r.spec for r in recs]),
                             t=np.concatenate([r.t for r in recs]),
                             y_pre=np.concatenate([r.y_pre for r in recs]),
                             y_post=np.concatenate([r.y_post for r in recs]))
    return z, total, record, status


def _run_regions(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    v_range = tuple(config.get("v_range", (model.Vr, model.Vr + 3.0)))
    th_range = tuple(config.get("theta_range", (0.6, 3.0)))
    nv = int(config.get("nv", 120))
    ntheta = int(config.get("ntheta", 120))
    n_max = int(config.get("n_max", 3))
    samples = int(config.get("samples", 512))

    artifacts = {}
    Vs, Ts, reg = rasterize_regions(model, forcing, v_range=v_range,
                                    theta_range=th_range, nv=nv, ntheta=ntheta,
                                    rtol=tol)
    rows = [(Vs[i], Ts[j], int(reg[j, i]))
            for j in range(ntheta) for i in range(nv)]
    artifacts["regions.csv"] = write_csv(
        out / "regions.csv", ["V", "theta", "region"], rows,
        comments=["spike-count region per grid cell; -1 = outside the domain"])

    polys = transversal_boundaries(model, forcing, n_max=n_max, samples=samples,
                                   rtol=tol)
    polys += tangent_boundaries(model, forcing, n_max=n_max, rtol=tol)
    for pl in polys:
        name = f"manifold_{pl.kind.lower()}_{pl.n}.csv"
        artifacts[name] = write_csv(
            out / name, ["kind", "n", "V", "theta"],
            [(pl.kind, pl.n, q[0], q[1]) for q in pl.points],
            comments=[f"switching boundary {pl.kind} index {pl.n}"])
    return 0, artifacts


def _run_fixed_points(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    points = config.get("points")
    if not points:
        raise ConfigError("fixed-points config needs a nonempty 'points' list")
    rows = []
    partial = False
    for item in points:
        region = int(item.get("region", 0))
        m = model.with_updates(b=float(item.get("b", model.b)), unsafe=True)
        f = forcing.with_updates(A=float(item.get("A", forcing.A)))
        guess = np.asarray(item.get("guess", m.equilibrium().as_array()), dtype=float)
        try:
            fp = find_fixed_point(region, m, f, guess)
        except (NewtonFailure, FlowError) as exc:
            partial = True
            rows.append((region, m.b, f.A, "", "", "", "", "", "", "", str(exc)))
            continue
        ev = fp.eigenvalues
        rows.append((region, m.b, f.A, fp.z.V, fp.z.theta, ev[0].real, ev[0].imag,
                     ev[1].real, ev[1].imag, int(fp.virtual), ""))
    artifacts = {"fixed_points.csv": write_csv(
        out / "fixed_points.csv",
        ["region", "b", "A", "V", "theta", "eig1_re", "eig1_im", "eig2_re",
         "eig2_im", "virtual", "error"],
        rows, comments=["fixed points of the stroboscopic map per branch"])}
    return (2 if partial else 0), artifacts


def _run_curves(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    systems = config.get("systems")
    if not systems:
        raise ConfigError("curves config needs a nonempty 'systems' list")
    step = float(config.get("step", 1e-3))
    max_points = int(config.get("max_points", 700))

    artifacts = {}
    traced: dict[str, tuple[ResidualSystem, list]] = {}
    partial = False
    csv_names = []
    for item in systems:
        sid_name = item.get("id")
        if sid_name not in _SYSTEMS:
            raise ConfigError(f"unknown system id {sid_name!r}; "
                              f"known: {', '.join(sorted(_SYSTEMS))}")
        sid = _SYSTEMS[sid_name]
        m = model.with_updates(b=float(item.get("seed_b", model.b)), unsafe=True)
        rs = ResidualSystem(sid, m, forcing)
        try:
            if "seed_w" in item:
                w0 = np.asarray(item["seed_w"], dtype=float)
            elif "seed_from" in item:
                src = item["seed_from"]
                if src not in traced:
                    raise ConfigError(
                        f"{sid_name} seeds from {src!r}, which must be traced first")
                w0 = seed_tangent_from_transversal(sid, traced[src][1],
                                                   _SYSTEMS[src], m, forcing)
            else:
                a_lo, a_hi = item.get("seed_A_range", (0.05, 200.0))
                w0 = seed_curve(sid, m, forcing, A_range=(float(a_lo), float(a_hi)))
            box = np.tile([[-np.inf, np.inf]], (sid.n_unknowns, 1))
            box[-2] = item.get("box_b", (0.0, 1.0))
            box[-1] = item.get("box_A", (0.01, 400.0))
            pts = trace_curve(rs, w0, step=step, box=box, max_points=max_points,
                              orient=_orientation(sid))
            pts_rev = trace_curve(rs, w0, step=step, box=box,
                                  max_points=max_points, orient=-_orientation(sid))
            allpts = list(reversed(pts_rev[1:])) + pts
        except (NewtonFailure, FlowError) as exc:
            partial = True
            artifacts[f"curve_{sid_name}.error.txt"] = _write_error(
                out / f"curve_{sid_name}.error.txt", str(exc))
            continue
        traced[sid_name] = (rs, allpts)
        labels = list(sid.labels)
        cols = ["system_id", "b", "A"] + labels[:-2] + ["residual_norm", "fold_flag"]
        rows = [tuple([sid_name, q.w[-2], q.w[-1]] + [q.w[i] for i in range(len(labels) - 2)]
                      + [q.residual_norm, int(q.fold_flag)]) for q in allpts]
        name = f"curve_{sid_name}.csv"
        csv_names.append(name)
        artifacts[name] = write_csv(out / name, cols, rows,
                                    comments=[f"border-collision curve {sid_name}"])

    c2_rows = []
    for pair in config.get("codim2", []):
        a, b = pair
        if a not in traced or b not in traced:
            continue
        rs_a, pts_a = traced[a]
        rs_b, pts_b = traced[b]
        try:
            if rs_a.sys_id.kind == "NS" and rs_b.sys_id.kind == "S" \
                    and (rs_a.sys_id.n, rs_a.sys_id.side) == (rs_b.sys_id.n,
                                                              rs_b.sys_id.side):
                # smooth/nonsmooth transition: a corner, not a crossing
                pts = [codim2_transition(rs_a, pts_a, rs_b)]
            else:
                pts = codim2_points(pts_a, pts_b, rs_a, rs_b)
        except (NewtonFailure, FlowError):
            partial = True
            continue
        for q in pts:
            c2_rows.append((a, b, q.b, q.A, q.residual))
    artifacts["codim2.csv"] = write_csv(
        out / "codim2.csv", ["system_a", "system_b", "b", "A", "residual"],
        c2_rows, comments=["codimension-two points (joint residual refinement)"])

    script = curves_gnuplot_script(csv_names, title="border-collision curves",
                                   codim2_csv="codim2.csv" if c2_rows else None)
    (out / "curves.plt").write_text(script)
    artifacts["curves.plt"] = file_sha256(out / "curves.plt")
    return (2 if partial else 0), artifacts


def _orientation(sid: BifSystemId) -> np.ndarray:
    v = np.zeros(sid.n_unknowns)
    v[-2] = 1.0  # start toward increasing b
    return v


def _write_error(path: Path, message: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(message + "\n")
    return file_sha256(path)


def _run_scan(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    mode = config.get("mode", "1d")
    n_grid = tuple(config.get("n_grid", (64, 64)))
    n_iter = int(config.get("n_iter", 100))
    A_values = _values(config.get("A_values"), what="A_values")
    if mode == "2d":
        b_values = _values(config.get("b_values"), what="b_values")
        results = scan_2d(model, forcing, b_values, A_values, n_grid=n_grid,
                          n_iter=n_iter, threads=threads)
    elif mode == "1d":
        results = scan_1d(model, forcing, A_values, n_grid=n_grid, n_iter=n_iter,
                          threads=threads)
    else:
        raise ConfigError(f"scan mode must be '1d' or '2d', got {mode!r}")

    rows = []
    partial = False
    artifacts = {}
    for i, res in enumerate(results):
        if res.get("failed"):
            partial = True
        periods = ";".join(str(o["period"]) for o in res["orbits"])
        rots = ";".join(o["rotation"] for o in res["orbits"])
        maxi = ";".join("1" if o["maximin"] else "0" if o["maximin"] is not None
                        else "-" for o in res["orbits"])
        rows.append((res["b"], res["A"], res["n_orbits"], periods, rots, maxi,
                     int(res["coexistence"]), int(bool(res.get("failed")))))
        artifacts[f"details/point_{i:04d}.json"] = write_json(
            out / "details" / f"point_{i:04d}.json", res)
    artifacts["scan.csv"] = write_csv(
        out / "scan.csv",
        ["b", "A", "n_orbits", "periods", "rotation_numbers", "maximin_flags",
         "coexistence", "failed"],
        rows, comments=[f"orbit census scan ({mode})"])
    return (2 if partial else 0), artifacts


def _run_certify(config, out: Path, threads: int, tol: float):
    model, forcing = _resolve_params(config)
    cases = list(config.get("cases", []))
    if "sweep" in config:
        for A in _values(config["sweep"], what="sweep"):
            cases.append({"A": float(A)})
    if not cases:
        raise ConfigError("certify config needs 'cases' or 'sweep'")
    rows = []
    partial = False
    artifacts = {}
    for i, case in enumerate(cases):
        f = forcing.with_updates(A=float(case.get("A", forcing.A)))
        m = model.with_updates(b=float(case.get("b", model.b)), unsafe=True)
        rep = census(m, f)
        target = [o for o in rep.orbits if o.itinerary is not None]
        if not target:
            partial = True
            rows.append((m.b, f.A, "", "", 0, 0, 0, "no-orbit"))
            artifacts[f"reports/case_{i:02d}.json"] = write_json(
                out / "reports" / f"case_{i:02d}.json",
                {"b": m.b, "A": f.A, "verdict": "no-orbit",
                 "census_failed": rep.failed, "messages": rep.messages})
            continue
        orb = max(target, key=lambda o: o.period)
        report = certify(m, f, orb)
        rows.append((m.b, f.A, orb.period, str(orb.itinerary),
                     int(report.cond_i), int(report.cond_ii), int(report.cond_iii),
                     report.verdict))
        payload = report.as_dict()
        payload.update({"b": m.b, "A": f.A})
        artifacts[f"reports/case_{i:02d}.json"] = write_json(
            out / "reports" / f"case_{i:02d}.json", payload)
    artifacts["certify.csv"] = write_csv(
        out / "certify.csv",
        ["b", "A", "period", "itinerary", "cond_i", "cond_ii", "cond_iii", "verdict"],
        rows, comments=["quasi-contraction certification (semi-rigorous)"])
    return (2 if partial else 0), artifacts


_RUNNERS = {
    "simulate": _run_simulate,
    "regions": _run_regions,
    "fixed-points": _run_fixed_points,
    "curves": _run_curves,
    "scan": _run_scan,
    "certify": _run_certify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grazelab",
        description="Stroboscopic-map analysis of a pulse-driven threshold system")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--preset", help="named preset configuration")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker processes for scans (default: GRAZELAB_THREADS "
                             "or all cores)")
        sp.add_argument("--tol", type=float, default=1e-10,
                        help="integration tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    threads = args.threads
    if threads is None:
        env = os.environ.get("GRAZELAB_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    try:
        config = _load_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        code, artifacts = _RUNNERS[args.command](config, out, threads, args.tol)
    except (ConfigError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_manifest(out, command=args.command, config=config, artifacts=artifacts,
                   started=started, version=__version__)
    print(f"{args.command}: {len(artifacts)} artifacts in {out}"
          + (" (partial failures recorded)" if code == 2 else ""))
    return code


if __name__ == "__main__":
    sys.exit(main())
