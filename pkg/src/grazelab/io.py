"""Deterministic artifact emission: CSV, JSON, run manifests, plot scripts.

All writers format floats with ``repr`` (exact round-trip) and write
atomically; running the same computation twice yields byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

__all__ = [
    "format_value",
    "write_csv",
    "write_json",
    "file_sha256",
    "write_manifest",
    "curves_gnuplot_script",
]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, columns, rows, *, comments=()) -> str:
    """Write a CSV with '#'-prefixed header comments; returns its sha256."""
    path = Path(path)
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")
    return file_sha256(path)


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def write_json(path, obj) -> str:
    path = Path(path)
    _atomic_write(path, json.dumps(obj, indent=1, sort_keys=True,
                                   default=_json_default) + "\n")
    return file_sha256(path)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_manifest(out_dir, *, command: str, config: dict, artifacts: dict[str, str],
                   started: float, version: str) -> Path:
    """Run manifest: config echo, version, wall time, per-artifact checksums.

    The wall time varies between runs; the artifact checksums are what the
    determinism contract compares.
    """
    manifest = {
        "command": command,
        "version": version,
        "config": config,
        "artifacts": dict(sorted(artifacts.items())),
        "wall_time_s": round(time.time() - started, 3),
    }
    path = Path(out_dir) / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True,
                                   default=_json_default) + "\n")
    return path


def curves_gnuplot_script(csv_names: list[str], *, title: str,
                          codim2_csv: str | None = None) -> str:
    """Gnuplot script plotting bifurcation curves in the (b, log A) layout."""
    lines = [
        "set datafile separator ','",
        "set xlabel 'b'",
        "set ylabel 'A'",
        "set logscale y",
        f"set title '{title}'",
        "set key outside",
    ]
    plots = [f"'{name}' using 'b':'A' with lines title '{name.rsplit('.', 1)[0]}'"
             for name in csv_names]
    if codim2_csv is not None:
        plots.append(f"'{codim2_csv}' using 'b':'A' with points pt 7 ps 1.5 title 'codim-2'")
    lines.append("plot \\\n  " + ", \\\n  ".join(plots))
    lines.append("pause -1 'press enter'")
    return "\n".join(lines) + "\n"
