"""Deterministic file output: CSV trajectories, event logs, JSON reports, SVG charts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .controller import SimResult


def fmt(v: float) -> str:
    return "%.17g" % v


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv(header: list[str], rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def trajectory_rows(sim: SimResult) -> tuple[list[str], list[list[str]]]:
    """Columns t, x0.., u0.., event_flag; a jump contributes its left limit first (flag 0)."""
    traj = sim.trajectory
    n = traj.dim
    m = len(sim.initial_input)
    header = ["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)] + ["event_flag"]
    rows = []
    prev_u = np.zeros(m)
    for i, t in enumerate(traj.times):
        u = sim.inputs[i]
        if traj.is_jump(i):
            rows.append([fmt(t)] + [fmt(v) for v in traj.left_value(i)] + [fmt(v) for v in prev_u] + ["0"])
        rows.append([fmt(t)] + [fmt(v) for v in traj.right_value(i)] + [fmt(v) for v in u]
                    + [str(sim.flags[i])])
        prev_u = u
    return header, rows


def trajectory_csv(sim: SimResult) -> str:
    return _csv(*trajectory_rows(sim))


def events_csv(sim: SimResult) -> str:
    n = sim.trajectory.dim
    m = len(sim.initial_input)
    header = (["t", "kind"] + [f"x_before{i}" for i in range(n)] + [f"x_after{i}" for i in range(n)]
              + [f"u_after{j}" for j in range(m)])
    rows = [[fmt(r.time), r.kind] + [fmt(v) for v in r.state_before] + [fmt(v) for v in r.state_after]
            + [fmt(v) for v in r.input_after] for r in sim.events]
    return _csv(header, rows)


def table_csv(header: list[str], rows: list[list]) -> str:
    def cell(v):
        return fmt(v) if isinstance(v, float) else str(v)

    return _csv(header, [[cell(v) for v in row] for row in rows])


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def svg_chart(sim: SimResult, width: int = 640, height: int = 320, title: str = "") -> str:
    """Self-contained line chart of x0(t) with event markers."""
    t_all, x_all = sim.trajectory.window(sim.trajectory.t_min, sim.trajectory.t_max)
    y = np.array([float(x[0]) for x in x_all])
    pad = 40
    t_lo, t_hi = float(t_all[0]), float(t_all[-1])
    y_lo, y_hi = float(min(y.min(), 0.0)), float(max(y.max(), 0.0))
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(t):
        return pad + (t - t_lo) / (t_hi - t_lo) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    pts = " ".join(f"{px(t):.2f},{py(v):.2f}" for t, v in zip(t_all, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad}" y1="{py(0):.2f}" x2="{width - pad}" y2="{py(0):.2f}" stroke="#999"/>',
    ]
    for r in sim.events:
        color = "#c00" if r.kind.startswith("impulse") else "#090"
        parts.append(f'<line x1="{px(r.time):.2f}" y1="{height - pad}" x2="{px(r.time):.2f}" '
                     f'y2="{height - pad - 8}" stroke="{color}"/>')
    parts.append(f'<polyline fill="none" stroke="#c00" stroke-width="1" points="{pts}"/>')
    parts.append(f'<text x="{pad}" y="{pad - 12}" font-size="12" font-family="sans-serif">{title}</text>')
    parts.append(f'<text x="{pad}" y="{height - 10}" font-size="10" font-family="sans-serif">'
                 f't in [{t_lo:.6g}, {t_hi:.6g}], x in [{y_lo:.4g}, {y_hi:.4g}]</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
