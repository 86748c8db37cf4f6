"""Figure rendering for fencing-simulation trajectory CSVs.

Reads only the documented trajectory CSV contract (column ``t``; per-agent
``x<i>, y<i>, vx<i>, vy<i>, ex<i>, ey<i>, zx<i>, zy<i>`` with 1-based agent
numbers; target ``xd, yd, vdx, vdy``; derived ``ebar_x, ebar_y, hull_dist,
min_dist, v1``). Empty cells (dropped-out agents, unlogged Lyapunov values)
become NaN and leave gaps in the curves.

Rendering is deterministic: a fixed SVG hash salt and stripped date
metadata make repeated renders of the same input byte-identical.
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 (backend must be set first)
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "fence-plots"

KINDS = ("trajectories", "fencing_error", "pairwise_distances",
         "velocity_errors", "comparison")

AGENT_FIELDS = ("x", "y", "vx", "vy", "ex", "ey", "zx", "zy")
FIXED_COLUMNS = ("t", "xd", "yd", "vdx", "vdy", "ebar_x", "ebar_y",
                 "hull_dist", "min_dist", "v1")

SAFE_LINE_GID = "safe-distance-line"


class SchemaError(Exception):
    """The input CSV does not match the documented trajectory schema."""


@dataclass(frozen=True)
class PlotSpec:
    """What to draw: input log(s), output image path, figure kind."""

    inputs: tuple[str, ...]
    output: str
    kind: str
    safe_distance: float = 2.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}; choose from {KINDS}")
        need = 2 if self.kind == "comparison" else 1
        if len(self.inputs) != need:
            raise ValueError(
                f"kind {self.kind!r} needs {need} input CSV(s), got {len(self.inputs)}")


@dataclass
class TrajectoryData:
    """Column-wise view of one trajectory CSV."""

    n_agents: int
    t: np.ndarray
    agents: dict[str, np.ndarray]   # "x1" -> column, etc.
    fixed: dict[str, np.ndarray]    # xd, yd, ..., v1
    label: str = field(default="")

    def agent(self, i: int, fld: str) -> np.ndarray:
        return self.agents[f"{fld}{i}"]


def load_trajectory(path, label="") -> TrajectoryData:
    """Parse a trajectory CSV, validating the schema."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise SchemaError(f"{path} is empty")
    header = lines[0].split(",")
    if len(lines) < 2:
        raise SchemaError(f"{path} has a header but no data rows")

    agent_numbers = sorted({int(m.group(1)) for col in header
                            if (m := re.fullmatch(r"x(\d+)", col))})
    if not agent_numbers:
        raise SchemaError(f"{path}: no agent position columns (x1, x2, ...)")
    n = len(agent_numbers)
    if agent_numbers != list(range(1, n + 1)):
        raise SchemaError(f"{path}: agent numbers not contiguous: {agent_numbers}")
    expected = list(FIXED_COLUMNS[:1]) + \
        [f"{fld}{i}" for i in range(1, n + 1) for fld in AGENT_FIELDS] + \
        list(FIXED_COLUMNS[1:])
    missing = [c for c in expected if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")

    idx = {col: j for j, col in enumerate(header)}
    rows = []
    for ln in lines[1:]:
        fields = ln.split(",")
        if len(fields) != len(header):
            raise SchemaError(f"{path}: row with {len(fields)} fields, "
                              f"expected {len(header)}")
        rows.append([math.nan if f == "" else float(f) for f in fields])
    data = np.array(rows)

    agents = {f"{fld}{i}": data[:, idx[f"{fld}{i}"]]
              for i in range(1, n + 1) for fld in AGENT_FIELDS}
    fixed = {c: data[:, idx[c]] for c in FIXED_COLUMNS}
    return TrajectoryData(n_agents=n, t=fixed["t"], agents=agents, fixed=fixed,
                          label=label or path.stem)


def _pair_distances(td: TrajectoryData):
    for i in range(1, td.n_agents + 1):
        for k in range(i + 1, td.n_agents + 1):
            d = np.hypot(td.agent(i, "x") - td.agent(k, "x"),
                         td.agent(i, "y") - td.agent(k, "y"))
            yield (i, k), d


def _fig_trajectories(td: TrajectoryData):
    fig, ax = plt.subplots(figsize=(6.4, 6.4))
    for i in range(1, td.n_agents + 1):
        x, y = td.agent(i, "x"), td.agent(i, "y")
        line, = ax.plot(x, y, lw=1.0, label=f"agent {i}")
        ax.plot(x[0], y[0], "o", ms=6, mfc="none", color=line.get_color())
        alive = ~np.isnan(x)
        if alive.any():
            last = np.nonzero(alive)[0][-1]
            ax.plot(x[last], y[last], "o", ms=6, color=line.get_color())
    ax.plot(td.fixed["xd"], td.fixed["yd"], "r--", lw=1.2, label="target")
    ax.plot(td.fixed["xd"][-1], td.fixed["yd"][-1], "gs", ms=8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    ax.set_title("agent and target trajectories")
    return fig


def _fig_fencing_error(td: TrajectoryData):
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    ex, ey = td.fixed["ebar_x"], td.fixed["ebar_y"]
    ax.plot(td.t, ex, lw=0.9, label=r"$\bar{e}_x$")
    ax.plot(td.t, ey, lw=0.9, label=r"$\bar{e}_y$")
    ax.plot(td.t, np.hypot(ex, ey), "k", lw=1.3, label=r"$\|\bar{e}\|$")
    ax.set_xlabel("t")
    ax.set_ylabel("fencing error")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("fencing error of the agent center")
    return fig


def _fig_pairwise_distances(td: TrajectoryData, safe_distance):
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for (i, k), d in _pair_distances(td):
        ax.plot(td.t, d, lw=0.9, label=f"$\\|x_{{{i}}}-x_{{{k}}}\\|$")
    ref = ax.axhline(safe_distance, color="red", ls="--", lw=1.2,
                     label=f"safe distance r = {safe_distance:g}")
    ref.set_gid(SAFE_LINE_GID)
    ax.set_xlabel("t")
    ax.set_ylabel("pairwise distance")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    ax.set_title("inter-agent distances")
    return fig


def _fig_velocity_errors(td: TrajectoryData):
    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for i in range(1, td.n_agents + 1):
        verr = np.hypot(td.agent(i, "vx") - td.fixed["vdx"],
                        td.agent(i, "vy") - td.fixed["vdy"])
        ax.plot(td.t, verr, lw=0.9, label=f"$\\|v_{{{i}}}-v_d\\|$")
    ax.set_xlabel("t")
    ax.set_ylabel("velocity error")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("agent velocity errors")
    return fig


def _fig_comparison(td_a: TrajectoryData, td_b: TrajectoryData):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.2, 7.0), sharex=True)
    for td, style in ((td_a, "-"), (td_b, "--")):
        err = np.hypot(td.fixed["ebar_x"], td.fixed["ebar_y"])
        ax1.plot(td.t, err, style, lw=1.2, label=td.label)
    ax1.set_ylabel(r"$\|\bar{e}\|$")
    ax1.grid(alpha=0.3)
    ax1.legend(fontsize=8)
    ax1.set_title("fencing error")
    for td, style in ((td_a, "-"), (td_b, "--")):
        for (i, k), d in _pair_distances(td):
            ax2.plot(td.t, d, style, lw=0.7,
                     label=f"{td.label} {i}-{k}")
    ax2.set_xlabel("t")
    ax2.set_ylabel("pairwise distance")
    ax2.grid(alpha=0.3)
    ax2.legend(fontsize=6, ncol=3)
    ax2.set_title("inter-agent distances")
    return fig


def plot(spec: PlotSpec) -> Path:
    """Render the requested figure; returns the written path."""
    labels = ("label_free", "label_fixed") if spec.kind == "comparison" else ("",)
    data = [load_trajectory(p, label)
            for p, label in zip(spec.inputs, labels)]
    if spec.kind == "trajectories":
        fig = _fig_trajectories(data[0])
    elif spec.kind == "fencing_error":
        fig = _fig_fencing_error(data[0])
    elif spec.kind == "pairwise_distances":
        fig = _fig_pairwise_distances(data[0], spec.safe_distance)
    elif spec.kind == "velocity_errors":
        fig = _fig_velocity_errors(data[0])
    else:
        fig = _fig_comparison(data[0], data[1])
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        if out.suffix.lower() == ".svg":
            # no date stamp: repeated renders must be byte-identical
            fig.savefig(out, format="svg", metadata={"Date": None})
        else:
            fig.savefig(out, dpi=150)
    finally:
        plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fence-plots",
        description="Render figures from fencing-simulation trajectory CSVs.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("inputs", nargs="+",
                        help="trajectory CSV (two for 'comparison')")
    parser.add_argument("-o", "--output", required=True,
                        help="output image path (.svg or .png)")
    parser.add_argument("--safe-distance", type=float, default=2.0,
                        help="reference line for pairwise-distance plots")
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec(inputs=tuple(args.inputs), output=args.output,
                        kind=args.kind, safe_distance=args.safe_distance)
        path = plot(spec)
    except (SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
