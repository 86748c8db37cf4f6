"""Configuration parsing, subcommand dispatch, and CSV persistence.

The configuration format is a flat, hand-editable key-value file::

    # paper-style fencing scenario
    n = 4
    s1 = -0.1
    k1 = 2.2
    ...
    offsets = -7,-7; 7,-7; 7,7; -7,7

Keys are case-sensitive (`r` and `R` are different parameters). Unknown
keys are an error. Agent numbering in configs and CSV headers is 1-based,
matching the usual "agent 4 breaks down" phrasing.

Exit codes are a stable contract: 0 success, 2 validation, 3 collision,
4 divergence, 5 parse error.

``FENCE_SIM_LOG_STRIDE`` in the environment overrides the configured log
stride.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .controller import check_gains
from .errors import (C2Violated, CollisionDetected, DegenerateGains,
                     DegenerateRouthTable, Diverged, FenceSimError, ParseError,
                     ValidationError)
from .model import Gains, PotentialParams, TargetState, AgentState, Vec2
from .simulator import (LABEL_FIXED, LABEL_FREE, MetricsReport, Scenario,
                        TrajectoryLog, metrics, random_scenario, run)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_COLLISION = 3
EXIT_DIVERGENCE = 4
EXIT_PARSE = 5

DEFAULT_SEED = 4
DEFAULT_SQUARE_OFFSETS = (Vec2(-7.0, -7.0), Vec2(7.0, -7.0),
                          Vec2(7.0, 7.0), Vec2(-7.0, 7.0))

_FLOAT_KEYS = {"s1", "k1", "k2", "k3", "k4", "k5", "r", "R", "dt", "t_end",
               "dropout_time"}
_INT_KEYS = {"n", "seed", "log_stride", "dropout_agent"}
_PAIR_KEYS = {"xd0", "vd0"}
_PAIR_LIST_KEYS = {"offsets", "positions"}
_STR_KEYS = {"controller", "out"}
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _PAIR_KEYS | _PAIR_LIST_KEYS | _STR_KEYS

_DEFAULTS = {
    "n": 4, "s1": -0.1,
    "k1": 2.2, "k2": 6.0, "k3": 0.1, "k4": 3.0, "k5": 20.0,
    "r": 2.0, "R": 10.0, "dt": 0.01, "t_end": 200.0,
    "controller": LABEL_FREE, "seed": DEFAULT_SEED, "out": ".",
    "xd0": (2.0, 8.0), "vd0": (0.5, 0.5), "log_stride": 10,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: a Scenario recipe plus output location."""

    n: int
    gains: Gains
    potential: PotentialParams
    target0: TargetState
    dt: float
    t_end: float
    dropout: tuple[int, float] | None
    controller_kind: str
    offsets: tuple[Vec2, ...] | None
    positions: tuple[Vec2, ...] | None
    seed: int
    log_stride: int
    out: str


def _parse_pair(text, line):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ParseError(f"expected 'x,y', got {text!r}", line)
    try:
        return (float(parts[0]), float(parts[1]))
    except ValueError as exc:
        raise ParseError(f"bad number in pair {text!r}: {exc}", line) from exc


def parse_config(path) -> RunConfig:
    """Parse a flat key-value configuration file into a RunConfig.

    Documented keys: n, s1, k1..k5, r, R, dt, t_end, dropout_agent (1-based),
    dropout_time, controller (label_free | label_fixed), offsets, positions,
    seed, out, xd0, vd0, log_stride. Anything else is a ParseError; invariant
    violations (r >= R, C1 failures from explicit positions, ...) are
    ValidationErrors.
    """
    path = Path(path)
    raw: dict[str, object] = {}
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    for lineno, rawline in enumerate(lines, start=1):
        text = rawline.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ParseError(f"expected 'key = value', got {rawline.strip()!r}", lineno)
        key, _, value = text.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KNOWN_KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            if key in _FLOAT_KEYS:
                raw[key] = float(value)
            elif key in _INT_KEYS:
                raw[key] = int(value)
            elif key in _PAIR_KEYS:
                raw[key] = _parse_pair(value, lineno)
            elif key in _PAIR_LIST_KEYS:
                pairs = [p for p in (chunk.strip() for chunk in value.split(";")) if p]
                raw[key] = tuple(_parse_pair(p, lineno) for p in pairs)
            else:
                raw[key] = value
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", lineno) from exc

    cfg = dict(_DEFAULTS)
    cfg.update(raw)

    env_stride = os.environ.get("FENCE_SIM_LOG_STRIDE")
    if env_stride is not None:
        try:
            cfg["log_stride"] = int(env_stride)
        except ValueError as exc:
            raise ValidationError(
                f"FENCE_SIM_LOG_STRIDE must be an integer, got {env_stride!r}") from exc

    if cfg["controller"] not in (LABEL_FREE, LABEL_FIXED):
        raise ValidationError(
            f"controller must be {LABEL_FREE} or {LABEL_FIXED}, got {cfg['controller']!r}")

    has_agent = "dropout_agent" in raw
    has_time = "dropout_time" in raw
    if has_agent != has_time:
        raise ValidationError("dropout_agent and dropout_time must be given together")
    dropout = None
    if has_agent:
        idx = cfg["dropout_agent"]
        if not 1 <= idx <= cfg["n"]:
            raise ValidationError(
                f"dropout_agent must be in 1..{cfg['n']}, got {idx}")
        dropout = (idx - 1, cfg["dropout_time"])

    try:
        gains = Gains(cfg["k1"], cfg["k2"], cfg["k3"], cfg["k4"], cfg["k5"])
        potential = PotentialParams(r=cfg["r"], R=cfg["R"])
        target0 = TargetState(Vec2(*cfg["xd0"]), Vec2(*cfg["vd0"]), cfg["s1"])
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    offsets = None
    if "offsets" in raw:
        offsets = tuple(Vec2(*p) for p in raw["offsets"])
        if len(offsets) != cfg["n"]:
            raise ValidationError(
                f"offsets has {len(offsets)} entries, expected n={cfg['n']}")
    positions = None
    if "positions" in raw:
        positions = tuple(Vec2(*p) for p in raw["positions"])
        if len(positions) != cfg["n"]:
            raise ValidationError(
                f"positions has {len(positions)} entries, expected n={cfg['n']}")

    return RunConfig(
        n=cfg["n"], gains=gains, potential=potential, target0=target0,
        dt=cfg["dt"], t_end=cfg["t_end"], dropout=dropout,
        controller_kind=cfg["controller"], offsets=offsets, positions=positions,
        seed=cfg["seed"], log_stride=cfg["log_stride"], out=cfg["out"],
    )


def build_scenario(config: RunConfig, controller_kind: str | None = None) -> Scenario:
    """Materialize the scenario: explicit positions if given, else seeded starts."""
    kind = controller_kind if controller_kind is not None else config.controller_kind
    offsets = config.offsets
    if kind == LABEL_FIXED and offsets is None:
        if config.n == len(DEFAULT_SQUARE_OFFSETS):
            offsets = DEFAULT_SQUARE_OFFSETS
        else:
            raise ValidationError(
                f"label_fixed with n={config.n} needs an explicit offsets key")
    if config.positions is not None:
        agents = tuple(AgentState.at_rest(p) for p in config.positions)
        return Scenario(n=config.n, initial_agents=agents, target0=config.target0,
                        gains=config.gains, potential=config.potential,
                        dt=config.dt, t_end=config.t_end, dropout=config.dropout,
                        controller_kind=kind, offsets=offsets,
                        log_stride=config.log_stride)
    return random_scenario(seed=config.seed, n=config.n, gains=config.gains,
                           potential=config.potential, target0=config.target0,
                           dt=config.dt, t_end=config.t_end, dropout=config.dropout,
                           controller_kind=kind, offsets=offsets,
                           log_stride=config.log_stride)


# ---------------------------------------------------------------------------
# CSV persistence


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def trajectory_header(n: int) -> list[str]:
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"x{i}", f"y{i}", f"vx{i}", f"vy{i}",
                 f"ex{i}", f"ey{i}", f"zx{i}", f"zy{i}"]
    cols += ["xd", "yd", "vdx", "vdy", "ebar_x", "ebar_y",
             "hull_dist", "min_dist", "v1"]
    return cols


def write_trajectory_csv(log: TrajectoryLog, path) -> None:
    n = log.scenario.n
    with open(path, "w") as fh:
        fh.write(",".join(trajectory_header(n)) + "\n")
        for ti, t in enumerate(log.times):
            row = [_fmt(t)]
            for i in range(n):
                st = log.agents[ti][i]
                if st is None:
                    row += [""] * 8
                else:
                    row += [_fmt(v) for v in st.stacked()]
            tgt = log.target[ti]
            ebar = log.fencing_error[ti]
            row += [_fmt(tgt.x_d.x), _fmt(tgt.x_d.y), _fmt(tgt.v_d.x), _fmt(tgt.v_d.y),
                    _fmt(ebar.x), _fmt(ebar.y),
                    _fmt(log.hull_distance[ti]), _fmt(log.min_pairwise_distance[ti]),
                    _fmt(log.lyapunov_v1[ti])]
            fh.write(",".join(row) + "\n")


def read_trajectory_csv(path) -> tuple[list[str], list[list[float | None]]]:
    """Read a trajectory CSV back; empty fields become None, floats are exact."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines:
        raise ParseError(f"empty trajectory CSV {path}")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        if not line:
            continue
        rows.append([None if f == "" else float(f) for f in line.split(",")])
    return header, rows


METRICS_FIELDS = ["fencing_converged_at", "velocity_converged_at",
                  "min_distance_overall", "collision",
                  "hull_contains_target_from", "peak_pairwise_oscillation"]


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(METRICS_FIELDS) + "\n")
        fh.write(",".join([
            _fmt(report.fencing_converged_at),
            _fmt(report.velocity_converged_at),
            _fmt(report.min_distance_overall),
            "true" if report.collision else "false",
            _fmt(report.hull_contains_target_from),
            _fmt(report.peak_pairwise_oscillation),
        ]) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def subcommand_run(config: RunConfig) -> int:
    """Simulate, then write trajectory.csv and metrics.csv to the out dir."""
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        scenario = build_scenario(config)
    except (ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        log = run(scenario)
    except CollisionDetected as exc:
        if exc.log is not None and exc.log.times:
            write_trajectory_csv(exc.log, outdir / "trajectory.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    except Diverged as exc:
        if exc.log is not None and exc.log.times:
            write_trajectory_csv(exc.log, outdir / "trajectory.csv")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    report = metrics(log)
    write_trajectory_csv(log, outdir / "trajectory.csv")
    write_metrics_csv(report, outdir / "metrics.csv")
    for name, value in zip(METRICS_FIELDS, [
            report.fencing_converged_at, report.velocity_converged_at,
            report.min_distance_overall, report.collision,
            report.hull_contains_target_from, report.peak_pairwise_oscillation]):
        print(f"{name}={value}")
    if report.collision:
        print("error: minimum pairwise distance fell to the safe distance",
              file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def subcommand_check_gains(config: RunConfig) -> int:
    """Print the gain report one field per line; exit 0 iff fencing holds."""
    try:
        report = check_gains(config.gains, config.target0.s1)
    except DegenerateGains as exc:
        print(f"error: DegenerateGains: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"c2_equality_residual={_fmt(report.c2_equality_residual)}")
    print(f"c2_inequality={_fmt(report.c2_inequality)}")
    print(f"fencing_lhs1={_fmt(report.fencing_lhs1)}")
    print(f"fencing_lhs2={_fmt(report.fencing_lhs2)}")
    print(f"c2_holds={'true' if report.c2_holds else 'false'}")
    print(f"fencing_holds={'true' if report.fencing_holds else 'false'}")
    return EXIT_OK if report.fencing_holds else EXIT_VALIDATION


def _fmt_matrix(M) -> str:
    return "[" + "; ".join(",".join(repr(float(v)) for v in row) for row in np.asarray(M)) + "]"


def subcommand_verify(config: RunConfig) -> int:
    """Print the full stability/regulator/Lyapunov report."""
    s1 = config.target0.s1
    g = config.gains
    print(f"gains=k1:{g.k1!r},k2:{g.k2!r},k3:{g.k3!r},k4:{g.k4!r},k5:{g.k5!r}")
    print(f"s1={s1!r}")
    try:
        report = check_gains(g, s1)
    except DegenerateGains as exc:
        print(f"error: DegenerateGains: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"c2_equality_residual={_fmt(report.c2_equality_residual)}")
    print(f"c2_inequality={_fmt(report.c2_inequality)}")
    print(f"fencing_lhs1={_fmt(report.fencing_lhs1)}")
    print(f"fencing_lhs2={_fmt(report.fencing_lhs2)}")
    print(f"c2_holds={'true' if report.c2_holds else 'false'}")
    print(f"fencing_holds={'true' if report.fencing_holds else 'false'}")
    m = analysis.build_closed_loop(g, s1)
    coeffs = analysis.characteristic_polynomial(m)
    print("characteristic_polynomial=" + ",".join(repr(c) for c in coeffs))
    try:
        hurwitz = analysis.routh_hurwitz(coeffs)
        print(f"hurwitz={'true' if hurwitz else 'false'}")
    except DegenerateRouthTable as exc:
        eigs = np.linalg.eigvals(m.A_c)
        hurwitz = bool(eigs.real.max() < 0.0)
        print(f"hurwitz={'true' if hurwitz else 'false'} (routh inconclusive: {exc}; "
              "eigenvalue fallback)")
    if not hurwitz:
        print("regulator=skipped (closed loop not Hurwitz)", file=sys.stderr)
        return EXIT_VALIDATION
    reg = analysis.solve_regulator_equation(m)
    print(f"sylvester_residual={reg.sylvester_residual!r}")
    print(f"output_residual={reg.output_residual!r}")
    print("X_c=" + _fmt_matrix(reg.X_c))
    try:
        lyap = analysis.build_P(g, s1)
        print("P=" + _fmt_matrix(lyap.P))
        print(f"gamma={lyap.gamma!r}")
        pd = analysis.is_positive_definite(lyap.P)
        print(f"P_positive_definite={'true' if pd else 'false'}")
        if not pd:
            return EXIT_VALIDATION
    except C2Violated as exc:
        print(f"P=unavailable ({exc})")
    return EXIT_OK


def compare_logs(log_a: TrajectoryLog, log_b: TrajectoryLog) -> dict:
    """Summary statistics contrasting two runs of the same initial conditions."""
    ma = metrics(log_a)
    mb = metrics(log_b)
    ratio = None
    if ma.peak_pairwise_oscillation > 0.0:
        ratio = mb.peak_pairwise_oscillation / ma.peak_pairwise_oscillation
    diff = None
    if ma.fencing_converged_at is not None and mb.fencing_converged_at is not None:
        diff = mb.fencing_converged_at - ma.fencing_converged_at
    return {
        "peak_pairwise_oscillation_free": ma.peak_pairwise_oscillation,
        "peak_pairwise_oscillation_fixed": mb.peak_pairwise_oscillation,
        "oscillation_ratio": ratio,
        "fencing_converged_at_free": ma.fencing_converged_at,
        "fencing_converged_at_fixed": mb.fencing_converged_at,
        "fencing_convergence_time_difference": diff,
        "min_distance_free": ma.min_distance_overall,
        "min_distance_fixed": mb.min_distance_overall,
        "collision_free": ma.collision,
        "collision_fixed": mb.collision,
        "hull_contains_target_from_free": ma.hull_contains_target_from,
        "hull_contains_target_from_fixed": mb.hull_contains_target_from,
    }


def subcommand_compare(config: RunConfig) -> int:
    """Run the same starts under both controllers and summarize the contrast."""
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        free = build_scenario(config, controller_kind=LABEL_FREE)
        fixed = build_scenario(config, controller_kind=LABEL_FIXED)
    except (ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logs = {}
    for name, scenario in (("label_free", free), ("label_fixed", fixed)):
        try:
            logs[name] = run(scenario)
        except (CollisionDetected, Diverged) as exc:
            if exc.log is not None and exc.log.times:
                write_trajectory_csv(exc.log, outdir / f"{name}.csv")
            print(f"error in {name} run: {exc}", file=sys.stderr)
            return EXIT_COLLISION if isinstance(exc, CollisionDetected) else EXIT_DIVERGENCE
        except ValidationError as exc:
            print(f"validation error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        write_trajectory_csv(logs[name], outdir / f"{name}.csv")
    summary = compare_logs(logs["label_free"], logs["label_fixed"])
    with open(outdir / "comparison.csv", "w") as fh:
        fh.write("metric,value\n")
        for key, value in summary.items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = _fmt(value)
            fh.write(f"{key},{text}\n")
    for key, value in summary.items():
        print(f"{key}={value}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fence-sim",
        description="Label-free moving-target fencing: simulate, check gains, "
                    "verify stability, compare against a label-fixed baseline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "check-gains", "verify", "compare"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a flat key=value config file")
        p.add_argument("--out", help="output directory (overrides the config)")
    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out is not None:
        config = replace(config, out=args.out)
    dispatch = {
        "run": subcommand_run,
        "check-gains": subcommand_check_gains,
        "verify": subcommand_verify,
        "compare": subcommand_compare,
    }
    try:
        return dispatch[args.command](config)
    except FenceSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
