"""Fixed-step integration of the coupled agent/compensator/target system.

The world state is a flat float64 vector: eight entries per agent in the
order (x, y, vx, vy, ex, ey, zx, zy) followed by four target entries
(xd, yd, vdx, vdy). Integration is classical fourth-order Runge-Kutta at
a fixed step.

A run is bit-deterministic, and exactly equivariant under relabeling of
the agents: internally the agents are processed in a canonical order
(sorted by initial position), so permuting the scenario's agent list
permutes the returned log without changing a single bit elsewhere.

Dropout removes the agent from the state vector and every neighbor set at
the nearest step boundary; no ghost obstacle remains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .controller import check_c1, check_gains
from .errors import (BelowSafeDistance, CollisionDetected, Diverged,
                     ValidationError)
from .geometry import convex_hull, distance_to_hull
from .model import AgentState, Gains, PotentialParams, TargetState, Vec2

DIVERGENCE_GUARD = 1e9
# transient onset for oscillation metrics: ignore the first second
TRANSIENT_ONSET = 1.0

LABEL_FREE = "label_free"
LABEL_FIXED = "label_fixed"


@dataclass(frozen=True)
class Scenario:
    """A complete, validated simulation setup."""

    n: int
    initial_agents: tuple[AgentState, ...]
    target0: TargetState
    gains: Gains
    potential: PotentialParams
    dt: float = 0.01
    t_end: float = 200.0
    dropout: tuple[int, float] | None = None
    controller_kind: str = LABEL_FREE
    offsets: tuple[Vec2, ...] | None = None
    log_stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "initial_agents", tuple(self.initial_agents))
        if self.offsets is not None:
            object.__setattr__(self, "offsets", tuple(self.offsets))
        if self.n < 1 or len(self.initial_agents) != self.n:
            raise ValidationError(
                f"n={self.n} but {len(self.initial_agents)} initial agents given")
        if not (self.dt > 0.0):
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if not (self.t_end > 0.0):
            raise ValidationError(f"t_end must be > 0, got {self.t_end}")
        if self.log_stride < 1:
            raise ValidationError(f"log_stride must be >= 1, got {self.log_stride}")
        if self.controller_kind not in (LABEL_FREE, LABEL_FIXED):
            raise ValidationError(f"unknown controller kind {self.controller_kind!r}")
        if self.controller_kind == LABEL_FIXED:
            if self.offsets is None or len(self.offsets) != self.n:
                raise ValidationError(
                    "label_fixed controller needs exactly one offset per agent")
        if self.dropout is not None:
            idx, t_drop = self.dropout
            if not 0 <= idx < self.n:
                raise ValidationError(f"dropout agent index {idx} out of range")
            if not (0.0 < t_drop < self.t_end):
                raise ValidationError(
                    f"dropout time {t_drop} outside (0, {self.t_end})")
            if self.n == 1:
                raise ValidationError("cannot drop the only agent")
        positions = [a.x for a in self.initial_agents]
        if not check_c1(positions, self.potential.r):
            raise ValidationError(
                f"initial positions violate C1: some pairwise distance <= r={self.potential.r}")


@dataclass
class TrajectoryLog:
    """Time-indexed record of the full run.

    Per-agent lists keep one slot per original agent index for the whole
    run; entries are None once the agent has dropped out.
    """

    scenario: Scenario
    times: list[float] = field(default_factory=list)
    agents: list[list[AgentState | None]] = field(default_factory=list)
    target: list[TargetState] = field(default_factory=list)
    fencing_error: list[Vec2] = field(default_factory=list)
    hull_distance: list[float] = field(default_factory=list)
    min_pairwise_distance: list[float] = field(default_factory=list)
    velocity_errors: list[list[float | None]] = field(default_factory=list)
    lyapunov_v1: list[float | None] = field(default_factory=list)


@dataclass(frozen=True)
class Thresholds:
    """Convergence thresholds used by the metrics extraction."""

    fencing: float = 0.05
    velocity: float = 0.05
    transient_onset: float = TRANSIENT_ONSET


@dataclass(frozen=True)
class MetricsReport:
    fencing_converged_at: float | None
    velocity_converged_at: float | None
    min_distance_overall: float
    collision: bool
    hull_contains_target_from: float | None
    peak_pairwise_oscillation: float


def world_derivative(agents: list[AgentState], target: TargetState,
                     scenario: Scenario) -> np.ndarray:
    """Stacked derivative of the full world state (agents then target).

    Pure function of the given states; raises BelowSafeDistance when a
    label-free pair is at or below the safe distance.
    """
    y = np.empty(8 * len(agents) + 4)
    for i, agent in enumerate(agents):
        y[8 * i:8 * i + 8] = agent.stacked()
    y[-4:] = target.sigma()
    offsets = None
    if scenario.controller_kind == LABEL_FIXED:
        offsets = np.array([[o.x, o.y] for o in scenario.offsets[:len(agents)]])
    f = _make_derivative(len(agents), scenario.gains, scenario.potential,
                         target.s1, scenario.controller_kind, offsets)
    return f(y)


def _make_derivative(n, gains, pp, s1, kind, offsets):
    """Closure computing the flat-state derivative for a fixed roster size."""
    k1, k2, k3, k4, k5 = gains.k1, gains.k2, gains.k3, gains.k4, gains.k5
    r, R = pp.r, pp.R
    inv_span = 1.0 / (R - r)
    label_free = kind == LABEL_FREE

    diag = np.arange(n)

    def deriv(y):
        ag = y[:8 * n].reshape(n, 8)
        pos = ag[:, 0:2]
        vel = ag[:, 2:4]
        eps = ag[:, 4:6]
        zet = ag[:, 6:8]
        xd = y[8 * n:8 * n + 2]
        if label_free and n > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            dist[diag, diag] = np.inf
            dmin = dist.min()
            if dmin <= r:
                raise BelowSafeDistance(dmin, r)
            w = np.where(dist <= R, 1.0 / (dist - r) - inv_span, 0.0)
            eta = np.einsum("ij,ijk->ik", w / dist, diff)
            epos = pos
        else:
            eta = np.zeros_like(pos)
            epos = pos - offsets if offsets is not None else pos
        out = np.empty_like(y)
        o = out[:8 * n].reshape(n, 8)
        o[:, 0:2] = vel
        o[:, 2:4] = -k1 * epos - k2 * vel - k3 * eps - k4 * zet + k5 * eta
        o[:, 4:6] = zet
        o[:, 6:8] = s1 * eps + (epos - xd) - k5 * eta
        out[8 * n:8 * n + 2] = y[8 * n + 2:8 * n + 4]
        out[8 * n + 2:8 * n + 4] = s1 * xd
        return out

    return deriv


def rk4_step(state: np.ndarray, dt: float, derivative) -> np.ndarray:
    """One classical Runge-Kutta step; deterministic, 4th-order accurate."""
    if not (dt > 0.0):
        raise ValueError(f"dt must be > 0, got {dt}")
    k1 = derivative(state)
    k2 = derivative(state + (0.5 * dt) * k1)
    k3 = derivative(state + (0.5 * dt) * k2)
    k4 = derivative(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _pairwise_min(pos: np.ndarray) -> float:
    if len(pos) < 2:
        return math.inf
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff * diff).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min())


def run(scenario: Scenario) -> TrajectoryLog:
    """Integrate a scenario from 0 to t_end, logging every log_stride steps.

    Gains must at least satisfy the fencing condition; a warning is issued
    when the rigid-formation condition additionally fails. The Lyapunov
    value is logged only when that condition holds (the construction is
    valid only then).
    """
    report = check_gains(scenario.gains, scenario.target0.s1)
    if not report.fencing_holds:
        raise ValidationError(
            f"gains fail the fencing condition (lhs1={report.fencing_lhs1:.6g}, "
            f"lhs2={report.fencing_lhs2:.6g})")
    if not report.c2_holds:
        warnings.warn(
            "gains satisfy the fencing condition but not the rigid-formation "
            "condition; collision avoidance and velocity matching are not certified",
            stacklevel=2)

    reg = lyap = None
    P8 = Xc8 = None
    if report.c2_holds:
        reg = analysis.solve_regulator_equation(
            analysis.build_closed_loop(scenario.gains, scenario.target0.s1))
        lyap = analysis.build_P(scenario.gains, scenario.target0.s1)
        # expanded once here; the per-snapshot evaluation below computes the
        # same quantity as analysis.lyapunov_value
        P8 = np.kron(lyap.P, np.eye(2))
        Xc8 = np.kron(reg.X_c, np.eye(2))

    n = scenario.n
    # canonical internal order: sorted by initial position. C1 guarantees
    # distinct positions, so the order is well defined and identical for
    # any relabeling of the same agent set.
    order = sorted(range(n), key=lambda i: (scenario.initial_agents[i].x.x,
                                            scenario.initial_agents[i].x.y))
    canon_to_orig = list(order)

    y = np.empty(8 * n + 4)
    for slot, orig in enumerate(canon_to_orig):
        y[8 * slot:8 * slot + 8] = scenario.initial_agents[orig].stacked()
    y[-4:] = scenario.target0.sigma()

    offsets = None
    if scenario.controller_kind == LABEL_FIXED:
        offsets = np.array([[scenario.offsets[orig].x, scenario.offsets[orig].y]
                            for orig in canon_to_orig])

    s1 = scenario.target0.s1
    f = _make_derivative(len(canon_to_orig), scenario.gains, scenario.potential,
                         s1, scenario.controller_kind, offsets)

    steps = round(scenario.t_end / scenario.dt)
    drop_step = -1
    if scenario.dropout is not None:
        drop_step = round(scenario.dropout[1] / scenario.dt)

    log = TrajectoryLog(scenario=scenario)

    r_pp, R_pp = scenario.potential.r, scenario.potential.R
    span = R_pp - r_pp

    def snapshot(t, y):
        m = len(canon_to_orig)
        ag = y[:8 * m].reshape(m, 8)
        pos = ag[:, 0:2]
        xd = y[8 * m:8 * m + 2]
        vd = y[8 * m + 2:8 * m + 4]
        states: list[AgentState | None] = [None] * n
        verrs: list[float | None] = [None] * n
        for slot, orig in enumerate(canon_to_orig):
            states[orig] = AgentState.from_stacked(ag[slot])
            verrs[orig] = float(np.hypot(ag[slot, 2] - vd[0], ag[slot, 3] - vd[1]))
        tgt = TargetState(Vec2(xd[0], xd[1]), Vec2(vd[0], vd[1]), s1)
        ebar = Vec2(float(pos[:, 0].mean() - xd[0]), float(pos[:, 1].mean() - xd[1]))
        hull = convex_hull([Vec2(p[0], p[1]) for p in pos])
        v1 = None
        if reg is not None:
            phi = ag - Xc8 @ y[8 * m:]
            v1 = float(np.einsum("ij,jk,ik->", phi, P8, phi))
            if m > 1:
                diff = pos[:, None, :] - pos[None, :, :]
                dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
                dist[np.arange(m), np.arange(m)] = np.inf
                near = dist < R_pp
                if near.any():
                    d = dist[near]
                    v1 += lyap.gamma * scenario.gains.k5 * float(
                        (np.log(span / (d - r_pp)) - (R_pp - d) / span).sum())
        log.times.append(t)
        log.agents.append(states)
        log.target.append(tgt)
        log.fencing_error.append(ebar)
        log.hull_distance.append(distance_to_hull(tgt.x_d, hull))
        log.min_pairwise_distance.append(_pairwise_min(pos))
        log.velocity_errors.append(verrs)
        log.lyapunov_v1.append(v1)

    for step in range(steps + 1):
        t = step * scenario.dt
        if step % scenario.log_stride == 0 or step == steps:
            snapshot(t, y)
        if step == drop_step:
            m = len(canon_to_orig)
            ag = y[:8 * m].reshape(m, 8)
            slot = canon_to_orig.index(scenario.dropout[0])
            keep = [s for s in range(m) if s != slot]
            y = np.concatenate([ag[keep].ravel(), y[-4:]])
            canon_to_orig.pop(slot)
            if offsets is not None:
                offsets = offsets[keep]
            f = _make_derivative(len(canon_to_orig), scenario.gains,
                                 scenario.potential, s1,
                                 scenario.controller_kind, offsets)
        if step == steps:
            break
        try:
            y = rk4_step(y, scenario.dt, f)
        except BelowSafeDistance as exc:
            raise CollisionDetected(t, log) from exc
        if np.abs(y).max() > DIVERGENCE_GUARD:
            raise Diverged(t + scenario.dt, log)

    # the final state is logged but never derivative-evaluated, so check it
    m = len(canon_to_orig)
    if scenario.controller_kind == LABEL_FREE and \
            _pairwise_min(y[:8 * m].reshape(m, 8)[:, 0:2]) <= scenario.potential.r:
        raise CollisionDetected(scenario.t_end, log)
    return log


def metrics(log: TrajectoryLog, thresholds: Thresholds = Thresholds()) -> MetricsReport:
    """Extract convergence, safety, and oscillation metrics from a log."""
    if not log.times:
        raise ValueError("cannot compute metrics of an empty log")
    times = log.times
    n_t = len(times)
    r = log.scenario.potential.r

    ebar_norm = [e.norm() for e in log.fencing_error]
    vmax = []
    for verrs in log.velocity_errors:
        alive = [v for v in verrs if v is not None]
        vmax.append(max(alive) if alive else 0.0)

    def converged_at(series, threshold):
        # first time the value drops below threshold and stays below
        idx = None
        for i in range(n_t - 1, -1, -1):
            if series[i] >= threshold:
                break
            idx = i
        return times[idx] if idx is not None else None

    def zero_from(series):
        idx = None
        for i in range(n_t - 1, -1, -1):
            if series[i] != 0.0:
                break
            idx = i
        return times[idx] if idx is not None else None

    min_overall = min(log.min_pairwise_distance)

    # peak oscillation of each pairwise distance after the transient onset
    peak = 0.0
    n = log.scenario.n
    for i in range(n):
        for k in range(i + 1, n):
            lo = hi = None
            for ti in range(n_t):
                if times[ti] <= thresholds.transient_onset:
                    continue
                a = log.agents[ti][i]
                b = log.agents[ti][k]
                if a is None or b is None:
                    continue
                d = (a.x - b.x).norm()
                lo = d if lo is None else min(lo, d)
                hi = d if hi is None else max(hi, d)
            if lo is not None:
                peak = max(peak, hi - lo)

    return MetricsReport(
        fencing_converged_at=converged_at(ebar_norm, thresholds.fencing),
        velocity_converged_at=converged_at(vmax, thresholds.velocity),
        min_distance_overall=min_overall,
        collision=min_overall <= r,
        hull_contains_target_from=zero_from(log.hull_distance),
        peak_pairwise_oscillation=peak,
    )


def random_scenario(seed: int, n: int, gains: Gains, potential: PotentialParams,
                    target0: TargetState, dt: float = 0.01, t_end: float = 200.0,
                    dropout: tuple[int, float] | None = None,
                    controller_kind: str = LABEL_FREE,
                    offsets: tuple[Vec2, ...] | None = None,
                    log_stride: int = 10) -> Scenario:
    """Scenario with seeded random starts: positions uniform in [-20, 20]^2,
    rejection-sampled so every pairwise distance exceeds 3r (C1 with a 2r
    margin), zero initial velocities and compensator states.
    """
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < n:
        attempts += 1
        if attempts > 10000:
            raise ValidationError(
                f"could not place {n} agents with spacing > {3 * potential.r:g}")
        p = rng.uniform(-20.0, 20.0, 2)
        if all(np.hypot(*(p - q)) > 3.0 * potential.r for q in pts):
            pts.append(p)
    agents = tuple(AgentState.at_rest(Vec2(p[0], p[1])) for p in pts)
    return Scenario(n=n, initial_agents=agents, target0=target0, gains=gains,
                    potential=potential, dt=dt, t_end=t_end, dropout=dropout,
                    controller_kind=controller_kind, offsets=offsets,
                    log_stride=log_stride)
