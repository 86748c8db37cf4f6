"""Control laws and gain-condition checks.

The label-free law combines linear feedback on the agent's own state, a
two-state dynamic compensator driven by the position error, and the
repulsive term. A label-fixed baseline (same regulator on offset-shifted
coordinates, repulsion removed) is provided for comparisons; the original
scheme never fixes which agent ends up where.

Two gain conditions are checked:

* the fencing condition, necessary and sufficient for the closed-loop
  center dynamics to be Hurwitz:
      k4 - s1 k2 - k2^2 (k3 - s1 k1) / (k1 k2 - k4) > 0   and
      (k1 k2 - k4) / k2 > 0;
* the stronger rigid-formation condition ("C2"):
      k2 = k4 (k1 + s1 - 1) / k3   and   k1 - k3 + s1 - 1 > 0,
  under which the Lyapunov construction of the analysis module applies.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateGains
from .model import AgentState, Gains, Vec2

# The equality part of C2 is exact on paper; floating-point gain sets get a
# relative tolerance.
C2_EQUALITY_RTOL = 1e-9


@dataclass(frozen=True)
class GainReport:
    """Outcome of both gain checks for one (gains, s1) pair."""

    c2_equality_residual: float   # k2 - k4 (k1 + s1 - 1) / k3
    c2_inequality: float          # k1 - k3 + s1 - 1
    fencing_lhs1: float
    fencing_lhs2: float
    c2_holds: bool
    fencing_holds: bool


def control_input(agent: AgentState, eta: Vec2, g: Gains) -> Vec2:
    """u = -k1 x - k2 v - k3 eps - k4 zeta + k5 eta, per planar component."""
    return Vec2(
        -g.k1 * agent.x.x - g.k2 * agent.v.x - g.k3 * agent.eps.x - g.k4 * agent.zeta.x + g.k5 * eta.x,
        -g.k1 * agent.x.y - g.k2 * agent.v.y - g.k3 * agent.eps.y - g.k4 * agent.zeta.y + g.k5 * eta.y,
    )


def internal_model_derivative(agent: AgentState, x_d: Vec2, eta: Vec2,
                              s1: float, k5: float) -> tuple[Vec2, Vec2]:
    """Compensator dynamics: eps' = zeta, zeta' = s1 eps + (e - k5 eta).

    e = x - x_d is the position error; the repulsion enters here with the
    opposite sign of the control input, which is what makes a repelled
    rigid formation a steady state of the full loop.
    """
    deps = agent.zeta
    dzeta = Vec2(
        s1 * agent.eps.x + (agent.x.x - x_d.x) - k5 * eta.x,
        s1 * agent.eps.y + (agent.x.y - x_d.y) - k5 * eta.y,
    )
    return deps, dzeta


def check_c1(positions: list[Vec2], r: float) -> bool:
    """True iff all pairwise distances strictly exceed r (vacuous for one agent)."""
    n = len(positions)
    for i in range(n):
        for k in range(i + 1, n):
            if (positions[i] - positions[k]).norm() <= r:
                return False
    return True


def check_gains(g: Gains, s1: float) -> GainReport:
    """Evaluate the fencing and rigid-formation conditions for one gain set."""
    denom = g.k1 * g.k2 - g.k4
    if denom == 0.0:
        raise DegenerateGains(f"k1*k2 == k4 == {g.k4:g}; fencing condition undefined")
    expected_k2 = g.k4 * (g.k1 + s1 - 1.0) / g.k3
    residual = g.k2 - expected_k2
    inequality = g.k1 - g.k3 + s1 - 1.0
    lhs1 = g.k4 - s1 * g.k2 - g.k2 ** 2 * (g.k3 - s1 * g.k1) / denom
    lhs2 = denom / g.k2
    c2 = abs(residual) <= C2_EQUALITY_RTOL * max(1.0, abs(g.k2)) and inequality > 0.0
    return GainReport(
        c2_equality_residual=residual,
        c2_inequality=inequality,
        fencing_lhs1=lhs1,
        fencing_lhs2=lhs2,
        c2_holds=c2,
        fencing_holds=lhs1 > 0.0 and lhs2 > 0.0,
    )


def label_fixed_control(agent: AgentState, x_d: Vec2, d_des: Vec2, eta: Vec2,
                        s1: float, g: Gains) -> tuple[Vec2, tuple[Vec2, Vec2]]:
    """Baseline with a preassigned slot: regulate x - d_des, no repulsion.

    The eta argument is accepted for signature parity with the label-free
    law but is forced to zero; each agent simply tracks its own offset
    from the target.
    """
    shifted = AgentState(x=agent.x - d_des, v=agent.v, eps=agent.eps, zeta=agent.zeta)
    zero = Vec2(0.0, 0.0)
    u = control_input(shifted, zero, g)
    return u, internal_model_derivative(shifted, x_d, zero, s1, g.k5)
