"""Domain types, target motion, and the repulsive interaction.

Positions and velocities are planar and dimensionless. Each agent carries,
next to its physical state, a two-dimensional oscillator pair (eps, zeta)
that lets it track the target's velocity from position measurements alone.
The target is autonomous: x_d'' = s1 * x_d with s1 <= 0, so its state
propagates in closed form and never needs numerical integration.

Matrices that act identically on both planar coordinates are kept in
"base" (pre-Kronecker) scalar form throughout the package; every entry
implicitly multiplies the 2x2 identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BelowSafeDistance, SingularObservation

# |sin(w*t)| below this means the position row of the transition matrix
# cannot be inverted to recover the initial velocity.
SIN_SINGULAR_TOL = 1e-9


@dataclass(frozen=True)
class Vec2:
    """Planar vector with finite components."""

    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 components must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def from_array(cls, arr) -> "Vec2":
        return cls(float(arr[0]), float(arr[1]))

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True)
class AgentState:
    """One agent's full state.

    The stacking order [x; v; eps; zeta] is fixed; the analysis module
    relies on it when forming 8-dimensional quadratic forms.
    """

    x: Vec2
    v: Vec2
    eps: Vec2
    zeta: Vec2

    def stacked(self) -> np.ndarray:
        return np.array([self.x.x, self.x.y, self.v.x, self.v.y,
                         self.eps.x, self.eps.y, self.zeta.x, self.zeta.y])

    @classmethod
    def from_stacked(cls, arr) -> "AgentState":
        return cls(Vec2(arr[0], arr[1]), Vec2(arr[2], arr[3]),
                   Vec2(arr[4], arr[5]), Vec2(arr[6], arr[7]))

    @classmethod
    def at_rest(cls, x: Vec2) -> "AgentState":
        return cls(x=x, v=ZERO, eps=ZERO, zeta=ZERO)


@dataclass(frozen=True)
class TargetState:
    """Target position/velocity together with its dynamics parameter s1 <= 0."""

    x_d: Vec2
    v_d: Vec2
    s1: float

    def __post_init__(self):
        object.__setattr__(self, "s1", float(self.s1))
        if not math.isfinite(self.s1) or self.s1 > 0:
            raise ValueError(f"s1 must be finite and <= 0, got {self.s1}")

    def sigma(self) -> np.ndarray:
        """Stacked [x_d; v_d] as a length-4 array."""
        return np.array([self.x_d.x, self.x_d.y, self.v_d.x, self.v_d.y])


@dataclass(frozen=True)
class PotentialParams:
    """Safe distance r and sensing radius R, with 0 < r < R."""

    r: float
    R: float

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "R", float(self.R))
        if not (0.0 < self.r < self.R):
            raise ValueError(f"require 0 < r < R, got r={self.r}, R={self.R}")


@dataclass(frozen=True)
class Gains:
    """The five controller gains, all strictly positive."""

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "k4", "k5"):
            val = float(getattr(self, name))
            object.__setattr__(self, name, val)
            if not (math.isfinite(val) and val > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {val}")


def exosystem_transition(s1: float, t: float) -> np.ndarray:
    """Base 2x2 transition matrix of the target dynamics over time t.

    For s1 = 0 the target moves at constant velocity and the matrix is
    [[1, t], [0, 1]]. For s1 < 0 it oscillates at w = sqrt(-s1):
    [[cos(wt), sin(wt)/w], [-w sin(wt), cos(wt)]]. Each entry multiplies
    the 2x2 identity when applied to planar states.
    """
    if s1 > 0:
        raise ValueError(f"s1 must be <= 0, got {s1}")
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    if s1 == 0.0:
        return np.array([[1.0, t], [0.0, 1.0]])
    w = math.sqrt(-s1)
    c, s = math.cos(w * t), math.sin(w * t)
    return np.array([[c, s / w], [-w * s, c]])


def target_state_at(x_d0: Vec2, v_d0: Vec2, s1: float, t: float) -> tuple[Vec2, Vec2]:
    """Propagate the target exactly: no numerical integration involved."""
    phi = exosystem_transition(s1, t)
    x0, v0 = x_d0.as_array(), v_d0.as_array()
    return (Vec2.from_array(phi[0, 0] * x0 + phi[0, 1] * v0),
            Vec2.from_array(phi[1, 0] * x0 + phi[1, 1] * v0))


def recover_initial_velocity(x_d0: Vec2, x_d_t: Vec2, t: float, s1: float) -> Vec2:
    """Invert the position row of the transition matrix for v_d(0).

    Raises SingularObservation when t <= 0, or when s1 < 0 and
    |sin(w*t)| < 1e-9 (the observation instant lands on a half period).
    """
    if s1 > 0:
        raise ValueError(f"s1 must be <= 0, got {s1}")
    if t <= 0:
        raise SingularObservation(f"t must be > 0, got {t}")
    x0, xt = x_d0.as_array(), x_d_t.as_array()
    if s1 == 0.0:
        return Vec2.from_array((xt - x0) / t)
    w = math.sqrt(-s1)
    s = math.sin(w * t)
    if abs(s) < SIN_SINGULAR_TOL:
        raise SingularObservation(
            f"|sin(w t)| = {abs(s):.3g} < {SIN_SINGULAR_TOL:g} at t={t:g}")
    return Vec2.from_array(w * (xt - math.cos(w * t) * x0) / s)


def alpha(s: float, pp: PotentialParams) -> float:
    """Repulsive gain: 1/(s-r) - 1/(R-r) on (r, R], zero beyond R.

    Diverges as s -> r+ and is left undefined for s <= r: that region is
    unreachable under a valid start, so hitting it raises instead of
    clamping.
    """
    if s <= pp.r:
        raise BelowSafeDistance(s, pp.r)
    if s > pp.R:
        return 0.0
    return 1.0 / (s - pp.r) - 1.0 / (pp.R - pp.r)


def alpha_integral(d: float, pp: PotentialParams) -> float:
    """Integral of alpha from d up to R, in closed form.

    Equals ln((R-r)/(d-r)) - (R-d)/(R-r) on (r, R] and zero for d >= R.
    Nonnegative and strictly decreasing in d on (r, R).
    """
    if d <= pp.r:
        raise BelowSafeDistance(d, pp.r)
    if d >= pp.R:
        return 0.0
    span = pp.R - pp.r
    return math.log(span / (d - pp.r)) - (pp.R - d) / span


def neighbors(i: int, positions: list[Vec2], R: float) -> set[int]:
    """Indices within sensing radius R of agent i (boundary included)."""
    if not 0 <= i < len(positions):
        raise IndexError(f"agent index {i} out of range for {len(positions)} agents")
    xi = positions[i]
    return {k for k, xk in enumerate(positions)
            if k != i and (xi - xk).norm() <= R}


def repulsion(i: int, positions: list[Vec2], pp: PotentialParams) -> Vec2:
    """Net repulsive direction for agent i: sum of alpha-weighted unit vectors.

    Each detected neighbor k contributes alpha(|x_i - x_k|) times the unit
    vector from k towards i, so the result points away from nearby agents
    and the contributions of a pair cancel exactly in the global sum.
    """
    xi = positions[i]
    ex = ey = 0.0
    for k in neighbors(i, positions, pp.R):
        d = xi - positions[k]
        dist = d.norm()
        a = alpha(dist, pp)
        ex += a * d.x / dist
        ey += a * d.y / dist
    return Vec2(ex, ey)
