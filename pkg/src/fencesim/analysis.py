"""Closed-loop stability and Lyapunov machinery, verified numerically.

Everything here works on the "base" scalar forms of the block matrices
(each entry multiplying the 2x2 identity): the planar expansion merely
duplicates every eigenvalue, so 4x4 arithmetic decides stability, the
regulator equation has 8 unknowns, and only the quadratic-form
evaluations along trajectories expand to 8x8.

The pipeline certifies, for a given gain set:

1. the closed-loop center matrix A_c and its characteristic polynomial
   lambda^4 + k2 lambda^3 + (k1-s1) lambda^2 + (k4-s1 k2) lambda + (k3-s1 k1);
2. Hurwitz stability via the Routh table (cross-checkable against
   eigenvalues);
3. the unique solution X_c of the regulator equation
   X_c S = A_c X_c + B_c,  0 = C_c X_c + D, by dense vectorization;
4. a positive-definite P with the special sparsity that turns the
   candidate V1 = sum_i Phi_tilde_i' P Phi_tilde_i + gamma k5 V_p into a
   function whose derivative is -sum_i (2 p4 / k4) |k2 v_tilde_i +
   k4 zeta_tilde_i|^2 under the rigid-formation gain condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import check_gains
from .errors import (C2Violated, DegenerateRouthTable, NotHurwitz, NotSymmetric,
                     SingularSystem)
from .model import AgentState, Gains, PotentialParams, TargetState, alpha_integral, neighbors

RESIDUAL_TOL = 1e-9
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class ClosedLoopMatrices:
    """Base-form matrices of the augmented center dynamics."""

    A_c: np.ndarray   # 4x4
    B_c: np.ndarray   # 4x2
    C_c: np.ndarray   # 1x4
    D: np.ndarray     # 1x2
    S: np.ndarray     # 2x2


@dataclass(frozen=True)
class RegulatorSolution:
    """Solution X_c of the regulator equation plus its residuals."""

    X_c: np.ndarray           # 4x2
    sylvester_residual: float
    output_residual: float


@dataclass(frozen=True)
class LyapunovData:
    """Base-form P, its positivity margin gamma = p2 - p4, and the p_i."""

    P: np.ndarray             # 4x4
    gamma: float
    p: tuple[float, float, float, float, float, float, float]


def build_closed_loop(g: Gains, s1: float) -> ClosedLoopMatrices:
    """Assemble A_c, B_c, C_c, D and the target matrix S in base form."""
    A_c = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-g.k1, -g.k2, -g.k3, -g.k4],
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, s1, 0.0],
    ])
    B_c = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]])
    C_c = np.array([[1.0, 0.0, 0.0, 0.0]])
    D = np.array([[-1.0, 0.0]])
    S = np.array([[0.0, 1.0], [s1, 0.0]])
    return ClosedLoopMatrices(A_c=A_c, B_c=B_c, C_c=C_c, D=D, S=S)


def characteristic_polynomial(m: ClosedLoopMatrices) -> list[float]:
    """Monic degree-4 coefficients of det(lambda I - A_c), from the closed form."""
    k1 = float(-m.A_c[1, 0])
    k2 = float(-m.A_c[1, 1])
    k3 = float(-m.A_c[1, 2])
    k4 = float(-m.A_c[1, 3])
    s1 = float(m.A_c[3, 2])
    return [1.0, k2, k1 - s1, k4 - s1 * k2, k3 - s1 * k1]


def routh_hurwitz(coeffs) -> bool:
    """Routh test for a monic degree-4 polynomial [1, a, b, c, d].

    True iff every first-column table entry is strictly positive. An
    exactly zero entry is decided by the epsilon continuation where that
    still fixes the verdict (a zero pivot over a positive constant term
    forces a sign change for either sign of the true pivot); when the zero
    is the quantity that would decide the verdict, the test is reported as
    inconclusive via DegenerateRouthTable instead of guessed (callers may
    fall back to an eigenvalue test).
    """
    coeffs = [float(c) for c in coeffs]
    if len(coeffs) != 5 or coeffs[0] != 1.0:
        raise ValueError(f"expected monic degree-4 coefficients, got {coeffs}")
    _, a, b, c, d = coeffs
    if a == 0.0:
        raise DegenerateRouthTable("zero pivot in lambda^3 row")
    b1 = (a * b - c) / a
    if b1 == 0.0:
        if a < 0.0 or d != 0.0:
            return False
        raise DegenerateRouthTable(
            "zero lambda^2 pivot with zero constant coefficient")
    c1 = (b1 * c - a * d) / b1
    if c1 == 0.0:
        if a > 0.0 and b1 > 0.0 and d > 0.0:
            raise DegenerateRouthTable("zero lambda^1 entry decides the verdict")
        return False
    if d == 0.0:
        if a > 0.0 and b1 > 0.0 and c1 > 0.0:
            raise DegenerateRouthTable("zero constant term decides the verdict")
        return False
    return a > 0.0 and b1 > 0.0 and c1 > 0.0 and d > 0.0


def solve_regulator_equation(m: ClosedLoopMatrices) -> RegulatorSolution:
    """Solve X_c S = A_c X_c + B_c with 0 = C_c X_c + D by vectorization.

    A_c must be Hurwitz; S has purely imaginary (or zero) eigenvalues, so
    the spectra are disjoint and the 8x8 linear system
    (I (x) A_c - S' (x) I) vec(X_c) = -vec(B_c) is nonsingular.
    """
    eigs = np.linalg.eigvals(m.A_c)
    if eigs.real.max() >= 0.0:
        raise NotHurwitz(f"max Re(eig A_c) = {eigs.real.max():.6g} >= 0")
    lhs = np.kron(np.eye(2), m.A_c) - np.kron(m.S.T, np.eye(4))
    try:
        vec = np.linalg.solve(lhs, -m.B_c.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"vectorized regulator system is singular: {exc}") from exc
    X_c = vec.reshape((4, 2), order="F")
    sylv = float(np.linalg.norm(X_c @ m.S - m.A_c @ X_c - m.B_c))
    out = float(np.linalg.norm(m.C_c @ X_c + m.D))
    if sylv >= RESIDUAL_TOL or out >= RESIDUAL_TOL:
        raise SingularSystem(
            f"regulator residuals too large: sylvester={sylv:.3g}, output={out:.3g}")
    return RegulatorSolution(X_c=X_c, sylvester_residual=sylv, output_residual=out)


def build_P(g: Gains, s1: float, p4: float = 1.0) -> LyapunovData:
    """Construct the base-form P and gamma = p2 - p4 for the candidate V1.

    Requires the rigid-formation inequality k1 + s1 - 1 - k3 > 0 (which
    makes gamma positive and P positive definite); p4 is a free positive
    scale, every conclusion is homogeneous in it.
    """
    if not (p4 > 0.0):
        raise ValueError(f"p4 must be > 0, got {p4}")
    if g.k1 + s1 - 1.0 - g.k3 <= 0.0:
        raise C2Violated(
            f"k1 + s1 - 1 - k3 = {g.k1 + s1 - 1.0 - g.k3:.6g} <= 0; "
            "P is not guaranteed positive definite")
    p1 = (g.k1 ** 2 + (s1 - 1.0) * g.k1 - g.k3) / g.k3 * p4
    p2 = (g.k1 + s1 - 1.0) / g.k3 * p4
    p3 = (g.k3 - s1) * p4
    p5 = 0.0
    p6 = 0.0
    p7 = (g.k1 - 1.0) * p4
    P = np.array([
        [p1, p6, p7, p6],
        [p6, p2, p5, p4],
        [p7, p5, p3, p5],
        [p6, p4, p5, p4],
    ])
    return LyapunovData(P=P, gamma=p2 - p4, p=(p1, p2, p3, p4, p5, p6, p7))


def is_positive_definite(M: np.ndarray) -> bool:
    """Sylvester's criterion: all leading principal minors positive."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if np.abs(M - M.T).max() > SYMMETRY_TOL:
        raise NotSymmetric(f"asymmetry {np.abs(M - M.T).max():.3g} > {SYMMETRY_TOL:g}")
    for k in range(1, M.shape[0] + 1):
        if np.linalg.det(M[:k, :k]) <= 0.0:
            return False
    return True


def _potential_sum(agents: list[AgentState], pp: PotentialParams) -> float:
    """Double sum of the repulsion integral over all sensing pairs."""
    positions = [a.x for a in agents]
    total = 0.0
    for i in range(len(agents)):
        for k in neighbors(i, positions, pp.R):
            total += alpha_integral((positions[i] - positions[k]).norm(), pp)
    return total


def lyapunov_value(agents: list[AgentState], target: TargetState,
                   reg: RegulatorSolution, lyap: LyapunovData,
                   k5: float, pp: PotentialParams) -> float:
    """V1 = sum_i Phi_tilde_i' P Phi_tilde_i + gamma k5 V_p.

    Phi_tilde_i is the agent's 8-state deviation from the regulator
    manifold X_c sigma; nonnegative whenever P is positive definite and
    gamma > 0.
    """
    Xc8 = np.kron(reg.X_c, np.eye(2))
    P8 = np.kron(lyap.P, np.eye(2))
    base = Xc8 @ target.sigma()
    quad = 0.0
    for agent in agents:
        phi = agent.stacked() - base
        quad += float(phi @ P8 @ phi)
    return quad + lyap.gamma * k5 * _potential_sum(agents, pp)


def lyapunov_rate(agents: list[AgentState], target: TargetState,
                  g: Gains, p4: float = 1.0) -> float:
    """dV1/dt = -sum_i (2 p4 / k4) |k2 v_tilde_i + k4 zeta_tilde_i|^2.

    Valid only under the full rigid-formation gain condition (the cross
    term of the reduced quadratic form cancels exactly then); raises
    C2Violated otherwise. The regulator solution needed to reference
    zeta against the manifold is computed internally.
    """
    report = check_gains(g, target.s1)
    if not report.c2_holds:
        raise C2Violated(
            f"gain condition fails (residual={report.c2_equality_residual:.6g}, "
            f"inequality={report.c2_inequality:.6g})")
    reg = solve_regulator_equation(build_closed_loop(g, target.s1))
    sigma = target.sigma()
    zeta_ref = np.kron(reg.X_c[3, :], np.eye(2)) @ sigma
    vd = np.array([target.v_d.x, target.v_d.y])
    total = 0.0
    for agent in agents:
        vt = np.array([agent.v.x, agent.v.y]) - vd
        zt = np.array([agent.zeta.x, agent.zeta.y]) - zeta_ref
        w = g.k2 * vt + g.k4 * zt
        total += float(w @ w)
    return -2.0 * p4 / g.k4 * total
