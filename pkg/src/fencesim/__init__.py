"""Label-free moving-target fencing for second-order multi-agent systems.

A simulator plus numerical verification toolkit: the dynamic-regulator
controller with an internal model and inter-agent repulsion, closed-loop
stability and Lyapunov certification, fixed-step simulation with metrics,
and a CLI that persists trajectory logs as CSV.
"""

from .analysis import (ClosedLoopMatrices, LyapunovData, RegulatorSolution,
                       build_closed_loop, build_P, characteristic_polynomial,
                       is_positive_definite, lyapunov_rate, lyapunov_value,
                       routh_hurwitz, solve_regulator_equation)
from .controller import (GainReport, check_c1, check_gains, control_input,
                         internal_model_derivative, label_fixed_control)
from .errors import (BelowSafeDistance, C2Violated, CollisionDetected,
                     DegenerateGains, DegenerateRouthTable, Diverged,
                     FenceSimError, NotHurwitz, NotSymmetric, ParseError,
                     SingularObservation, SingularSystem, ValidationError)
from .geometry import Polygon, convex_hull, distance_to_hull
from .model import (AgentState, Gains, PotentialParams, TargetState, Vec2,
                    alpha, alpha_integral, exosystem_transition, neighbors,
                    recover_initial_velocity, repulsion, target_state_at)
from .simulator import (LABEL_FIXED, LABEL_FREE, MetricsReport, Scenario,
                        Thresholds, TrajectoryLog, metrics, random_scenario,
                        rk4_step, run, world_derivative)

__version__ = "0.1.0"
