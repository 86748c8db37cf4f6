"""Exception types shared across the package."""


class FenceSimError(Exception):
    """Base class for all package-specific errors."""


class BelowSafeDistance(FenceSimError):
    """A pairwise distance at or below the safe distance r was encountered.

    The repulsive gain is undefined there; reaching this state means the
    scenario is broken or the integrator step is too large. Never clamped.
    """

    def __init__(self, distance, r, time=None):
        self.distance = distance
        self.r = r
        self.time = time
        at = f" at t={time:g}" if time is not None else ""
        super().__init__(f"pairwise distance {distance:.6g} <= safe distance {r:g}{at}")


class SingularObservation(FenceSimError):
    """The position row of the target transition matrix is not invertible."""


class DegenerateGains(FenceSimError):
    """k1*k2 == k4, so the fencing inequality is undefined."""


class DegenerateRouthTable(FenceSimError):
    """A first-column Routh pivot is exactly zero; the test is inconclusive."""


class NotHurwitz(FenceSimError):
    """The closed-loop matrix has an eigenvalue with nonnegative real part."""


class SingularSystem(FenceSimError):
    """The vectorized regulator equation could not be solved reliably."""


class C2Violated(FenceSimError):
    """The gain condition required for the Lyapunov construction fails."""


class NotSymmetric(FenceSimError):
    """A matrix expected to be symmetric is not (beyond 1e-12)."""


class CollisionDetected(FenceSimError):
    """A simulation reached a pairwise distance <= r and was aborted.

    Carries the failure time and the partial trajectory log.
    """

    def __init__(self, time, log=None):
        self.time = time
        self.log = log
        super().__init__(f"collision detected at t={time:g}")


class Diverged(FenceSimError):
    """A state norm exceeded the divergence guard during integration."""

    def __init__(self, time, log=None):
        self.time = time
        self.log = log
        super().__init__(f"state diverged at t={time:g}")


class ParseError(FenceSimError):
    """A configuration file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FenceSimError):
    """A configuration or scenario invariant is violated."""
