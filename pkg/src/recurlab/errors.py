"""Exception types shared across the package."""


class RecurlabError(Exception):
    """Base class for all package errors."""


class DomainError(RecurlabError):
    """A point lies outside the map's domain."""


class UnsupportedDensityError(RecurlabError):
    """The requested density has no closed form; build one with ulam_density."""


class ConfigError(RecurlabError):
    """Invalid or unknown configuration key/value."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class PrecisionAbort(RecurlabError):
    """Orbit iteration stopped because the error estimate crossed the abort threshold.

    Carries the 1-based step index at which the estimate became untrustworthy.
    """

    def __init__(self, step: int, est_error: float, threshold: float):
        self.step = step
        self.est_error = est_error
        self.threshold = threshold
        super().__init__(
            f"precision exhausted at step {step}: est_error={est_error:.3e} "
            f"> threshold={threshold:.3e}"
        )


class UlamConvergenceError(RecurlabError):
    """Power iteration did not reach the L1 stopping tolerance."""

    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"no convergence after {iterations} iterations: "
            f"L1 residual {residual:.3e} > {tol:.3e}"
        )


class RunFailure(RecurlabError):
    """An experiment run failed its own validity contract (e.g. too many aborts)."""
