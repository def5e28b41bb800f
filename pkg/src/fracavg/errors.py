"""Exception types shared across the package."""


class FracavgError(Exception):
    """Base class for all package-specific failures."""


class ConvergenceError(FracavgError):
    """A truncated series or iterative refinement exhausted its term budget."""


class DivergenceError(FracavgError):
    """An integral against the jump measure fails to converge at the origin."""


class PathBlowupError(FracavgError):
    """A path solve produced a non-finite state.

    Attributes
    ----------
    step : int
        Index of the first grid step with a non-finite state.
    time : float
        Grid time of that step.
    system : str
        Label of the system that failed ("original" or "averaged"),
        empty when the solve was not part of a coupled run.
    """

    def __init__(self, step, time, system=""):
        self.step = int(step)
        self.time = float(time)
        self.system = system
        label = f" in {system} system" if system else ""
        super().__init__(
            f"non-finite state at step {self.step} (t={self.time:g}){label}"
        )


class ConfigError(FracavgError, ValueError):
    """An experiment or CLI configuration violates a precondition."""


class RunFailedError(FracavgError):
    """An ensemble exceeded its per-path failure budget."""
