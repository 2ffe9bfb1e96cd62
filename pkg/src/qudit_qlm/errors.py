"""Exception hierarchy shared by all modules."""


class QLMError(Exception):
    """Base class for every error raised by qudit_qlm."""


class BoundsError(QLMError, ValueError):
    pass


class DimensionError(QLMError, ValueError):
    pass


class BudgetError(QLMError):
    """A requested space or subspace exceeds the configured simulation budget."""


class GaugeViolation(QLMError, ValueError):
    """A configuration or pattern violates Gauss's law."""


class InvalidGate(QLMError, ValueError):
    pass


class AllTrajectoriesDiscarded(QLMError):
    def __init__(self, step, n_trajectories):
        super().__init__(
            f"all {n_trajectories} trajectories discarded by the norm guard at step {step}"
        )
        self.step = step
        self.n_trajectories = n_trajectories


class TraceCollapse(QLMError):
    def __init__(self, step, trace):
        super().__init__(f"density-matrix trace collapsed to {trace:.3e} at step {step}")
        self.step = step
        self.trace = trace


class ConfigError(QLMError, ValueError):
    pass
