"""Exception types shared across the package.

The CLI maps these onto exit codes, so library code should prefer them
over bare ValueError/RuntimeError for anything a caller can act on.
"""


class ConfigurationError(ValueError):
    """A structurally invalid configuration (degenerate bounds, bad ranges)."""


class RejectedInputError(ValueError):
    """Well-formed call with data the operation cannot accept (NaN state,
    length mismatch, missing history)."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class SelectionFailedError(RuntimeError):
    """No architecture candidate survived the quality gate."""

    def __init__(self, best_nmse, message=None):
        self.best_nmse = best_nmse
        super().__init__(message or f"no candidate exceeded the NMSE gate (best {best_nmse:.4f})")


class InfeasibleError(RuntimeError):
    """A scheduling problem has no feasible solution; carries row names."""

    def __init__(self, violated_rows, message=None):
        self.violated_rows = list(violated_rows)
        super().__init__(message or f"infeasible; suspect rows: {', '.join(self.violated_rows[:8])}")
