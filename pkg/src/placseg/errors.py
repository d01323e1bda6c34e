"""Exception types shared across the package."""


class IncompatibleCheckpointError(ValueError):
    """Checkpoint cannot initialize the requested model (width/variant mismatch)."""


class UnsupportedOperationError(RuntimeError):
    """Operation not available for this model variant (e.g. class head missing)."""


class DegenerateSpecError(ValueError):
    """Phantom spec produces a degenerate object (e.g. placenta below 10 voxels)."""


class UndefinedSurfaceError(ValueError):
    """Surface distances are undefined because a mask is empty."""
