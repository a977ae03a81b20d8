"""Exception types shared across the package."""


class OutOfCorridorError(ValueError):
    """A query point lies farther than twice the half-width from the centerline."""


class InfeasibleSceneError(RuntimeError):
    """A scene admits no feasible trajectory (some station is fully blocked)."""


class SamplerError(RuntimeError):
    """A denoising step produced a non-finite score or barrier gradient."""
