"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration input."""


class DegenerateNoiseError(ValueError):
    """Raised when a noiseless observation model makes a formula undefined."""


class DivergenceError(RuntimeError):
    """Raised when a sampler state or score becomes non-finite.

    Attributes
    ----------
    level : int
        Noise level (1-based) at which divergence was detected.
    iteration : int
        Inner iteration (0-based) within that level.
    """

    def __init__(self, level: int, iteration: int, what: str = "state"):
        self.level = level
        self.iteration = iteration
        self.what = what
        super().__init__(
            f"non-finite {what} at level {level}, iteration {iteration}"
        )
