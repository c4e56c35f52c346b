"""Exception types shared across the package."""


class CollisionError(ValueError):
    """A configuration (or path node) has a coincident or near-coincident pair."""

    def __init__(self, message, pair=None, node=None):
        super().__init__(message)
        self.pair = pair
        self.node = node


class BracketError(RuntimeError):
    """The free-time search could not bracket an interior minimum in tau."""

    def __init__(self, message, scanned_range=None):
        super().__init__(message)
        self.scanned_range = scanned_range


class ConstructionError(ValueError):
    """A direction-sequence or endpoint construction failed to reach a valid state."""


class ExperimentError(RuntimeError):
    """An experiment could not produce enough surviving stages to report."""


class EnergyDriftError(RuntimeError):
    """An integration exceeded its energy-drift tolerance."""

    def __init__(self, message, drift=None, tolerance=None):
        super().__init__(message)
        self.drift = drift
        self.tolerance = tolerance
