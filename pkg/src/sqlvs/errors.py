"""Exception types shared across the engine."""


class SqlVsError(Exception):
    """Base class for all engine errors."""


class SchemaError(SqlVsError):
    """Unknown field, duplicate field, or incompatible schemas."""


class BoundsError(SqlVsError):
    """Row id outside the owning table."""


class ExpressionError(SqlVsError):
    """Expression fails to parse or type-check."""


class ShapeError(SqlVsError):
    """Embedding dimensionality mismatch."""


class EmptyInputError(SqlVsError):
    """Operation requires a non-empty input."""


class ParameterError(SqlVsError):
    """Invalid search or build parameter."""


class PlanError(SqlVsError):
    """Plan text fails to parse or the DAG is invalid."""


class ModelError(SqlVsError):
    """Unknown artifact kind or malformed cost-model input."""


class CapabilityError(SqlVsError):
    """Hardware profile lacks a capability the strategy requires."""


class CapExceededError(SqlVsError):
    """Requested top-k' exceeds the device top-k cap; caller should fall back to host."""

    def __init__(self, k_prime: int, cap: int):
        super().__init__(f"k'={k_prime} exceeds device top-k cap {cap}")
        self.k_prime = k_prime
        self.cap = cap


class PlacementError(SqlVsError):
    """Placement would exceed the device memory budget."""
