"""Exception hierarchy shared by all igrank modules."""


class IgrankError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(IgrankError):
    """Invalid configuration value or inconsistent option combination."""


class ShapeError(IgrankError):
    """Array/tensor dimensions do not match the declared contract."""


class DataError(IgrankError):
    """Well-formed input carrying invalid values (non-finite, out of range...)."""


class StructureParseError(IgrankError):
    """Structure file text could not be parsed."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyComplexError(StructureParseError):
    """Parsing finished with zero standard residues."""


class RoleAssignmentError(IgrankError):
    """Chain role mapping is incomplete or violates the one-antigen rule."""


class AnnotationError(IgrankError):
    """CDR annotation references chains/residues it must not."""


class EmptySeedError(IgrankError):
    """Subgraph seeding produced no nodes."""


class EmptyPoolError(IgrankError):
    """The selected pooling strategy produced an empty node set."""


class NumericError(IgrankError):
    """A non-finite value appeared where finite math was required."""


class UnscorableSampleError(IgrankError):
    """A sample cannot travel the scoring path (no interface, empty pool...)."""
