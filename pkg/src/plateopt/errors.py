"""Exception types shared across the package.

The split matters for the command line driver: ConfigError (and argparse's own
usage failures) map to exit code 2, everything else raised by the library maps
to exit code 1.
"""


class PlateOptError(Exception):
    """Base class for all errors raised by plateopt."""


class ConfigError(PlateOptError):
    """Invalid configuration, file format, or argument combination."""


class MaterialError(PlateOptError):
    """Invalid material or laminate definition."""


class MeshError(PlateOptError):
    """Invalid mesh geometry or node/element lookup."""


class SingularSystemError(PlateOptError):
    """The constrained stiffness matrix is singular.

    Carries ``mode_count``: the number of detected zero-energy modes
    (rigid-body or mechanism), or ``None`` when the count was not computed
    (very large systems).
    """

    def __init__(self, message, mode_count=None):
        super().__init__(message)
        self.mode_count = mode_count


class FieldFormatError(PlateOptError):
    """Malformed gridded-field or matrix file."""


class OptimizationError(PlateOptError):
    """Load-placement optimization could not be carried out."""


class TraceError(PlateOptError):
    """Invalid direction-field request or trajectory seed."""


class FieldError(PlateOptError):
    """Invalid scalar-field operation (no overlap, bad reference point...)."""
