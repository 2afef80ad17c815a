"""Exception taxonomy shared across the package.

Every error carries a short machine-readable ``code`` so CLI output and
JSON reports can name failures without depending on Python class names.
"""

from __future__ import annotations


class MixflowError(Exception):
    """Base class for all package-specific errors."""

    code = "ERROR"


# --- graph / model construction -------------------------------------------

class GraphError(MixflowError):
    code = "GRAPH"


class DuplicateVertexError(GraphError):
    code = "DUPLICATE_VERTEX"


class NegativeWeightError(GraphError):
    code = "NEGATIVE_WEIGHT"


class NotIrreducibleError(GraphError):
    code = "NOT_IRREDUCIBLE"


class ModelError(MixflowError):
    code = "MODEL"


class ReservoirMismatchError(ModelError):
    code = "RESERVOIR_MISMATCH"


class BadShapeError(ModelError):
    code = "BAD_SHAPE"


class UnsupportedModelError(ModelError):
    code = "UNSUPPORTED_MODEL"


class ModelJsonError(ModelError):
    code = "MODEL_JSON"


class KindMismatchError(MixflowError):
    code = "KIND_MISMATCH"


# --- sampling / distributions ----------------------------------------------

class BadScaleError(MixflowError):
    code = "BAD_SCALE"


class BadEpsilonError(MixflowError):
    code = "BAD_EPSILON"


class OutOfRangeError(MixflowError):
    code = "OUT_OF_RANGE"


class NotOrderedError(MixflowError):
    code = "NOT_ORDERED"


class TermBudgetError(MixflowError):
    code = "TERM_BUDGET"


# --- simulation -------------------------------------------------------------

class SimulationError(MixflowError):
    code = "SIMULATION"


class RateOverflowError(SimulationError):
    code = "RATE_OVERFLOW"


class NegativeStateError(SimulationError):
    code = "NEGATIVE_STATE"


class BadDtError(SimulationError):
    code = "BAD_DT"


class SingularSystemError(SimulationError):
    code = "SINGULAR_SYSTEM"


# --- identity checking --------------------------------------------------------

class QuadratureError(MixflowError):
    code = "QUADRATURE_DEGREE"


class DivergentMomentError(MixflowError):
    code = "DIVERGENT_MOMENT"


class TruncationInsufficientError(MixflowError):
    code = "TRUNCATION_INSUFFICIENT"


# --- CLI ----------------------------------------------------------------------

class ConfigError(MixflowError):
    code = "CONFIG"
