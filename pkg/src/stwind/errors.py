"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the command-line front end maps it to (2 config, 3 data, 4 numeric).
"""


class StwindError(Exception):
    code = "error"
    exit_status = 3


class ConfigError(StwindError):
    code = "config_error"
    exit_status = 2


class ParameterError(StwindError, ValueError):
    code = "parameter_error"
    exit_status = 2


class GeometryError(ParameterError):
    code = "geometry_error"


class DataError(StwindError):
    code = "data_error"
    exit_status = 3


class SchemaError(DataError):
    code = "schema_error"


class DuplicateError(DataError):
    code = "duplicate_error"


class DimensionError(DataError):
    code = "dimension_error"


class CompletenessError(DataError):
    code = "completeness_error"


class ImputationError(DataError):
    code = "imputation_error"


class ExtentError(DataError):
    code = "extent_error"


class RangeError(DataError):
    code = "range_error"


class EvaluationError(DataError):
    code = "evaluation_error"


class NumericError(StwindError):
    code = "numeric_error"
    exit_status = 4


class SingularityError(NumericError):
    code = "singularity_error"


class SelectionError(NumericError):
    code = "selection_error"


class DegreesOfFreedomError(NumericError):
    code = "dof_error"


class EnsembleSizeError(NumericError):
    code = "ensemble_size_error"


class FitError(NumericError):
    code = "fit_error"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
