"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit statuses (2 usage/config, 3 data, 4 numerical/capacity).
"""


class QVisionError(Exception):
    exit_code = 1


class ConfigError(QVisionError, ValueError):
    exit_code = 2


class IngestError(QVisionError):
    exit_code = 3


class ShapeError(QVisionError, ValueError):
    exit_code = 3


class EnhanceError(QVisionError, ValueError):
    exit_code = 3


class WeightError(QVisionError, ValueError):
    exit_code = 3


class EncodingError(QVisionError, ValueError):
    exit_code = 3


class TrainError(QVisionError):
    exit_code = 3


class ResampleError(QVisionError):
    exit_code = 3


class SplitError(QVisionError):
    exit_code = 3


class IoError(QVisionError, OSError):
    exit_code = 3


class NumericalError(QVisionError, ArithmeticError):
    exit_code = 4


class CapacityError(QVisionError):
    exit_code = 4


class DegenerateModelError(QVisionError):
    exit_code = 4
