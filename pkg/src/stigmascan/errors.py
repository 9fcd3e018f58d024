"""Exception hierarchy shared across the pipeline.

Every error carries a short machine-readable ``code`` so the command line
front end can print ``error[<code>]: <message>`` on a single line.
"""


class StigmaScanError(Exception):
    code = "Error"


class MissingColumn(StigmaScanError):
    code = "MissingColumn"

    def __init__(self, column, path):
        super().__init__(f"column {column!r} missing from {path}")
        self.column = column
        self.path = str(path)


class IdCollision(StigmaScanError):
    code = "IdCollision"


class NoAdmissions(StigmaScanError):
    code = "NoAdmissions"


class UnknownInsuranceLabel(StigmaScanError):
    code = "UnknownInsuranceLabel"


class AgeBelowRange(StigmaScanError):
    code = "AgeBelowRange"


class ConfigError(StigmaScanError):
    code = "ConfigError"


class EmptyLexicon(StigmaScanError):
    code = "EmptyLexicon"


class SingleClassTraining(StigmaScanError):
    code = "SingleClassTraining"


class LexiconMismatch(StigmaScanError):
    code = "LexiconMismatch"


class LengthMismatch(StigmaScanError):
    code = "LengthMismatch"


class NoCharts(StigmaScanError):
    code = "NoCharts"


class NotConverged(StigmaScanError):
    code = "NotConverged"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AllZeroOutcome(StigmaScanError):
    code = "AllZeroOutcome"


class RankDeficientDesign(StigmaScanError):
    code = "RankDeficientDesign"


class DegenerateClusters(StigmaScanError):
    code = "DegenerateClusters"


class NegativeVariance(StigmaScanError):
    code = "NegativeVariance"


class ConstantInput(StigmaScanError):
    code = "ConstantInput"


class InvalidRates(StigmaScanError):
    code = "InvalidRates"


class ManifestMismatch(StigmaScanError):
    code = "ManifestMismatch"


class EmptyTable(StigmaScanError):
    code = "EmptyTable"
