"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""


class MRBSDEError(Exception):
    code = "MRBSDEError"
    exit_status = 2


class ConfigError(MRBSDEError):
    code = "ConfigError"


class ParseError(ConfigError):
    code = "ParseError"


class UnknownFunctionName(ConfigError):
    code = "UnknownFunctionName"


class MissingField(ConfigError):
    code = "MissingField"


class NonIncreasingConstraint(MRBSDEError):
    code = "NonIncreasingConstraint"


class BadLipschitzBounds(MRBSDEError):
    code = "BadLipschitzBounds"


class ZDriverNeedsLinearH(MRBSDEError):
    code = "ZDriverNeedsLinearH"


class TerminalConstraintViolated(MRBSDEError):
    code = "TerminalConstraintViolated"


class NonFiniteState(MRBSDEError):
    code = "NonFiniteState"


class TreeTooLarge(MRBSDEError):
    code = "TreeTooLarge"


class BracketFailure(MRBSDEError):
    code = "BracketFailure"


class RankDeficient(MRBSDEError):
    code = "RankDeficient"


class ShapeMismatch(MRBSDEError):
    code = "ShapeMismatch"


class PicardDivergence(MRBSDEError):
    code = "PicardDivergence"


class AssumptionViolated(MRBSDEError):
    code = "AssumptionViolated"


class UnsupportedModel(MRBSDEError):
    code = "UnsupportedModel"


class OracleUnavailable(MRBSDEError):
    code = "OracleUnavailable"


class DegenerateInput(MRBSDEError):
    code = "DegenerateInput"
