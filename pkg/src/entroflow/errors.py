"""Exception types shared across the toolkit."""


class EntroflowError(Exception):
    """Base class for all package errors."""


class NotNormalized(EntroflowError):
    """A density vector whose mass is not within tolerance of 1."""


class CFLViolation(EntroflowError):
    """Explicit sub-stepping criterion cannot be met within max_substeps."""


class NegativeDensity(EntroflowError):
    """Positivity-preserving step produced a value below -1e-12 (scheme bug)."""


class DegenerateDensity(EntroflowError):
    """Density core sub-domain too narrow, or log of a nonpositive density."""


class BlowUp(EntroflowError):
    """sup |phi| exceeded the blow-up cap during the backward sweep."""


class NotConverged(EntroflowError):
    """Outer iteration hit its budget; carries the partial report/trace."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OracleNotConverged(EntroflowError):
    """The small-chain oracle failed to reach its tolerances."""


class QualificationFloor(EntroflowError):
    """Constraint-gradient energy below qual_floor where it is needed."""


class OscillationDetected(EntroflowError):
    """Mean-field fixed point stopped contracting."""


class NoAcceptedSamples(EntroflowError):
    """Rejection sampling acceptance rate fell below 1e-4."""


class FlowEscape(EntroflowError):
    """Gradient-flow push mapped more than 1% of mass outside the domain."""


class ValidationFailure(EntroflowError):
    """A scenario failed validate_scenario and was used anyway."""


class ConfigError(EntroflowError):
    """Base class for config-file problems."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class UnknownKey(ConfigError):
    def __init__(self, key, section):
        super().__init__(f"unknown key '{key}' in section [{section}]")
        self.key = key
        self.section = section


class MissingSection(ConfigError):
    def __init__(self, section):
        super().__init__(f"missing required section [{section}]")
        self.section = section
