"""Exception hierarchy shared by all subpackages."""


class NVDNPError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(NVDNPError, ValueError):
    """An argument is outside its allowed range.

    ``field`` names the offending argument.
    """

    def __init__(self, field, reason):
        self.field = field
        super().__init__(f"{field}: {reason}")


class DomainError(NVDNPError, ValueError):
    pass


class BathParseError(NVDNPError, ValueError):
    def __init__(self, line, reason):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class ConsistencyError(NVDNPError, ValueError):
    pass


class CapacityError(NVDNPError, ValueError):
    pass


class NumericalError(NVDNPError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            details = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)


class SequenceError(NVDNPError, ValueError):
    """Pulse-program error positioned at ``line``:``column`` (1-based)."""

    kind = "error"

    def __init__(self, line, column, reason, token=None):
        self.line = line
        self.column = column
        self.token = token
        self.reason = reason
        where = f"{line}:{column}"
        if token is not None:
            super().__init__(f"{where}: {self.kind}: {reason} (at {token!r})")
        else:
            super().__init__(f"{where}: {self.kind}: {reason}")


class SequenceSyntaxError(SequenceError):
    kind = "syntax error"


class UnitError(SequenceError):
    kind = "unit error"


class RangeError(SequenceError):
    kind = "range error"


class UnboundVariableError(NVDNPError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable ${name}")

    def __str__(self):
        return self.args[0]


class FitInputError(NVDNPError, ValueError):
    pass


class NoFiniteT2Error(NVDNPError, ValueError):
    """The quasistatic T2* is infinite for the requested bath/polarization."""


class EnsembleError(NVDNPError, RuntimeError):
    def __init__(self, failures):
        self.failures = dict(failures)
        seeds = ", ".join(str(s) for s in self.failures)
        super().__init__(f"ensemble members failed for seeds: {seeds}")


class ConfigError(NVDNPError, ValueError):
    def __init__(self, reason, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{reason}")
