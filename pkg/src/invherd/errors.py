"""Exception hierarchy shared by all analysis modules."""


class InvherdError(Exception):
    """Base class for every error raised by the toolkit."""


class DataError(InvherdError):
    """Input data cannot support the requested computation."""


class TapeParseError(DataError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class InsufficientDataError(DataError):
    pass


class ZeroVarianceError(DataError):
    def __init__(self, name: str, message: str = "zero variance"):
        self.name = name
        super().__init__(f"{message}: {name}")


class UnknownFirmError(DataError, KeyError):
    def __init__(self, firm: str):
        self.firm = firm
        super().__init__(f"unknown firm {firm!r}")

    def __str__(self) -> str:
        return self.args[0]


class DegenerateSampleError(DataError):
    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(f"sample {name!r}: {message}")


class NumericalError(InvherdError):
    def __init__(self, message: str, iterations: int | None = None, residual: float | None = None):
        self.iterations = iterations
        self.residual = residual
        detail = []
        if iterations is not None:
            detail.append(f"iterations={iterations}")
        if residual is not None:
            detail.append(f"residual={residual:.3e}")
        super().__init__(message + (f" ({', '.join(detail)})" if detail else ""))


class ConfigError(InvherdError, ValueError):
    pass
