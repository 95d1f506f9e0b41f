"""Exception hierarchy shared across the toolchain."""


class HwAssetError(Exception):
    """Base class for all package errors."""


class ParseError(HwAssetError):
    def __init__(self, message, file=None, line=None):
        self.file = file
        self.line = line
        where = ""
        if file is not None:
            where = f"{file}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip() if where else message)


class EmptyModelError(HwAssetError):
    """Raised when a repository yields zero parseable modules."""


class HierarchyError(HwAssetError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("instantiation cycle: " + " -> ".join(self.cycle))


class ParameterError(HwAssetError, ValueError):
    """Invalid numeric parameter (chunk sizes, weights, ...)."""


class GatewayError(HwAssetError):
    """Transport-level or backend failure after retries."""


class ReplayMissError(GatewayError):
    def __init__(self, prompt_hash):
        self.prompt_hash = prompt_hash
        super().__init__(f"no replay fixture for prompt hash {prompt_hash}")


class SchemaError(GatewayError):
    """Structured response failed validation after repair and retries."""

    def __init__(self, message, raw_text):
        self.raw_text = raw_text
        super().__init__(message)


class IndexBuildError(HwAssetError):
    def __init__(self, failed, reason="embedding failed"):
        self.failed = list(failed)
        super().__init__(f"{reason} for chunks {self.failed}")


class StageError(HwAssetError):
    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


class CweLoadError(HwAssetError):
    pass
