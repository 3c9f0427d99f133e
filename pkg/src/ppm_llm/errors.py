"""Exception hierarchy shared across the toolkit."""


class PpmError(Exception):
    """Base class for every error raised deliberately by this package."""

    kind = "error"


class LogFormatError(PpmError, ValueError):
    """An event-log file or schema violates the expected structure."""

    kind = "log_format"

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EncodingParseError(PpmError, ValueError):
    """A sequential payload does not follow the encoding grammar."""

    kind = "encoding_parse"

    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} (at position {pos})")


class ResponseFormatError(PpmError, ValueError):
    """An LLM reply does not follow the marker grammar."""

    kind = "response_format"

    def __init__(self, message: str, reason: str):
        self.reason = reason
        super().__init__(message)


class DegenerateInputError(PpmError, ValueError):
    """A statistical routine received input it cannot decide on."""

    kind = "degenerate"


class ConfigError(PpmError, ValueError):
    kind = "config"


class LlmError(PpmError, RuntimeError):
    kind = "llm"


class MissingCacheEntryError(LlmError, KeyError):
    kind = "missing_cache_entry"

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class MissingApiKeyError(LlmError):
    kind = "missing_api_key"


class LlmTransportError(LlmError):
    kind = "transport"


class LlmProviderError(LlmError):
    """The provider answered with an error payload; ``body`` is kept verbatim."""

    kind = "provider"

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"provider returned HTTP {status}: {body}")
