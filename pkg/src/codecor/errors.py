"""Exception taxonomy shared across the pipeline."""


class CodecorError(Exception):
    """Base class for all package errors."""


class ConfigError(CodecorError):
    """Invalid or incomplete run configuration."""


class NetworkError(CodecorError):
    """Transport failure or non-auth HTTP error from the chat backend."""


class AuthError(CodecorError):
    """Credential rejected by the chat backend (never retried)."""


class MalformedResponseError(CodecorError):
    """Chat backend returned a body we cannot interpret."""


class TranscriptExhaustedError(CodecorError):
    """Scripted backend received a request with no matching entry left."""


class GenerationEmptyError(CodecorError):
    """All completions for an agent call were unparseable after retries."""


class MalformedScoreError(CodecorError):
    """No bracketed four-bit score vector found in a judge reply."""


class SandboxUnavailableError(CodecorError):
    """Target interpreter missing or the sandbox cannot start."""


class ProtocolError(CodecorError):
    """Sandbox child emitted output the controller cannot parse."""


class PipelineStarvedError(CodecorError):
    """Every fallback exhausted without an executable snippet.

    Carries the best-effort run record so callers can still persist it.
    """

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


class EmptyRankedSetError(CodecorError):
    """Final selection requested from an empty ranked set."""


class MalformedRecordError(CodecorError):
    """A dataset line failed schema validation."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason
