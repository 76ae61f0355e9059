"""Exception types shared across the toolkit."""


class RadprepError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RadprepError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


# --- corpus ---------------------------------------------------------------

class MissingColumnError(RadprepError):
    """The source schema names a column absent from the CSV header."""


class DatasetParseError(RadprepError):
    """A JSON-Lines dataset line failed to parse."""

    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


# --- deid -----------------------------------------------------------------

class InvalidPatternError(RadprepError):
    """A name pattern failed to compile."""


# --- packing ---------------------------------------------------------------

class EmptyTextError(RadprepError):
    """Tokenization produced zero tokens; packed datasets must not contain empty sequences."""


class RecordTooLongError(RadprepError):
    """A tokenized record exceeds block capacity and truncation is disabled."""


class CacheIoError(RadprepError):
    """The token cache directory could not be read or written."""


# --- metrics ----------------------------------------------------------------

class InvalidNError(RadprepError):
    """rouge_n called with n < 1."""


class EmptyInputError(RadprepError):
    """A scoring operation received an empty candidate or reference."""


class DimensionMismatchError(RadprepError):
    """An embedding provider returned vectors of inconsistent size."""


class ZeroVectorError(RadprepError):
    """An embedding provider returned an all-zero vector."""


class EmptyCorpusError(RadprepError):
    """Corpus-level scoring or judging was asked to run over zero pairs."""


# --- judge ------------------------------------------------------------------

class VerdictParseError(RadprepError):
    """The judge response could not be turned into a verdict."""


class NoScoreFoundError(VerdictParseError):
    """No numeric score found in the judge response."""


class ScoreOutOfRangeError(VerdictParseError):
    """The parsed score lies outside the judging scale."""


class AuthError(RadprepError):
    """The judge endpoint rejected the credential; not retryable."""


class RateLimitedError(RadprepError):
    """The judge endpoint returned a rate-limit response; retryable."""


class TransportError(RadprepError):
    """Network-level failure talking to an external endpoint; retryable."""


class ExhaustedRetriesError(RadprepError):
    """All retry attempts failed; carries the last underlying error."""

    def __init__(self, attempts: int, last_error: Exception):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class AlignmentError(RadprepError):
    """Generated and reference files disagree on record ids."""


# --- cli --------------------------------------------------------------------

class WorkdirLockedError(RadprepError):
    """Another live process owns the working directory."""
