# utils/exceptions.py


class MedbenchError(Exception):
    """Base class for every error raised by the harness"""


class CatalogParseError(MedbenchError):
    """A catalog line that could not be turned into an entry"""

    def __init__(self, message, line_number=None, line=None):
        """Initialize the parse error

        Args:
            message (str): What went wrong
            line_number (int, optional): 1-based line number in the source file
            line (str, optional): Offending line text
        """
        super().__init__(message)
        self.message = message
        self.line_number = line_number
        self.line = line

    def __str__(self):
        if self.line_number is None:
            return self.message
        return f"line {self.line_number}: {self.message} ({self.line!r})"


class ShapeError(MedbenchError, ValueError):
    """Text that does not satisfy the diagnostic code grammar"""


class CorpusError(MedbenchError):
    """A benchmark record that violates the corpus record format"""

    def __init__(self, message, record_id=None):
        super().__init__(message if record_id is None else f"record {record_id}: {message}")
        self.record_id = record_id


class EgressError(MedbenchError):
    """An endpoint that would send data off the local host"""

    def __init__(self, host):
        super().__init__(f"endpoint host {host!r} is not a loopback address; "
                         "set allow_nonlocal to override")
        self.host = host


class ServerError(MedbenchError):
    """Transport or protocol failure talking to the inference server"""


class EmbeddingError(MedbenchError):
    """Embedding request failed"""


class DimensionMismatch(EmbeddingError):
    """The server changed embedding dimension within a session"""

    def __init__(self, model, expected, actual):
        super().__init__(f"model {model!r} returned dimension {actual}, pinned at {expected}")
        self.model = model
        self.expected = expected
        self.actual = actual


class EmptyExemplars(MedbenchError, ValueError):
    """Few-shot prompt requested without exemplars"""


class EmptyDocument(MedbenchError, ValueError):
    """Nothing to chunk or index"""


class EmptyRun(MedbenchError, ValueError):
    """Aggregation requested over zero scores"""


class ConfigError(MedbenchError):
    """Invalid settings or experiment configuration"""


class RunSetupError(MedbenchError):
    """The run could not be started (output directory or log sink)"""
