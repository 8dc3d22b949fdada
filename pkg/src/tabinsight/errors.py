"""Exception hierarchy shared across the pipeline."""


class TabInsightError(Exception):
    """Base class for all package errors."""


# -- tables ------------------------------------------------------------------


class TableError(TabInsightError):
    pass


class DecodeError(TableError):
    pass


class RaggedRowError(TableError):
    def __init__(self, row, expected, found):
        self.row = row
        self.expected = expected
        self.found = found
        super().__init__(f"row {row}: expected {expected} cells, found {found}")


class EmptyHeaderError(TableError):
    pass


class GrammarError(TableError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class RowIndexGapError(GrammarError):
    pass


class TableTooLongError(TableError):
    def __init__(self, estimated_tokens, limit):
        self.estimated_tokens = estimated_tokens
        self.limit = limit
        super().__init__(
            f"serialized table is ~{estimated_tokens} tokens, limit is {limit}"
        )


# -- knowledge ---------------------------------------------------------------


class EvidenceParseError(TabInsightError):
    def __init__(self, position, reason):
        self.position = position
        self.reason = reason
        super().__init__(f"at {position}: {reason}")


class KnowledgeError(TabInsightError):
    pass


# -- gateway -----------------------------------------------------------------


class GatewayError(TabInsightError):
    """Any failure to obtain a model response."""


class TransportError(GatewayError):
    def __init__(self, message, transient=True):
        self.transient = transient
        super().__init__(message)


class RateLimitedError(TransportError):
    pass


class MalformedResponseError(GatewayError):
    pass


class CacheMissInReplayMode(GatewayError):
    def __init__(self, fingerprint):
        self.fingerprint = fingerprint
        super().__init__(f"no recorded response for request {fingerprint}")


class EmbedInputError(GatewayError):
    pass


class DimensionMismatch(ValueError, TabInsightError):
    pass


class ZeroVectorError(ValueError, TabInsightError):
    pass


class ConfigurationError(TabInsightError):
    pass


class RoleNotConfiguredError(ConfigurationError):
    def __init__(self, role):
        self.role = role
        super().__init__(f"no profile configured for role {role!r}")


class TemplateError(ConfigurationError):
    pass


# -- mining ------------------------------------------------------------------


class ParseError(TabInsightError):
    def __init__(self, message, raw=""):
        self.raw = raw
        super().__init__(message)


class AQParseError(ParseError):
    pass


class EmptyAspectsError(AQParseError):
    pass


class EIParseError(ParseError):
    pass


class QuestionCountMismatch(EIParseError):
    def __init__(self, expected, parsed, raw=""):
        self.expected = expected
        self.parsed = parsed
        super().__init__(f"expected {expected} answers, parsed {parsed}", raw)


# -- quality / distillation ----------------------------------------------------


class StageOrderError(TabInsightError):
    """A record was handed to a stage its provenance does not permit."""


class UnscoredTripleError(TabInsightError):
    pass


class MissingEvidenceError(TabInsightError):
    pass


# -- evaluation ----------------------------------------------------------------


class EmptyTextError(ValueError, TabInsightError):
    pass


class MetricParseError(TabInsightError):
    def __init__(self, message, expected=None, found=None):
        self.expected = expected
        self.found = found
        super().__init__(message)


class JoinError(TabInsightError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("no gold record for: " + ", ".join(self.missing))


class UpstreamMissingError(TabInsightError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"expected upstream stage file {path} does not exist")
