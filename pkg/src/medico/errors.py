"""Exception types shared across the package."""


class MedicoError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(MedicoError):
    """Malformed input text (triple files, queries, grammar files).

    Carries enough position context to point at the offending line.
    """

    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}"
        if column is not None:
            where += f", col {column}"
        super().__init__(f"{where}: {message}" if where else message)
        self.reason = message


class UnsupportedFeatureError(ParseError):
    """Query uses a language feature outside the supported subset."""

    def __init__(self, keyword, line=None, column=None):
        self.keyword = keyword
        super().__init__(f"unsupported feature: {keyword}", line=line, column=column)


class NotFoundError(MedicoError):
    """A referenced entity does not exist in the store."""


class ValidationError(MedicoError):
    """Input violates a domain invariant (ranges, required fields, geometry)."""


class ConflictError(MedicoError):
    """Operation conflicts with existing state (e.g. double supersede)."""


class EmptyQueryError(ValidationError):
    """Search request resolved to no usable constraint."""

    def __init__(self, message, unknown_terms=()):
        super().__init__(message)
        self.unknown_terms = list(unknown_terms)


class UnknownTimePhraseError(ValidationError):
    """Time expression outside the supported phrase set."""

    def __init__(self, phrase):
        super().__init__(f"unknown time phrase: {phrase!r}")
        self.phrase = phrase


class DicomError(MedicoError):
    """Base for DICOM parsing failures."""


class DicomFormatError(DicomError):
    """File is not a parseable DICOM part-10 stream."""


class DicomTruncationError(DicomFormatError):
    """Stream ended inside a declared element."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedTransferSyntaxError(DicomError):
    """Dataset encoded with a transfer syntax we do not read."""

    def __init__(self, uid):
        super().__init__(f"unsupported transfer syntax: {uid}")
        self.uid = uid
