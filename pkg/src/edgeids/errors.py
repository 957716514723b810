"""Exception hierarchy shared by all edgeids modules."""


class EdgeIdsError(Exception):
    """Base class for all edgeids errors."""


class InsufficientData(EdgeIdsError):
    pass


class EmptyDistribution(EdgeIdsError):
    pass


class DegenerateData(EdgeIdsError):
    pass


class EmptyExemplars(EdgeIdsError):
    pass


class UntrainedModel(EdgeIdsError):
    pass


class EmptyList(EdgeIdsError):
    pass


class SamplerUnavailable(EdgeIdsError):
    pass


class ValueOutOfRange(EdgeIdsError):
    pass


class NoContextForBenign(EdgeIdsError):
    pass


class BudgetImpossible(EdgeIdsError):
    pass


class RateLimited(EdgeIdsError):
    pass


class IntegrityMismatch(EdgeIdsError):
    pass


class ProviderTimeout(EdgeIdsError):
    pass


class MalformedResponse(EdgeIdsError):
    """Response schema violation. ``field`` names the offending field."""

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"malformed response field: {field}")


class NegativeDuration(EdgeIdsError):
    pass


class InsufficientHistory(EdgeIdsError):
    pass


class SinkUnavailable(EdgeIdsError):
    pass


class MissingLabelColumn(EdgeIdsError):
    pass


class UnknownLabel(EdgeIdsError):
    """Raised with the full list of unmapped labels encountered."""

    def __init__(self, labels):
        self.labels = sorted(set(labels))
        super().__init__(f"unknown labels: {', '.join(self.labels)}")


class LengthMismatch(EdgeIdsError):
    pass


class EmptyTrial(EdgeIdsError):
    pass


class DegenerateGroups(EdgeIdsError):
    pass


class RowParseError(EdgeIdsError):
    """CSV row rejected; carries the 1-based row number."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")
