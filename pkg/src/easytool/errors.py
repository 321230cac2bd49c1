"""Exception hierarchy shared across the package."""


class EasyToolError(Exception):
    """Base class for every error raised by this package."""


# documents
class UnrecognizedFormat(EasyToolError):
    pass


class MalformedDocument(EasyToolError):
    pass


class MissingField(MalformedDocument):
    pass


class DocumentWarning(UserWarning):
    """Emitted when a field is coerced or dropped while normalizing."""


# providers
class ProviderError(EasyToolError):
    pass


class UnmatchedPrompt(ProviderError):
    """A scripted provider received a prompt that no rule matches."""


# instruction generation
class DescriptionRejected(EasyToolError):
    pass


class GuidelineRejected(EasyToolError):
    pass


class InstructionIncomplete(EasyToolError):
    """Some function never produced a valid guideline.

    The partially built instruction is kept on ``partial`` and the names of the
    failing functions on ``failed``.
    """

    def __init__(self, message, partial=None, failed=()):
        super().__init__(message)
        self.partial = partial
        self.failed = tuple(failed)


# metrics
class DomainError(EasyToolError, ValueError):
    pass


class EmptyInput(EasyToolError, ValueError):
    pass


class MissingGold(EasyToolError):
    pass


# retrieval
class DimensionMismatch(EasyToolError, ValueError):
    pass


class ZeroVector(EasyToolError, ValueError):
    pass


class IndexBuildError(EasyToolError):
    pass


class IndexLoadError(EasyToolError):
    pass


# agent
class PlanningFailed(EasyToolError):
    pass


class SelectionFailed(EasyToolError):
    pass


class NoCandidatesLeft(SelectionFailed):
    pass


class ExecutionFailure(EasyToolError):
    """Raised by executors when a tool invocation fails."""


# cli
class UsageError(EasyToolError):
    pass


class ConfigError(EasyToolError):
    pass


class RepairExhausted(EasyToolError):
    """A completion stayed invalid after every allowed repair."""

    def __init__(self, message, last_output=None, reasons=()):
        super().__init__(message)
        self.last_output = last_output
        self.reasons = tuple(reasons)
