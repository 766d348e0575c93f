"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class ManipsimError(Exception):
    exit_code = 1
    code = "error"

    def __init__(self, message, **context):
        super().__init__(message)
        self.message = message
        self.context = context


class ContractViolation(ManipsimError, ValueError):
    """An operation was called outside its precondition."""

    code = "contract_violation"


class ConfigError(ManipsimError, ValueError):
    exit_code = 2
    code = "config_error"


class EnumerationLimitError(ConfigError):
    """Permutation search requested over more documents than allowed."""

    code = "enumeration_limit"


class StageOrderError(ManipsimError, RuntimeError):
    """A pipeline stage ran before its prerequisite (e.g. no preference table)."""

    exit_code = 3
    code = "stage_prerequisite"


class VerificationError(ManipsimError):
    exit_code = 4
    code = "verification_failed"


class ModelFormatError(ManipsimError):
    """Stored ranker weights are unreadable or were saved under another config."""

    exit_code = 2
    code = "model_format"
