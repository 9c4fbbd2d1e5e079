"""Exception hierarchy shared by every fabsim module."""


class FabricError(Exception):
    """Base class for all fabsim errors.

    ``code`` is the short token used on the line protocols (``ERR <code>``).
    """

    code = "error"


class ConfigError(FabricError):
    code = "config"


class ConfigSyntaxError(ConfigError):
    code = "syntax"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


class MalformedPathError(ConfigSyntaxError):
    code = "malformed-path"


class DuplicateTemplateError(ConfigError):
    code = "duplicate-template"


class MissingTemplateError(ConfigError):
    code = "missing-template"


class CyclicIncludeError(ConfigError):
    code = "cyclic-include"


class AssignCollisionError(ConfigError):
    code = "assign-collision"

    def __init__(self, path, message=None):
        self.path = path
        super().__init__(message or f"{path} is already assigned; use ':=' to override")


class SchemaViolationError(ConfigError):
    code = "schema-violation"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class ProfileFormatError(ConfigError):
    code = "malformed-document"


class UnknownKindError(ProfileFormatError):
    code = "unknown-kind"


class PathNotFoundError(ConfigError, KeyError):
    code = "path-not-found"

    def __init__(self, path):
        self.path = path
        super().__init__(f"path not found: {path}")

    def __str__(self):
        return self.args[0]


class PackageError(FabricError):
    code = "package"


class IdentityMismatchError(PackageError):
    code = "identity-mismatch"


class StalePlanError(PackageError):
    code = "stale-plan"


class IllegalPhaseError(FabricError):
    code = "illegal-phase"


class BootstrapError(FabricError):
    code = "bootstrap"


class NoWindowError(BootstrapError):
    code = "no-window"


class WindowExpiredError(BootstrapError):
    code = "window-expired"


class AlreadyFetchedError(BootstrapError):
    code = "already-fetched"


class WindowOpenError(BootstrapError):
    code = "window-open"


class EpochError(BootstrapError):
    code = "non-increasing-epoch"


class EpochMismatchError(BootstrapError):
    code = "epoch-mismatch"


class UnknownNodeError(FabricError):
    code = "unknown-node"


class ProviderError(BootstrapError):
    code = "provider-failure"


class NotifyError(FabricError):
    code = "notify"


class MalformedTagError(NotifyError):
    code = "malformed-tag"


class UnknownClientError(NotifyError):
    code = "unknown-client"


class RundownError(FabricError):
    code = "rundown"


class BatchError(FabricError):
    code = "batch"


class UnknownGroupError(BatchError):
    code = "unknown-group"


class JobNotPendingError(BatchError):
    code = "job-not-pending"


class AllReplicasDownError(FabricError):
    code = "all-replicas-down"


class ScenarioError(FabricError):
    code = "scenario"

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
