"""Exception hierarchy shared by the engine, memory and service layers."""


class SkillForgeError(Exception):
    """Base class for all domain errors."""


class UnknownIdError(SkillForgeError, KeyError):
    """A registry lookup (behaviour, skill, predicate, hardware, function) missed."""

    def __init__(self, kind, name):
        super().__init__(f"unknown {kind}: {name!r}")
        self.kind = kind
        self.name = name


class DuplicateIdError(SkillForgeError):
    """Registration attempted under a name that is already taken."""


class SchemaViolationError(SkillForgeError):
    """Parameters do not satisfy a behaviour's parameter schema."""


class HardwareBusyError(SkillForgeError):
    """A hardware handle is already claimed by a live execution."""


class AstValidationError(SkillForgeError):
    """A program AST failed validation.

    Carries node-level diagnostics as a list of (path, message) pairs so the
    service can return them verbatim.
    """

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        detail = "; ".join(f"{path}: {msg}" for path, msg in self.diagnostics)
        super().__init__(f"program validation failed: {detail}")


class BehaviourFailure(SkillForgeError):
    """Raised internally when a behaviour fails at runtime.

    The engine converts it into a failed ExecutionRecord; it never escapes
    interpret_program or execute_skill.
    """

    def __init__(self, reason, world=None):
        super().__init__(reason)
        self.reason = reason
        self.world = world


class RecordingError(SkillForgeError):
    """Recording-session lifecycle violation (no open session, bad token, ...)."""


class StorageError(SkillForgeError):
    """Experience store is unavailable or rejected an operation."""


class SchemaConflictError(SkillForgeError):
    """Two schema-extension owners define the same table, or a downgrade was requested."""


class InsufficientDataError(SkillForgeError):
    """Not enough records/labels to train a model."""
