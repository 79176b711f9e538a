class DataError(ValueError):
    """Malformed or inconsistent input file, record or configuration."""


class SceneGenerationError(DataError):
    """The scene generator could not satisfy its configuration."""


class InvariantError(RuntimeError):
    """An internal invariant failed while training or evaluating."""
