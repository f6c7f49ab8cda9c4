"""Exception hierarchy shared across the package."""


class MeshDiffError(Exception):
    """Base class for all package errors."""


class MeshFormatError(MeshDiffError, ValueError):
    """A mesh or index file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class UnsupportedTopologyError(MeshDiffError, ValueError):
    """Non-triangular or non-manifold input."""


class ClassificationConflictError(MeshDiffError, ValueError):
    """An index is listed both as landmark and as non-interested."""


class DegenerateError(MeshDiffError, ValueError):
    """Zero-length edges, collapsed templates and similar ill-posed input."""


class ParameterError(MeshDiffError, ValueError):
    """A numeric parameter violates its precondition."""


class TopologyMismatchError(MeshDiffError, ValueError):
    """Two meshes expected to share connectivity do not."""


class FactorizationError(MeshDiffError, ArithmeticError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, message, pivot=None):
        self.pivot = pivot
        super().__init__(message)


class ContractError(MeshDiffError, ValueError):
    """Arguments do not match the shapes a prebuilt object was built for."""
