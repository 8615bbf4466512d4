"""Exception types shared across the package."""


class DernetError(Exception):
    """Base class for all package errors."""


class InvalidMeshError(DernetError):
    """Mesh construction arguments or mesh data violate an invariant."""


class MeshParseError(DernetError):
    """A mesh file could not be parsed."""

    def __init__(self, path, line_number, message):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class ConfigError(DernetError):
    """A scenario/config file is missing, malformed, or inconsistent."""


class NumericalError(DernetError):
    """A non-finite value appeared during an evaluation."""


class SingularSystemError(DernetError):
    """The linearized system could not be factorized."""


class NonconvergenceError(DernetError):
    """Newton iteration exhausted its budget without meeting the tolerance."""

    def __init__(self, iterations, residual_norm, tolerance):
        self.iterations = iterations
        self.residual_norm = residual_norm
        self.tolerance = tolerance
        super().__init__(
            f"no convergence after {iterations} iterations: "
            f"residual {residual_norm:.3e} > tolerance {tolerance:.3e}"
        )


class ContactLoopError(DernetError):
    """The contact corrector loop did not terminate within its pass budget."""

    def __init__(self, passes, pending_nodes):
        self.passes = passes
        self.pending_nodes = list(pending_nodes)
        super().__init__(
            f"contact corrector did not settle after {passes} passes; "
            f"{len(self.pending_nodes)} nodes still penetrating"
        )
