class QuadratureError(RuntimeError):
    """Doubling the quadrature order moved the result by more than the tolerance."""


class ClosedFormInapplicable(ValueError):
    """The closed-form timing offset has no valid real solution for these inputs."""
