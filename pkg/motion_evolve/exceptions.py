"""Exception hierarchy for the motion-evolve package."""

from __future__ import annotations

from pathlib import Path


class MotionEvolveError(Exception):
    """Base exception for motion-evolve.

    All package-specific exceptions inherit from this class, allowing
    consumers to catch every error with a single except clause.
    """

    __slots__ = ()


class InvalidArgumentError(MotionEvolveError, ValueError):
    """An argument violates an operation's precondition.

    Raised for shape mismatches, out-of-range hyperparameters, non-finite
    inputs and similar caller errors.
    """

    __slots__ = ()


class ConfigError(InvalidArgumentError):
    """A configuration document failed schema validation."""

    __slots__ = ()


class NumericalDivergenceError(MotionEvolveError, ArithmeticError):
    """An iterative computation produced non-finite values.

    Attributes:
        step: The solver step at which the state became non-finite.
    """

    __slots__ = ("step",)

    def __init__(self, message: str, step: int) -> None:
        """Initialize NumericalDivergenceError.

        Args:
            message: Human-readable error description.
            step: Index of the offending step (1-based).
        """
        super().__init__(message)
        self.step = step


class TrainingDivergenceError(NumericalDivergenceError):
    """The training loss became non-finite.

    Attributes:
        iteration: The training iteration that produced the loss.
    """

    __slots__ = ("iteration",)

    def __init__(self, message: str, iteration: int) -> None:
        """Initialize TrainingDivergenceError.

        Args:
            message: Human-readable error description.
            iteration: The iteration index (1-based).
        """
        super().__init__(message, step=iteration)
        self.iteration = iteration


class DegenerateEmbeddingError(MotionEvolveError, ArithmeticError):
    """An embedding has zero norm, so cosine similarity is undefined."""

    __slots__ = ()


class FrameIOError(MotionEvolveError, OSError):
    """A frame file or directory could not be read or written.

    Attributes:
        path: The offending file or directory.
    """

    __slots__ = ("path",)

    def __init__(self, message: str, path: Path | str) -> None:
        """Initialize FrameIOError.

        Args:
            message: Human-readable error description.
            path: The file or directory that caused the failure.
        """
        super().__init__(message)
        self.path = Path(path)


class CheckpointError(MotionEvolveError):
    """A checkpoint file is malformed or has an unsupported version.

    Attributes:
        path: The checkpoint file, if known.
    """

    __slots__ = ("path",)

    def __init__(self, message: str, path: Path | str | None = None) -> None:
        """Initialize CheckpointError.

        Args:
            message: Human-readable error description.
            path: Optional path of the checkpoint file.
        """
        super().__init__(message)
        self.path = Path(path) if path is not None else None
