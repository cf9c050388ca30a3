"""
Custom Exception Classes
Provides clear, structured error handling across the package
"""

from typing import Optional, Dict, Any, Sequence


class AppException(Exception):
    """Base exception for all package errors"""

    def __init__(
        self,
        message: str,
        error_code: str,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        return self.message


class ConfigError(AppException, ValueError):
    """Invalid configuration value or combination"""

    def __init__(
        self,
        message: str,
        key: Optional[str] = None,
        line: Optional[int] = None,
        details: Optional[Dict] = None
    ):
        info = dict(details or {})
        if key is not None:
            info["key"] = key
        if line is not None:
            info["line"] = line
        super().__init__(message=message, error_code="CONFIG_ERROR", details=info)
        self.key = key
        self.line = line


class ShapeError(AppException, ValueError):
    """Tensor dimensions do not agree"""

    def __init__(self, message: str, shapes: Sequence[tuple] = ()):
        super().__init__(
            message=message,
            error_code="SHAPE_ERROR",
            details={"shapes": [list(s) for s in shapes]}
        )


class EmptyContextError(AppException, ValueError):
    """Attention was asked to attend over zero keys"""

    def __init__(self, message: str = "Attention context is empty (Lk == 0)"):
        super().__init__(message=message, error_code="EMPTY_CONTEXT")


class DegenerateInputError(AppException, ValueError):
    """Zero-norm vector where a direction is required"""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message=message, error_code="DEGENERATE_INPUT", details=details)


class NumericError(AppException, ArithmeticError):
    """Non-finite values reached a numerically sensitive op"""

    def __init__(self, message: str, op: str):
        super().__init__(message=message, error_code="NUMERIC_ERROR", details={"op": op})


class TargetIndexError(AppException, IndexError):
    """Class target outside the class set"""

    def __init__(self, target: int, n_classes: int):
        super().__init__(
            message=f"Target {target} out of range for {n_classes} classes",
            error_code="TARGET_OUT_OF_RANGE",
            details={"target": int(target), "n_classes": int(n_classes)}
        )


class ContractError(AppException, RuntimeError):
    """Caller broke an operation's precondition"""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message=message, error_code="CONTRACT_VIOLATION", details=details)


class TapeError(AppException, RuntimeError):
    """Gradient tape reused after backward"""

    def __init__(self, message: str = "Tape already consumed by a previous backward"):
        super().__init__(message=message, error_code="TAPE_CONSUMED")


class DeterminismError(AppException, RuntimeError):
    """Function under gradient check is not deterministic"""

    def __init__(self, first: float, second: float):
        super().__init__(
            message=f"Function is not deterministic: {first!r} != {second!r}",
            error_code="NON_DETERMINISTIC",
            details={"first": first, "second": second}
        )


class VocabularyError(AppException, KeyError):
    """Token missing from the embedding table"""

    def __init__(self, token: str):
        super().__init__(
            message=f"Token not in vocabulary: {token}",
            error_code="VOCABULARY_MISS",
            details={"token": token}
        )

    def __str__(self) -> str:
        return self.message


class SplitError(AppException, ValueError):
    """Seen/unseen split could not satisfy primitive coverage"""

    def __init__(self, message: str, primitive: Optional[str] = None):
        super().__init__(
            message=message,
            error_code="SPLIT_ERROR",
            details={"primitive": primitive} if primitive else {}
        )


class MetricError(AppException, ValueError):
    """Evaluation inputs cannot produce the requested metric"""

    def __init__(self, message: str, details: Optional[Dict] = None):
        super().__init__(message=message, error_code="METRIC_ERROR", details=details)


class CheckpointError(AppException, OSError):
    """Checkpoint could not be written, read, or verified"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(
            message=message,
            error_code="CHECKPOINT_ERROR",
            details={"path": path} if path else {}
        )


class ExperimentError(AppException, RuntimeError):
    """An experiment stage failed"""

    def __init__(self, message: str, stage: str, cause: Optional[BaseException] = None):
        details: Dict[str, Any] = {"stage": stage}
        if cause is not None:
            details["cause"] = type(cause).__name__
        super().__init__(message=message, error_code="EXPERIMENT_FAILED", details=details)
        self.stage = stage
        self.cause = cause


def is_config_error(exc: BaseException) -> bool:
    """True for config errors, including ones wrapped by a failing experiment stage"""
    if isinstance(exc, ConfigError):
        return True
    return isinstance(exc, ExperimentError) and isinstance(exc.cause, ConfigError)
