from typing import Any, Optional


class PurifierError(Exception):
    """Base class for every data or numerical error raised by the package."""

    def __init__(self, message: str, class_id: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.class_id = class_id

    def with_class(self, class_id: Any) -> 'PurifierError':
        """Attach the class being processed when the error surfaced."""
        self.class_id = str(class_id)
        return self

    def __str__(self) -> str:
        if self.class_id is not None:
            return f"[class {self.class_id}] {self.message}"
        return self.message


class ConfigError(PurifierError):
    pass


class MalformedFile(PurifierError):
    def __init__(self, path: str, reason: str):
        super().__init__(f"Malformed file {path}: {reason}")
        self.path = path
        self.reason = reason


class NonFiniteEntry(PurifierError):
    def __init__(self, row: int, column: int, path: Optional[str] = None):
        where = f" in {path}" if path else ""
        super().__init__(f"Non-finite entry at row {row}, column {column}{where}")
        self.row = row
        self.column = column


class DegenerateSample(PurifierError):
    def __init__(self, row: int):
        super().__init__(
            f"Sample at row {row} coincides with the clean reference mean"
        )
        self.row = row


class NumericalFailure(PurifierError):
    pass


class ZeroVariance(PurifierError):
    pass


class DegenerateObjective(PurifierError):
    def __init__(self, lambda_star: float):
        super().__init__(
            f"Residual objective {lambda_star:.3e} is below 1e-12; "
            "the class lies entirely inside the latent subspace"
        )
        self.lambda_star = lambda_star


class IndexOutOfRange(PurifierError):
    def __init__(self, index: int, size: int):
        super().__init__(f"Index {index} out of range for size {size}")
        self.index = index
        self.size = size


class TooFewSamples(PurifierError):
    def __init__(self, count: int, required: int):
        super().__init__(f"Need at least {required} samples, got {count}")
        self.count = count
        self.required = required


class TooFewClasses(PurifierError):
    def __init__(self, count: int, required: int = 3):
        super().__init__(f"Need at least {required} classes, got {count}")
        self.count = count
        self.required = required


class DegenerateInput(PurifierError):
    pass


class TooFewPoints(PurifierError):
    def __init__(self, count: int, k_nn: int):
        super().__init__(
            f"Neighborhood graph with k_nn={k_nn} needs at least "
            f"{k_nn + 1} points, got {count}"
        )
        self.count = count
        self.k_nn = k_nn


class Disconnected(PurifierError):
    pass


class DegenerateDistances(PurifierError):
    pass


class InfeasibleConfig(PurifierError):
    pass
