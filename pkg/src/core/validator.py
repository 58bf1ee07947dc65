import numpy as np

from src.schemas.exceptions import DimensionMismatchError, InvalidInputError


class ArrayValidator:
    """Handles shape and value checks shared by the numerical services."""

    # Absolute tolerance for treating a matrix as symmetric
    SYMMETRY_TOL = 1e-10

    @staticmethod
    def finite(array: np.ndarray, what: str) -> np.ndarray:
        """Return `array` as float64, rejecting NaN or infinite entries."""
        array = np.asarray(array, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise InvalidInputError(f"{what} contains non-finite values")
        return array

    @staticmethod
    def vector(array: np.ndarray, dim: int, what: str) -> np.ndarray:
        array = ArrayValidator.finite(array, what)
        if array.ndim != 1 or array.shape[0] != dim:
            raise DimensionMismatchError(
                f"{what} has shape {array.shape}, expected ({dim},)"
            )
        return array

    @staticmethod
    def rows(array: np.ndarray, dim: int, what: str) -> np.ndarray:
        """Validate a (count x dim) matrix; a single vector is promoted to one row."""
        array = ArrayValidator.finite(array, what)
        if array.ndim == 1:
            array = array.reshape(1, -1)
        if array.ndim != 2 or array.shape[1] != dim:
            raise DimensionMismatchError(
                f"{what} has shape {array.shape}, expected (n, {dim})"
            )
        return array

    @staticmethod
    def square(array: np.ndarray, what: str) -> np.ndarray:
        array = ArrayValidator.finite(array, what)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise DimensionMismatchError(f"{what} must be square, got shape {array.shape}")
        return array

    @staticmethod
    def symmetric(array: np.ndarray, what: str) -> np.ndarray:
        array = ArrayValidator.square(array, what)
        asymmetry = np.max(np.abs(array - array.T)) if array.size else 0.0
        if asymmetry > ArrayValidator.SYMMETRY_TOL:
            raise InvalidInputError(
                f"{what} is not symmetric (max asymmetry {asymmetry:.3e})"
            )
        return array

    @staticmethod
    def positive_int(value: int, what: str) -> int:
        if int(value) != value or value < 1:
            raise InvalidInputError(f"{what} must be a positive integer, got {value}")
        return int(value)

    @staticmethod
    def seed(value: int, what: str = "seed") -> int:
        if int(value) != value or value < 0:
            raise InvalidInputError(f"{what} must be a nonnegative integer, got {value}")
        return int(value)
