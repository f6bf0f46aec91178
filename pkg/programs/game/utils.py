import logging

import numpy as np
import scipy.linalg
from colorama import Fore

from programs.game.errors import DimensionMismatch, SingularMatrix


class ColoredFormatter(logging.Formatter):
    """
    Formats records as "[LEVEL] message" with a colored tag,
    the same way our scripts print "[ERROR]" and "[INFO]" lines.
    """

    COLORS = {
        logging.DEBUG: Fore.CYAN,
        logging.INFO: Fore.BLUE,
        logging.WARNING: Fore.YELLOW,
        logging.ERROR: Fore.RED,
        logging.CRITICAL: Fore.RED,
    }

    def format(self, record):
        color = self.COLORS.get(record.levelno, Fore.RESET)
        tag = color + f"[{record.levelname}]" + Fore.RESET
        return f"{tag} {record.getMessage()}"


def setup_logging(level=logging.INFO):
    """
    Attaches one colored stream handler to the "programs" logger.
    Calling it again only changes the level.

    Parameters
    ----------
    level : int
        Logging level of the package logger.

    Returns
    -------
    logging.Logger
        The package logger.
    """
    logger = logging.getLogger("programs")
    logger.setLevel(level)
    if not any(getattr(h, "_programs_handler", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(ColoredFormatter())
        handler._programs_handler = True
        logger.addHandler(handler)
    return logger


def as_matrix(value, name, shape=None):
    """
    Converts nested sequences to a 2-d float array and checks its shape.

    Parameters
    ----------
    value : array_like
        Matrix entries, scalars are promoted to 1x1.
    name : str
        Name used in error messages.
    shape : tuple, optional
        Expected (rows, columns); None entries are not checked.

    Returns
    -------
    numpy.ndarray
        Float matrix.
    """
    matrix = np.array(value, dtype=float, ndmin=2)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got {matrix.ndim} dims")
    if shape is not None:
        for axis, expected in enumerate(shape):
            if expected is not None and matrix.shape[axis] != expected:
                raise DimensionMismatch(
                    f"{name} has shape {matrix.shape}, expected "
                    f"{tuple('*' if s is None else s for s in shape)}")
    return matrix


def as_vector(value, name, size=None):
    """
    Flattens value to a 1-d float array and checks its length.
    States and inputs are accepted as scalars, lists or column matrices.

    Parameters
    ----------
    value : array_like
        Vector entries.
    name : str
        Name used in error messages.
    size : int, optional
        Expected length.

    Returns
    -------
    numpy.ndarray
        Float vector.
    """
    vector = np.array(value, dtype=float).reshape(-1)
    if size is not None and vector.shape[0] != size:
        raise DimensionMismatch(
            f"{name} has length {vector.shape[0]}, expected {size}")
    return vector


def symmetrize(matrix):
    """
    Symmetric part (M + M') / 2 of a square matrix.
    We apply it after every Riccati or Lyapunov update so that value
    matrices stay exactly symmetric.
    """
    return (matrix + matrix.T) / 2


def read_only(matrix):
    """Float copy of matrix with the write flag cleared."""
    matrix = np.array(matrix, dtype=float)
    matrix.setflags(write=False)
    return matrix


def spectral_radius(matrix):
    """Largest eigenvalue modulus, 0 for an empty matrix."""
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(matrix))))


def min_eigenvalue(matrix):
    """Smallest eigenvalue of the symmetric part of matrix."""
    return float(scipy.linalg.eigvalsh(symmetrize(matrix))[0])


def solve(lhs, rhs, what="matrix"):
    """
    Solves lhs @ X = rhs, turning a singular lhs into SingularMatrix.
    """
    try:
        return np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as err:
        raise SingularMatrix(f"{what} is singular") from err


def frobenius(matrix):
    return float(np.linalg.norm(matrix, "fro"))


def relative_error(estimate, reference):
    """
    Frobenius error of estimate relative to reference, absolute when the
    reference is zero.
    """
    scale = frobenius(reference)
    error = frobenius(np.asarray(estimate) - np.asarray(reference))
    return error / scale if scale > 0 else error
