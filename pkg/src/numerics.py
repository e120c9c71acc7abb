"""Numerically stable special functions and vector primitives."""

import math
from typing import Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.special import expit

RealVec = npt.NDArray[np.float64]
ArrayLike = Union[float, npt.ArrayLike]

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)

# Below this argument the polygamma functions are shifted up by recurrence
_ASYMPTOTIC_THRESHOLD = 6.0

# Bernoulli terms B_2k / 2k of the digamma asymptotic series
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# Bernoulli terms B_2k of the trigamma asymptotic series
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def as_real_vec(values: ArrayLike, name: str = "vector") -> RealVec:
    """
    Convert values into a read-only vector of finite 64-bit reals.

    Args:
        values: Sequence or array of reals
        name: Name used in error messages

    Returns:
        Read-only float64 array

    Raises:
        ValueError: If any element is NaN or infinite
    """
    arr = np.array(values, dtype=np.float64)

    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")

    arr.setflags(write=False)

    return arr


def _checked(x: ArrayLike, name: str, positive: bool = False) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)

    if np.any(np.isnan(arr)):
        raise ValueError(f"{name}: NaN argument")

    if positive:
        if np.any(arr <= 0.0):
            raise ValueError(f"{name} is undefined for arguments <= 0")

        if np.any(np.isinf(arr)):
            raise ValueError(f"{name}: infinite argument")

    return arr


def _unwrap(result: np.ndarray, x: ArrayLike) -> Union[float, np.ndarray]:
    if np.ndim(x) == 0:
        return float(np.reshape(result, -1)[0])

    return result


def _lanczos_log_gamma(x: np.ndarray) -> np.ndarray:
    z = x - 1.0
    series = np.full_like(z, _LANCZOS_COEFFICIENTS[0])

    for i, coefficient in enumerate(_LANCZOS_COEFFICIENTS[1:], start=1):
        series += coefficient / (z + i)

    t = z + _LANCZOS_G + 0.5

    return _HALF_LOG_TWO_PI + (z + 0.5) * np.log(t) - t + np.log(series)


def log_gamma(x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Natural logarithm of the gamma function for positive arguments.

    Uses the Lanczos approximation for x >= 0.5 and the reflection formula below it.

    Args:
        x: Positive real or array of positive reals

    Returns:
        ln Gamma(x), same shape as x

    Raises:
        ValueError: If any argument is <= 0, NaN or infinite
    """
    arr = np.atleast_1d(_checked(x, "log_gamma", positive=True))
    out = np.empty_like(arr)
    small = arr < 0.5

    out[~small] = _lanczos_log_gamma(arr[~small])

    reflected = arr[small]
    out[small] = _LOG_PI - np.log(np.sin(math.pi * reflected)) - _lanczos_log_gamma(1.0 - reflected)

    return _unwrap(out, x)


def _shift_up(arr: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the polygamma recurrence until every argument reaches the asymptotic range."""
    shifted = np.atleast_1d(arr).copy()
    correction = np.zeros_like(shifted)
    pending = shifted < _ASYMPTOTIC_THRESHOLD

    while np.any(pending):
        if order == 0:
            correction[pending] -= 1.0 / shifted[pending]
        else:
            correction[pending] += 1.0 / shifted[pending] ** 2

        shifted[pending] += 1.0
        pending = shifted < _ASYMPTOTIC_THRESHOLD

    return shifted, correction


def digamma(x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Digamma function psi(x) = d/dx ln Gamma(x) for positive arguments.

    Args:
        x: Positive real or array of positive reals

    Returns:
        psi(x), same shape as x

    Raises:
        ValueError: If any argument is <= 0, NaN or infinite
    """
    arr = _checked(x, "digamma", positive=True)
    y, correction = _shift_up(arr, order=0)

    inv_sq = 1.0 / (y * y)
    series = np.zeros_like(y)

    for coefficient in reversed(_DIGAMMA_SERIES):
        series = (series + coefficient) * inv_sq

    return _unwrap(np.log(y) - 0.5 / y - series + correction, x)


def trigamma(x: ArrayLike) -> Union[float, np.ndarray]:
    """
    Trigamma function psi'(x) for positive arguments.

    Args:
        x: Positive real or array of positive reals

    Returns:
        psi'(x), same shape as x

    Raises:
        ValueError: If any argument is <= 0, NaN or infinite
    """
    arr = _checked(x, "trigamma", positive=True)
    y, correction = _shift_up(arr, order=1)

    inv_sq = 1.0 / (y * y)
    series = np.zeros_like(y)

    for coefficient in reversed(_TRIGAMMA_SERIES):
        series = (series + coefficient) * inv_sq

    return _unwrap(1.0 / y + 0.5 * inv_sq + series / y + correction, x)


def l2_norm(v: ArrayLike) -> Union[float, np.ndarray]:
    """
    Euclidean norm over the last axis.

    Args:
        v: Vector, or stack of vectors along the last axis

    Returns:
        Norm of v (array of norms for stacked input)

    Raises:
        ValueError: If the vectors are empty or contain NaN
    """
    arr = _checked(v, "l2_norm")

    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ValueError("l2_norm requires a nonempty vector")

    # scaled by the largest entry so squares cannot overflow
    peak = np.max(np.abs(arr), axis=-1)
    safe = np.where((peak > 0.0) & np.isfinite(peak), peak, 1.0)

    with np.errstate(over="ignore"):
        norms = safe * np.sqrt(np.sum((arr / safe[..., np.newaxis]) ** 2, axis=-1))

    return _unwrap(np.where(np.isinf(peak), np.inf, norms), arr[..., 0])


def softplus(x: ArrayLike) -> Union[float, np.ndarray]:
    """Overflow-safe ln(1 + exp(x))."""
    arr = _checked(x, "softplus")

    return _unwrap(np.logaddexp(0.0, arr), x)


def softplus_grad(x: ArrayLike) -> Union[float, np.ndarray]:
    """Derivative of softplus, the logistic function."""
    arr = _checked(x, "softplus_grad")

    return _unwrap(expit(arr), x)


def inverse_softplus(y: ArrayLike) -> Union[float, np.ndarray]:
    """Inverse of softplus for positive targets."""
    arr = _checked(y, "inverse_softplus", positive=True)

    return _unwrap(arr + np.log(-np.expm1(-arr)), y)
