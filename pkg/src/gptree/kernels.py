"""Stationary covariance functions and the anisotropic product kernel.

Three one-dimensional kernels are supported (Gaussian, Matern 3/2 and
Matern 5/2).  A d-dimensional covariance is the product of one
one-dimensional factor per input coordinate, scaled by a signal variance:

    k(x, x') = sigma2 * prod_j k_1d(x_j, x'_j; l_j)

Hyperparameter derivatives are taken with respect to ``log(sigma2)`` and
``log(l_j)`` so that optimisers can work on an unconstrained space.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)


class KernelKind(str, enum.Enum):
    """Kernel family; the value is the config string."""

    GAUSSIAN = "gauss"
    MATERN32 = "matern3_2"
    MATERN52 = "matern5_2"

    @classmethod
    def parse(cls, value: "KernelKind | str") -> "KernelKind":
        if isinstance(value, KernelKind):
            return value
        try:
            return cls(value)
        except ValueError:
            allowed = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown kernel {value!r}; allowed: {allowed}") from None


@dataclass(frozen=True)
class KernelParams:
    """Signal variance and one length scale per input dimension."""

    signal_variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.array(self.lengthscales, dtype=float).reshape(-1)
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        if not self.signal_variance > 0:
            raise ValueError(f"signal variance must be positive, got {self.signal_variance}")
        if ls.size == 0 or not np.all(ls > 0):
            raise ValueError(f"length scales must be positive, got {ls}")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        """Pack as ``[log sigma2, log l_1, ..., log l_d]``."""
        return np.concatenate(([math.log(self.signal_variance)], np.log(self.lengthscales)))

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(math.exp(theta[0]), np.exp(theta[1:]))

    def __eq__(self, other):
        if not isinstance(other, KernelParams):
            return NotImplemented
        return (self.signal_variance == other.signal_variance
                and np.array_equal(self.lengthscales, other.lengthscales))

    def __hash__(self):
        return hash((self.signal_variance, self.lengthscales.tobytes()))


def _check_lengthscale(l):
    if not np.all(np.asarray(l) > 0):
        raise ValueError(f"length scale must be positive, got {l}")


def _factor(kind: KernelKind, r):
    """1D kernel as a function of the scaled distance r = |x - x'| / l."""
    if kind is KernelKind.GAUSSIAN:
        return np.exp(-0.5 * r * r)
    if kind is KernelKind.MATERN32:
        a = SQRT3 * r
        return (1.0 + a) * np.exp(-a)
    a = SQRT5 * r
    return (1.0 + a + a * a / 3.0) * np.exp(-a)


def _dlog_factor(kind: KernelKind, r):
    """(d k_1d / d log l) / k_1d as a function of r; finite everywhere."""
    if kind is KernelKind.GAUSSIAN:
        return r * r
    if kind is KernelKind.MATERN32:
        a = SQRT3 * r
        return a * a / (1.0 + a)
    a = SQRT5 * r
    return a * a * (1.0 + a) / (3.0 * (1.0 + a + a * a / 3.0))


def kernel_eval_1d(kind, x: float, x2: float, l: float) -> float:
    """One-dimensional kernel value, in (0, 1]."""
    kind = KernelKind.parse(kind)
    _check_lengthscale(l)
    return float(_factor(kind, abs(x - x2) / l))


def _validate(params: KernelParams, *dims):
    for d in dims:
        if d != params.dim:
            raise ValueError(f"dimension mismatch: input has {d} coordinates, "
                             f"kernel has {params.dim} length scales")


def kernel_eval(kind, x, x2, params: KernelParams) -> float:
    kind = KernelKind.parse(kind)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    _validate(params, x.size, x2.size)
    r = np.abs(x - x2) / params.lengthscales
    return params.signal_variance * float(np.prod(_factor(kind, r)))


_SCALE = {"gauss": 1.0, "matern3_2": SQRT3, "matern5_2": SQRT5}


def _scaled(kind: KernelKind, absdiff, lengthscales):
    return absdiff * (_SCALE[kind.value] / lengthscales)[:, None, None]


def _product(kind: KernelKind, a, signal_variance, ratios=None):
    """Product kernel from scaled distances ``a`` of shape (d, n1, n2).

    All dimensions share one ``exp`` call.  When ``ratios`` is given it is
    filled with ``(d k / d log l_j) / k`` per dimension.
    """
    if kind is KernelKind.GAUSSIAN:
        sq = np.multiply(a, a, out=ratios)
        K = np.exp(-0.5 * sq.sum(axis=0))
    else:
        poly = 1.0 + a
        if kind is KernelKind.MATERN32:
            if ratios is not None:
                np.multiply(a, a, out=ratios)
                ratios /= poly
        else:
            a2 = a * a
            if ratios is not None:
                np.multiply(a2, poly, out=ratios)
            poly += a2 / 3.0
            if ratios is not None:
                ratios /= 3.0 * poly
        K = np.exp(-a.sum(axis=0))
        K *= poly.prod(axis=0)
    K *= signal_variance
    return K


def cross_kernel(kind, X1, X2, params: KernelParams) -> np.ndarray:
    """Covariance block ``k(X1, X2)`` of shape (n1, n2)."""
    kind = KernelKind.parse(kind)
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    _validate(params, X1.shape[1], X2.shape[1])
    absdiff = np.abs(X1.T[:, :, None] - X2.T[:, None, :])
    return _product(kind, _scaled(kind, absdiff, params.lengthscales), params.signal_variance)


def kernel_matrix(kind, X, params: KernelParams, noise_variances) -> np.ndarray:
    """Noisy Gram matrix ``k(X, X) + diag(noise_variances)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    noise = np.asarray(noise_variances, dtype=float).reshape(-1)
    if noise.size != X.shape[0]:
        raise ValueError(f"{X.shape[0]} points but {noise.size} noise variances")
    if np.any(noise < 0):
        raise ValueError("noise variances must be non-negative")
    K = cross_kernel(kind, X, X, params)
    K[np.diag_indices_from(K)] += noise
    return K


def abs_differences(X) -> np.ndarray:
    """Per-dimension pairwise distances ``|X[a, j] - X[b, j]|``, shape (d, n, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.abs(X.T[:, :, None] - X.T[:, None, :])


def gram_with_log_grads(kind, X, params: KernelParams, absdiff=None):
    """Noise-free Gram matrix and its derivatives w.r.t. the log-parameters.

    Returns ``(K, dK)`` where ``dK[0] = K`` (log signal variance) and
    ``dK[1 + j]`` is the derivative with respect to ``log l_j``.  Pass
    ``absdiff`` from :func:`abs_differences` to reuse it across calls.
    """
    kind = KernelKind.parse(kind)
    if absdiff is None:
        absdiff = abs_differences(X)
    d, n, _ = absdiff.shape
    _validate(params, d)
    dK = np.empty((d + 1, n, n))
    K = _product(kind, _scaled(kind, absdiff, params.lengthscales),
                 params.signal_variance, ratios=dK[1:])
    dK[1:] *= K
    dK[0] = K
    return K, dK


def kernel_param_grad(kind, x, x2, params: KernelParams) -> np.ndarray:
    """Gradient of ``kernel_eval`` w.r.t. ``(log sigma2, log l_1..l_d)``."""
    kind = KernelKind.parse(kind)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    _validate(params, x.size, x2.size)
    r = np.abs(x - x2) / params.lengthscales
    k = params.signal_variance * float(np.prod(_factor(kind, r)))
    return np.concatenate(([k], k * _dlog_factor(kind, r)))
