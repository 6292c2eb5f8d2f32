"""Exact Gaussian-process regression on a small data set.

The GP has a constant prior mean ``m`` and the anisotropic product kernel
from :mod:`gptree.kernels`.  Observations carry known per-point noise
variances which are added to the diagonal of the Gram matrix.

Hyperparameters ``(log sigma2, log l_1..l_d, m)`` are fitted by maximising
the log marginal likelihood with L-BFGS-B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.optimize import minimize

from gptree.kernels import (
    KernelKind,
    KernelParams,
    abs_differences,
    cross_kernel,
    gram_with_log_grads,
    kernel_matrix,
)

LOG_2PI = math.log(2.0 * math.pi)

#: Relative jitter levels tried (times the mean diagonal) when a
#: factorisation fails.  The first entry means "no jitter".
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

MAX_ITER = 100
GTOL = 1e-5
FTOL = 1e-9

SPREAD_FLOOR = 1e-3
VARIANCE_FLOOR = 1e-8
INIT_LENGTHSCALE_FRACTION = 0.3
LENGTHSCALE_BOUNDS = (1e-4, 1e3)  # relative to the per-dimension data spread
SIGNAL_VARIANCE_RANGE = 1e8  # bounds are [v / range, v * range] around var(y)

WarmStart = Tuple[KernelParams, float]


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorisation failed at every jitter level."""

    def __init__(self, jitters):
        self.jitters = tuple(jitters)
        super().__init__(
            "covariance matrix is not positive definite; tried jitter "
            + ", ".join(f"{j:.0e}" for j in self.jitters)
        )


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (N x d), targets ``y`` and observation variances ``y_var``."""

    X: np.ndarray
    y: np.ndarray
    y_var: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.array(self.y, dtype=float).reshape(-1)
        y_var = np.array(self.y_var, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] != y.size or y.size != y_var.size:
            raise ValueError(
                f"inconsistent dataset shapes: X {X.shape}, y {y.shape}, y_var {y_var.shape}")
        if y.size == 0:
            raise ValueError("dataset must hold at least one point")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(y_var))):
            raise ValueError("dataset contains non-finite entries")
        if np.any(y_var < 0):
            raise ValueError("observation variances must be non-negative")
        for a in (X, y, y_var):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_var", y_var)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def merged(self, added: Optional["Dataset"] = None,
               removed_indices: Sequence[int] = ()) -> "Dataset":
        """Drop ``removed_indices`` then append ``added``."""
        keep = np.ones(self.n, dtype=bool)
        removed = np.asarray(removed_indices, dtype=int)
        if removed.size:
            if removed.min() < -self.n or removed.max() >= self.n:
                raise IndexError(f"removed index out of range for {self.n} points")
            keep[removed] = False
        X, y, y_var = self.X[keep], self.y[keep], self.y_var[keep]
        if added is not None:
            X = np.vstack([X, added.X])
            y = np.concatenate([y, added.y])
            y_var = np.concatenate([y_var, added.y_var])
        return Dataset(X, y, y_var)


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class TrainedGP:
    """A fitted GP with its cached Cholesky factor and weight vector.

    ``chol`` is the lower Cholesky factor of ``Sigma + diag(y_var) + jitter*I``
    and ``alpha`` solves that system against ``y - mean_const``.
    """

    dataset: Dataset
    kind: KernelKind
    params: KernelParams
    mean_const: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    jitter: float = 0.0
    lml: float = float("nan")
    converged: bool = True
    n_iter: int = 0

    def predict(self, x_star) -> Prediction:
        x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
        if x_star.size != self.dataset.dim:
            raise ValueError(f"expected a {self.dataset.dim}-vector, got {x_star.size} coordinates")
        mean, var = self.predict_many(x_star.reshape(1, -1))
        return Prediction(float(mean[0]), float(var[0]))

    def predict_many(self, X_star) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior means and variances at the rows of ``X_star``."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        k = cross_kernel(self.kind, X_star, self.dataset.X, self.params)
        mean = self.mean_const + k @ self.alpha
        v = solve_triangular(self.chol, k.T, lower=True, check_finite=False)
        var = self.params.signal_variance - np.einsum("ij,ij->j", v, v)
        return mean, np.maximum(var, 0.0)

    @property
    def lengthscales(self) -> np.ndarray:
        return self.params.lengthscales


def _cholesky(K: np.ndarray):
    """Lower Cholesky factor with escalating diagonal jitter.

    Returns ``(L, jitter)`` where ``jitter`` is the absolute amount added.
    """
    scale = float(np.mean(np.diag(K)))
    tried = []
    for level in JITTER_LEVELS:
        jitter = level * scale
        if jitter:
            A = K.copy()
            A[np.diag_indices_from(A)] += jitter
        else:
            A = K
        L, info = lapack.dpotrf(A, lower=1, clean=1)
        if info == 0:
            return L, jitter
        tried.append(level)
    raise FactorizationError(tried)


def _inverse_from_chol(L: np.ndarray) -> np.ndarray:
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError([])
    return np.tril(inv) + np.tril(inv, -1).T


def log_marginal_likelihood(dataset: Dataset, kind, params: KernelParams, mean_const: float):
    """Log marginal likelihood and its gradient.

    The gradient is ordered ``(log sigma2, log l_1..l_d, mean_const)``.
    """
    kind = KernelKind.parse(kind)
    value, grad, _ = _lml_terms(dataset, kind, params, mean_const)
    return value, grad


def _lml_terms(dataset: Dataset, kind: KernelKind, params: KernelParams, mean_const: float,
               absdiff=None):
    K, dK = gram_with_log_grads(kind, dataset.X, params, absdiff)
    K[np.diag_indices_from(K)] += dataset.y_var
    L, jitter = _cholesky(K)
    r = dataset.y - mean_const
    alpha = lapack.dpotrs(L, r, lower=1)[0]
    n = dataset.n
    value = -0.5 * float(r @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * LOG_2PI
    W = np.outer(alpha, alpha) - _inverse_from_chol(L)
    g_theta = 0.5 * (dK.reshape(dK.shape[0], -1) @ W.reshape(-1))
    grad = np.concatenate((g_theta, [float(np.sum(alpha))]))
    return value, grad, (L, alpha, jitter)


def _spreads(X: np.ndarray) -> np.ndarray:
    return np.maximum(X.max(axis=0) - X.min(axis=0), SPREAD_FLOOR)


def initial_params(dataset: Dataset) -> WarmStart:
    """Deterministic, scale-aware starting point used when no warm start is given."""
    spread = _spreads(dataset.X)
    var = max(float(np.var(dataset.y)), VARIANCE_FLOOR)
    params = KernelParams(var, INIT_LENGTHSCALE_FRACTION * spread)
    return params, float(np.mean(dataset.y))


def _finalize(dataset, kind, params, mean_const, lml=None, converged=True, n_iter=0) -> TrainedGP:
    K = kernel_matrix(kind, dataset.X, params, dataset.y_var)
    L, jitter = _cholesky(K)
    alpha = lapack.dpotrs(L, dataset.y - mean_const, lower=1)[0]
    for a in (L, alpha):
        a.setflags(write=False)
    if lml is None:
        lml = log_marginal_likelihood(dataset, kind, params, mean_const)[0]
    return TrainedGP(dataset, kind, params, float(mean_const), L, alpha, jitter,
                     float(lml), converged, n_iter)


def fit(dataset: Dataset, kind, warm_start: Optional[WarmStart] = None,
        max_iter: int = MAX_ITER) -> TrainedGP:
    """Fit hyperparameters by maximising the log marginal likelihood.

    Parameters
    ----------
    dataset : Dataset
    kind : KernelKind or str
    warm_start : (KernelParams, float), optional
        Starting hyperparameters and prior mean.  Clipped into the bounds
        implied by the data spread.
    max_iter : int
        L-BFGS-B iteration cap.

    Returns
    -------
    TrainedGP
        ``converged`` is False when the iteration cap was hit or the line
        search gave up; the best iterate is returned in either case.
    """
    kind = KernelKind.parse(kind)
    params0, m0 = warm_start if warm_start is not None else initial_params(dataset)
    if params0.dim != dataset.dim:
        raise ValueError(f"warm start has {params0.dim} length scales for {dataset.dim}-d data")

    if dataset.n == 1:
        # a single point fixes only the mean; length scales stay frozen
        return _finalize(dataset, kind, params0, float(dataset.y[0]))

    spread = _spreads(dataset.X)
    var_ref = max(float(np.var(dataset.y)), VARIANCE_FLOOR)
    lower = np.concatenate(([math.log(var_ref / SIGNAL_VARIANCE_RANGE)],
                            np.log(LENGTHSCALE_BOUNDS[0] * spread)))
    upper = np.concatenate(([math.log(var_ref * SIGNAL_VARIANCE_RANGE)],
                            np.log(LENGTHSCALE_BOUNDS[1] * spread)))
    # the mean is optimised in units of the target spread around the sample mean
    y_mid = float(np.mean(dataset.y))
    y_scale = max(float(np.std(dataset.y)), math.sqrt(VARIANCE_FLOOR))

    theta0 = np.clip(params0.to_log(), lower, upper)
    z0 = np.concatenate((theta0, [(m0 - y_mid) / y_scale]))
    bounds = list(zip(lower, upper)) + [(None, None)]

    absdiff = abs_differences(dataset.X)

    def unpack(z):
        return KernelParams.from_log(z[:-1]), y_mid + y_scale * z[-1]

    def objective(z):
        params, m = unpack(z)
        try:
            value, grad, _ = _lml_terms(dataset, kind, params, m, absdiff)
        except FactorizationError:
            return 1e300, np.zeros_like(z)
        grad = grad.copy()
        grad[-1] *= y_scale
        return -value, -grad

    f0, _ = objective(z0)
    res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "gtol": GTOL, "ftol": FTOL})
    z_best, f_best = res.x, float(res.fun)
    if not f_best <= f0:
        z_best, f_best = z0, f0
    params, m = unpack(z_best)
    converged = bool(res.success)
    return _finalize(dataset, kind, params, m, lml=-f_best if f_best < 1e300 else None,
                     converged=converged, n_iter=int(res.nit))


def retrain(gp: TrainedGP, added: Optional[Dataset] = None,
            removed_indices: Sequence[int] = ()) -> TrainedGP:
    """Refit on the modified data set, warm-started from ``gp``."""
    dataset = gp.dataset.merged(added, removed_indices)
    return fit(dataset, gp.kind, warm_start=(gp.params, gp.mean_const))


def predict(gp: TrainedGP, x_star) -> Prediction:
    return gp.predict(x_star)


class ExactGPBackend:
    """The leaf-GP engine the tree talks to.

    Any object with the same four methods can be substituted.
    """

    name = "internal"

    def __init__(self, kind):
        self.kind = KernelKind.parse(kind)

    def fit(self, dataset: Dataset, warm_start: Optional[WarmStart] = None) -> TrainedGP:
        return fit(dataset, self.kind, warm_start)

    def retrain(self, gp: TrainedGP, added=None, removed_indices=()) -> TrainedGP:
        return retrain(gp, added, removed_indices)

    def predict(self, gp: TrainedGP, x_star) -> Prediction:
        return gp.predict(x_star)

    def hyperparameters(self, gp: TrainedGP) -> WarmStart:
        return gp.params, gp.mean_const


BACKENDS = {"internal": ExactGPBackend}
