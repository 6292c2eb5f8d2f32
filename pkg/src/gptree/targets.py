"""Benchmark target functions.

Every target maps a point of the unit cube ``[0, 1]^d`` to ``(y, y_var)``;
the point is first rescaled to the function's native box.  The raw
functions on native coordinates are exposed as well.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

EGGHOLDER_SHIFT = 960.6407


def rosenbrock_nd(x) -> float:
    """Sum of 2D Rosenbrock terms over consecutive coordinate pairs.

    Accepts a single point or an array of points along the last axis.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ValueError("rosenbrock needs at least two coordinates")
    a, b = x[..., :-1], x[..., 1:]
    out = np.sum((1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2, axis=-1)
    return float(out) if out.ndim == 0 else out


def eggholder_2d(a, b):
    """Shifted Eggholder function; at least 1 on ``[-512, 512]^2``."""
    c = np.asarray(b, dtype=float) + 47.0
    a = np.asarray(a, dtype=float)
    out = (-c * np.sin(np.sqrt(np.abs(0.5 * a + c)))
           - a * np.sin(np.sqrt(np.abs(a - c)))
           + EGGHOLDER_SHIFT)
    return float(out) if out.ndim == 0 else out


def eggholder_4d(x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise ValueError("eggholder_4d takes 4 coordinates")
    out = sum(eggholder_2d(x[..., i], x[..., i + 1]) for i in range(3))
    return float(out) if np.ndim(out) == 0 else out


def robot_arm_8d(theta, L) -> float:
    """``1000 * g + 1`` with g the distance of a planar 4-segment arm's tip
    from its base; segment i points at the cumulative angle theta_1+..+theta_i."""
    theta = np.asarray(theta, dtype=float)
    L = np.asarray(L, dtype=float)
    if theta.shape[-1] != 4 or L.shape[-1] != 4:
        raise ValueError("robot_arm_8d takes 4 angles and 4 lengths")
    angles = np.cumsum(theta, axis=-1)
    u = np.sum(L * np.cos(angles), axis=-1)
    v = np.sum(L * np.sin(angles), axis=-1)
    out = 1000.0 * np.sqrt(u * u + v * v) + 1.0
    return float(out) if np.ndim(out) == 0 else out


def higdon_value(x) -> float:
    return math.sin(2 * math.pi * x) + 0.2 * math.sin(8 * math.pi * x)


def higdon_1d(x: float, rng: Optional[np.random.Generator] = None) -> Tuple[float, float]:
    """Noisy 1D test function with noise sd 0.1; ``rng=None`` suppresses the noise."""
    eps = 0.0 if rng is None else rng.standard_normal()
    return higdon_value(float(x)) + 0.1 * eps, 0.01


class Target:
    """Base class: subclasses set ``tag``, ``lower``, ``upper`` and ``native``."""

    tag = ""
    lower: np.ndarray
    upper: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.size

    def native(self, z: np.ndarray) -> Tuple[float, float]:
        raise NotImplementedError

    def __call__(self, x_unit) -> Tuple[float, float]:
        return self.native(unit_rescale(x_unit, self))

    def __repr__(self):
        return f"{type(self).__name__}({self.tag!r})"


class RosenbrockND(Target):
    def __init__(self, n: int):
        if n < 2:
            raise ValueError("rosenbrock needs n >= 2")
        self.tag = f"rosenbrock{n}d"
        self.lower = np.full(n, -5.0)
        self.upper = np.full(n, 10.0)

    def native(self, z):
        return rosenbrock_nd(z), 0.0


class Eggholder4D(Target):
    tag = "eggholder4d"

    def __init__(self):
        self.lower = np.full(4, -512.0)
        self.upper = np.full(4, 512.0)

    def native(self, z):
        return eggholder_4d(z), 0.0


class RobotArm8D(Target):
    """Unit coordinates 1-4 are angles in [0, 2 pi], 5-8 segment lengths in [0, 1]."""

    tag = "robotarm8d"

    def __init__(self):
        self.lower = np.zeros(8)
        self.upper = np.array([2 * math.pi] * 4 + [1.0] * 4)

    def native(self, z):
        return robot_arm_8d(z[:4], z[4:]), 0.0


class Higdon1D(Target):
    tag = "higdon1d"

    def __init__(self, seed: Optional[int] = 0):
        self.lower = np.zeros(1)
        self.upper = np.ones(1)
        self.rng = None if seed is None else np.random.default_rng(seed)

    def native(self, z):
        return higdon_1d(z[0], self.rng)


class Noisy(Target):
    """Multiplicative Gaussian noise: ``y (1 + relative_sd * eps)``."""

    def __init__(self, inner: Target, relative_sd: float, seed: int = 0):
        if relative_sd < 0:
            raise ValueError("relative_sd must be non-negative")
        self.inner = inner
        self.relative_sd = float(relative_sd)
        self.rng = np.random.default_rng(seed)
        self.tag = inner.tag
        self.lower, self.upper = inner.lower, inner.upper

    def native(self, z):
        y, y_var = self.inner.native(z)
        if self.relative_sd == 0.0:
            return y, y_var
        eps = self.rng.standard_normal()
        return y * (1.0 + self.relative_sd * eps), y_var + (self.relative_sd * y) ** 2


def add_noise(inner: Target, relative_sd: float, seed: int = 0) -> Target:
    return Noisy(inner, relative_sd, seed)


def unit_rescale(x_unit, target: Target) -> np.ndarray:
    """Affine map from the unit cube to the target's native box."""
    x = np.atleast_1d(np.asarray(x_unit, dtype=float))
    if x.size != target.dim:
        raise ValueError(f"{target.tag} takes {target.dim} coordinates, got {x.size}")
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise ValueError(f"unit coordinates must lie in [0, 1], got {x}")
    return target.lower + x * (target.upper - target.lower)


TARGET_TAGS = ("rosenbrock4d", "rosenbrock8d", "eggholder4d", "robotarm8d", "higdon1d")


def make_target(tag: str, noise: float = 0.0, seed: int = 0) -> Target:
    """Target by config tag, optionally wrapped with relative noise."""
    if tag == "rosenbrock4d":
        t = RosenbrockND(4)
    elif tag == "rosenbrock8d":
        t = RosenbrockND(8)
    elif tag == "eggholder4d":
        t = Eggholder4D()
    elif tag == "robotarm8d":
        t = RobotArm8D()
    elif tag == "higdon1d":
        t = Higdon1D(seed)
    else:
        raise ValueError(f"unknown target {tag!r}; allowed: {', '.join(TARGET_TAGS)}")
    if noise:
        t = Noisy(t, noise, seed + 1)
    return t
