"""Input-point streams on the unit cube.

Streams are plain iterators over d-vectors.  ``next_point()`` returns
``None`` once a finite stream is exhausted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional

import numpy as np

from gptree.targets import make_target

DE_F = 0.8
DE_CR = 0.9


class StreamParseError(ValueError):
    def __init__(self, path, line, message):
        self.path, self.line = path, line
        super().__init__(f"{path}:{line}: {message}")


class Stream:
    dim: int

    def __iter__(self) -> Iterator[np.ndarray]:
        return self

    def __next__(self) -> np.ndarray:
        raise NotImplementedError

    def next_point(self) -> Optional[np.ndarray]:
        try:
            return next(self)
        except StopIteration:
            return None

    def take(self, n: int) -> np.ndarray:
        rows = []
        for _ in range(n):
            p = self.next_point()
            if p is None:
                break
            rows.append(p)
        return np.array(rows).reshape(len(rows), self.dim)


class UniformStream(Stream):
    """I.i.d. uniform points; endless unless ``n_points`` is given."""

    def __init__(self, dim: int, seed: int = 0, n_points: Optional[int] = None):
        self.dim = dim
        self.rng = np.random.default_rng(seed)
        self.remaining = n_points

    def __next__(self):
        if self.remaining is not None:
            if self.remaining <= 0:
                raise StopIteration
            self.remaining -= 1
        return self.rng.random(self.dim)


@dataclass
class DEResult:
    trace: np.ndarray
    best_x: np.ndarray
    best_value: float
    best_per_generation: List[float]


def iter_de(loss: Callable, dim: int, population: int, iterations: int,
            F: float = DE_F, CR: float = DE_CR, seed: int = 0):
    """DE/rand/1/bin on ``[0, 1]^dim`` with clipping at the box edges.

    Yields ``(points, losses, best_so_far)`` per generation: first the
    initial population, then each generation's trial vectors, in
    evaluation order.
    """
    if population < 4:
        raise ValueError("differential evolution needs population >= 4")
    rng = np.random.default_rng(seed)
    pop = rng.random((population, dim))
    fit = np.array([loss(p) for p in pop], dtype=float)
    yield pop.copy(), fit.copy(), float(fit.min())
    others = np.arange(population - 1)
    for _ in range(iterations):
        trials = np.empty_like(pop)
        for i in range(population):
            r = rng.choice(others, 3, replace=False)
            r[r >= i] += 1
            mutant = pop[r[0]] + F * (pop[r[1]] - pop[r[2]])
            cross = rng.random(dim) < CR
            cross[rng.integers(dim)] = True
            trials[i] = np.clip(np.where(cross, mutant, pop[i]), 0.0, 1.0)
        trial_fit = np.array([loss(t) for t in trials], dtype=float)
        better = trial_fit <= fit
        pop[better] = trials[better]
        fit[better] = trial_fit[better]
        yield trials, trial_fit, float(fit.min())


def de_minimize(loss: Callable, dim: int, population: int, iterations: int,
                F: float = DE_F, CR: float = DE_CR, seed: int = 0) -> DEResult:
    """Run DE and return every evaluated point plus the best found."""
    chunks, values, best = [], [], []
    for points, losses, best_so_far in iter_de(loss, dim, population, iterations, F, CR, seed):
        chunks.append(points)
        values.append(losses)
        best.append(best_so_far)
    trace = np.vstack(chunks)
    values = np.concatenate(values)
    i = int(np.argmin(values))
    return DEResult(trace, trace[i].copy(), float(values[i]), best)


def loss_from_tag(tag: str) -> Callable:
    """Loss on unit coordinates, e.g. ``"rosenbrock4d"``."""
    target = make_target(tag)
    return lambda x: target(x)[0]


class DEStream(Stream):
    """Points visited by differential evolution minimising ``loss``."""

    def __init__(self, loss, dim: int, population: int = 1000, iterations: int = 300,
                 F: float = DE_F, CR: float = DE_CR, seed: int = 0):
        if isinstance(loss, str):
            loss = loss_from_tag(loss)
        self.dim = dim
        self._gen = iter_de(loss, dim, population, iterations, F, CR, seed)
        self._buffer = iter(())

    def __next__(self):
        while True:
            p = next(self._buffer, None)
            if p is not None:
                return p
            points, _, _ = next(self._gen)
            self._buffer = iter(points)


class ReplayStream(Stream):
    """Points read back from a stream CSV file."""

    def __init__(self, path):
        self.path = str(path)
        self.points = read_stream_csv(path)
        self.dim = self.points.shape[1]
        self._i = 0

    def __next__(self):
        if self._i >= len(self.points):
            raise StopIteration
        p = self.points[self._i]
        self._i += 1
        return p.copy()


def write_stream_csv(points, path) -> int:
    """Write points with a ``x1,...,xd`` header, 17 significant digits."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(points.shape[1])])
        for p in points:
            w.writerow([f"{v:.17g}" for v in p])
    return len(points)


def read_stream_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise StreamParseError(path, 1, "empty file")
    header = rows[0]
    if not header or header != [f"x{j + 1}" for j in range(len(header))]:
        raise StreamParseError(path, 1, f"expected header x1,...,xd, got {','.join(header)}")
    d = len(header)
    out = np.empty((len(rows) - 1, d))
    for k, row in enumerate(rows[1:]):
        line = k + 2
        if len(row) != d:
            raise StreamParseError(path, line, f"expected {d} fields, got {len(row)}")
        try:
            out[k] = [float(v) for v in row]
        except ValueError as exc:
            raise StreamParseError(path, line, str(exc)) from None
        if not np.all(np.isfinite(out[k])):
            raise StreamParseError(path, line, "non-finite coordinate")
    return out


STREAM_KEYS = {
    "uniform": {"dim", "seed", "n_points"},
    "de": {"loss", "dim", "population", "iterations", "F", "CR", "seed"},
    "replay": {"path"},
}
REQUIRED_KEYS = {"uniform": {"dim"}, "de": {"loss"}, "replay": {"path"}}


def validate_stream_spec(spec: dict) -> None:
    """Raise ``ValueError`` naming the offending ``stream.*`` field."""
    kind = spec.get("kind")
    if kind not in STREAM_KEYS:
        raise ValueError(f"stream.kind: invalid value {kind!r}; allowed: {', '.join(STREAM_KEYS)}")
    unknown = set(spec) - STREAM_KEYS[kind] - {"kind"}
    if unknown:
        raise ValueError(f"stream: unknown keys for kind {kind!r}: {', '.join(sorted(unknown))}")
    missing = REQUIRED_KEYS[kind] - set(spec)
    if missing:
        raise ValueError(f"stream.{sorted(missing)[0]}: required for kind {kind!r}")
    for key in ("dim", "population", "iterations", "n_points"):
        v = spec.get(key)
        if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 0):
            raise ValueError(f"stream.{key}: must be a non-negative integer, got {v!r}")
    if kind == "de":
        make_target(spec["loss"])
        if spec.get("population", 4) < 4:
            raise ValueError("stream.population: must be >= 4")


def make_stream(spec: dict) -> Stream:
    """Build a stream from a config section.

    ``{"kind": "uniform", "dim": 4, "seed": 0}``,
    ``{"kind": "de", "loss": "rosenbrock4d", "population": 100, "iterations": 50, "seed": 0}``
    or ``{"kind": "replay", "path": "stream.csv"}``.
    """
    validate_stream_spec(spec)
    kind = spec["kind"]
    if kind == "uniform":
        return UniformStream(spec["dim"], spec.get("seed", 0), spec.get("n_points"))
    if kind == "de":
        loss = spec["loss"]
        dim = spec.get("dim") or make_target(loss).dim
        return DEStream(loss, dim, spec.get("population", 1000), spec.get("iterations", 300),
                        spec.get("F", DE_F), spec.get("CR", DE_CR), spec.get("seed", 0))
    return ReplayStream(spec["path"])
