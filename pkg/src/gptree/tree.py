"""A growing binary tree of local GPs with probabilistic, overlapping splits.

Every leaf holds at most ``nbar`` points and its own exact GP.  Each internal
node keeps only a :class:`SplitRule`, which gives the probability that a point
is routed to its first child ``id + "0"``.  Predictions are mixtures of the
leaf GP posteriors weighted by the product of branch probabilities along the
path to each leaf.

Node ids are binary path strings: the root is ``"0"`` and the children of
``i`` are ``i + "0"`` and ``i + "1"``.  The first child receives points with
large projected coordinates (branch probability -> 1 above the split), the
second child those with small coordinates.
"""

from __future__ import annotations

import copy
import enum
import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Union

import numpy as np

from gptree.gp import BACKENDS, Dataset, FactorizationError, TrainedGP, _finalize
from gptree.kernels import KernelKind, KernelParams

log = logging.getLogger(__name__)

CALIBRATION_WINDOW = 25
COVERAGE_TARGET_PERCENT = 68
# decay shapes other than linear reach this distance from 0/1 at the overlap edge
SATURATION_EPS = 1e-12


class Decay(str, enum.Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    DETERMINISTIC = "deterministic"


class SplitDirection(str, enum.Enum):
    MAX_SPREAD = "max_spread"
    MIN_LENGTHSCALE = "min_lengthscale"
    MAX_SPREAD_PER_LENGTHSCALE = "max_spread_per_lengthscale"
    MAX_CORR = "max_corr"
    PRINCIPAL_COMPONENT = "principal_component"


class SplitPosition(str, enum.Enum):
    MEAN = "mean"
    MEDIAN = "median"


def _parse_choice(enum_cls, value, name):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ValueError(f"{name}: invalid value {value!r}; allowed: {allowed}") from None


@dataclass
class TreeConfig:
    """All tree settings.  ``retrain_buffer_length=None`` means ``nbar``."""

    nbar: int = 1000
    retrain_buffer_length: Optional[int] = None
    theta: float = 0.0
    gradual_split: bool = True
    kernel: str = "matern3_2"
    wrapper: str = "internal"
    split_direction_criterion: str = "max_spread_per_lengthscale"
    split_position_criterion: str = "median"
    shape_decay: str = "linear"
    use_empirical_error: bool = True
    seed: int = 0
    calibration_initial_scale: float = 10.0
    calibration_rate_limit: float = 0.95
    untrained_prior_variance: float = 1e6

    def __post_init__(self):
        if isinstance(self.nbar, bool) or int(self.nbar) != self.nbar or self.nbar < 2:
            raise ValueError(f"nbar: must be an integer >= 2, got {self.nbar!r}")
        self.nbar = int(self.nbar)
        if self.retrain_buffer_length is not None:
            b = self.retrain_buffer_length
            if isinstance(b, bool) or int(b) != b or b < 1:
                raise ValueError(f"retrain_buffer_length: must be a positive integer, got {b!r}")
            self.retrain_buffer_length = int(b)
        if not 0.0 <= float(self.theta) <= 1.0:
            raise ValueError(f"theta: must lie in [0, 1], got {self.theta!r}")
        self.theta = float(self.theta)
        try:
            self.kernel = KernelKind.parse(self.kernel).value
        except ValueError as exc:
            raise ValueError(f"kernel: {exc}") from None
        if self.wrapper not in BACKENDS:
            raise ValueError(f"wrapper: invalid value {self.wrapper!r}; allowed: {', '.join(BACKENDS)}")
        self.split_direction_criterion = _parse_choice(
            SplitDirection, self.split_direction_criterion, "split_direction_criterion").value
        self.split_position_criterion = _parse_choice(
            SplitPosition, self.split_position_criterion, "split_position_criterion").value
        self.shape_decay = _parse_choice(Decay, self.shape_decay, "shape_decay").value
        for name in ("gradual_split", "use_empirical_error"):
            if not isinstance(getattr(self, name), (bool, np.bool_)):
                raise ValueError(f"{name}: must be true or false, got {getattr(self, name)!r}")
        if not 0.0 < self.calibration_rate_limit <= 1.0:
            raise ValueError("calibration_rate_limit: must lie in (0, 1]")
        if not self.calibration_initial_scale > 0:
            raise ValueError("calibration_initial_scale: must be positive")
        if not self.untrained_prior_variance > 0:
            raise ValueError("untrained_prior_variance: must be positive")
        self.seed = int(self.seed)

    @property
    def buffer_length(self) -> int:
        return self.nbar if self.retrain_buffer_length is None else self.retrain_buffer_length

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TreeConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown tree settings: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True)
class SplitRule:
    """Routing rule of an internal node.

    ``direction`` is a coordinate index or a unit vector to project onto;
    ``position`` and ``width`` are measured along that projection.
    """

    direction: Union[int, tuple]
    position: float
    width: float
    theta: float
    decay: Decay = Decay.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "decay", Decay(self.decay))
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.width >= 0:
            raise ValueError(f"width must be non-negative, got {self.width}")
        if not isinstance(self.direction, (int, np.integer)):
            v = tuple(float(c) for c in self.direction)
            if abs(math.fsum(c * c for c in v) - 1.0) > 1e-9:
                raise ValueError("projection direction must be a unit vector")
            object.__setattr__(self, "direction", v)
        else:
            object.__setattr__(self, "direction", int(self.direction))

    def project(self, x) -> float:
        if isinstance(self.direction, int):
            return float(x[self.direction])
        return float(np.dot(self.direction, x))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["direction"] = self.direction if isinstance(self.direction, int) else list(self.direction)
        d["decay"] = self.decay.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SplitRule":
        direction = d["direction"]
        if not isinstance(direction, int):
            direction = tuple(direction)
        return cls(direction, d["position"], d["width"], d["theta"], Decay(d["decay"]))


def branch_probability(rule: SplitRule, x) -> float:
    """Probability that ``x`` is routed to the first child of a node."""
    u = rule.project(x) - rule.position
    half = 0.5 * rule.theta * rule.width
    if rule.decay is Decay.DETERMINISTIC or half == 0.0:
        return 1.0 if u > 0 else (0.0 if u < 0 else 0.5)
    if u > half:
        return 1.0
    if u < -half:
        return 0.0
    if rule.decay is Decay.LINEAR:
        return u / (2.0 * half) + 0.5
    if rule.decay is Decay.EXPONENTIAL:
        rate = math.log(0.5 / SATURATION_EPS) / half
        tail = 0.5 * math.exp(-rate * abs(u))
    else:
        width = half / math.sqrt(2.0 * math.log(0.5 / SATURATION_EPS))
        tail = 0.5 * math.exp(-0.5 * (u / width) ** 2)
    return 1.0 - tail if u >= 0 else tail


@dataclass
class CalibrationState:
    """The latest residual/uncertainty pairs of one leaf and its scale factor."""

    pairs: deque = field(default_factory=lambda: deque(maxlen=CALIBRATION_WINDOW))
    scale: float = 10.0

    def push(self, residual: float, sigma: float, rate_limit: float) -> float:
        self.pairs.append((float(residual), float(sigma)))
        self.scale = calibration_scale(self, rate_limit)
        return self.scale

    def copy(self) -> "CalibrationState":
        return CalibrationState(deque(self.pairs, maxlen=CALIBRATION_WINDOW), self.scale)


def calibration_scale(state: CalibrationState, rate_limit: float) -> float:
    """Scale factor covering 68% of the stored residuals.

    The target is the ceil(0.68 n)-th smallest ratio |e|/sigma.  The scale
    may jump up at once but shrinks by at most ``rate_limit`` per update.
    """
    n = len(state.pairs)
    if n == 0:
        return state.scale
    ratios = sorted(abs(e) / max(s, 1e-12) for e, s in state.pairs)
    k = -(-COVERAGE_TARGET_PERCENT * n // 100)
    return max(ratios[k - 1], rate_limit * state.scale)


@dataclass
class Node:
    """A tree node.  Leaves own points and a GP; internal nodes a split rule.

    Points are kept in arrival order.  ``pids`` are stream indices, which
    identify the same point when it is held by two gradual-split siblings.
    """

    id: str
    pids: List[int] = field(default_factory=list)
    xs: List[np.ndarray] = field(default_factory=list)
    ys: List[float] = field(default_factory=list)
    y_vars: List[float] = field(default_factory=list)
    shared: List[bool] = field(default_factory=list)
    gp: Optional[TrainedGP] = None
    buffer_count: int = 0
    split: Optional[SplitRule] = None
    calib: CalibrationState = field(default_factory=CalibrationState)

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def n_points(self) -> int:
        return len(self.pids)

    @property
    def shared_count(self) -> int:
        return sum(self.shared)

    def append(self, pid, x, y, y_var, shared=False):
        self.pids.append(pid)
        self.xs.append(x)
        self.ys.append(float(y))
        self.y_vars.append(float(y_var))
        self.shared.append(shared)

    def remove_at(self, idx: int):
        for seq in (self.pids, self.xs, self.ys, self.y_vars, self.shared):
            del seq[idx]

    def dataset(self) -> Dataset:
        return Dataset(np.array(self.xs), self.ys, self.y_vars)


def gradual_evict(child: Node, side: str, rule: SplitRule, sibling: Optional[Node] = None):
    """Drop the shared point lying furthest toward the sibling's side.

    The ``"left"`` child (small projections) loses its largest-projection
    shared point, the ``"right"`` child its smallest.  The point then belongs
    to the sibling alone.  Returns the evicted point id, or None.
    """
    candidates = [i for i, s in enumerate(child.shared) if s]
    if not candidates:
        return None
    proj = [rule.project(child.xs[i]) for i in candidates]
    if side == "left":
        idx = candidates[int(np.argmax(proj))]
    elif side == "right":
        idx = candidates[int(np.argmin(proj))]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    pid = child.pids[idx]
    child.remove_at(idx)
    if sibling is not None:
        j = sibling.pids.index(pid)
        sibling.shared[j] = False
    return pid


def choose_split(data: Dataset, gp: Optional[TrainedGP], criterion, position_criterion,
                 theta: float = 0.0, decay=Decay.LINEAR) -> SplitRule:
    """Split direction, position and width for a full leaf."""
    criterion = SplitDirection(criterion)
    position_criterion = SplitPosition(position_criterion)
    X, y = data.X, data.y
    spreads = X.max(axis=0) - X.min(axis=0)
    if not np.any(spreads > 0):
        return SplitRule(0, float(X[0, 0]), 0.0, theta, decay)

    if criterion is SplitDirection.PRINCIPAL_COMPONENT:
        if X.shape[1] == 1:
            direction = (1.0,)
        else:
            _, vecs = np.linalg.eigh(np.cov(X, rowvar=False))
            v = vecs[:, -1]
            v = v / np.linalg.norm(v)
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            direction = tuple(v)
        proj = X @ np.asarray(direction)
    else:
        if criterion is SplitDirection.MAX_SPREAD:
            j = int(np.argmax(spreads))
        elif criterion is SplitDirection.MAX_CORR:
            sx = X.std(axis=0)
            sy = y.std()
            if sy > 0:
                cov = ((X - X.mean(axis=0)) * (y - y.mean())[:, None]).mean(axis=0)
                corr = np.where(sx > 0, np.abs(cov) / np.where(sx > 0, sx, 1.0) / sy, 0.0)
            else:
                corr = np.zeros(X.shape[1])
            j = int(np.argmax(corr))
        else:
            if gp is None:
                raise ValueError(f"{criterion.value} needs a trained GP")
            ls = gp.lengthscales
            if criterion is SplitDirection.MIN_LENGTHSCALE:
                j = int(np.argmin(ls))
            else:
                j = int(np.argmax(spreads / ls))
        direction = j
        proj = X[:, j]

    if position_criterion is SplitPosition.MEDIAN:
        position = float(np.median(proj))
    else:
        position = float(np.mean(proj))
    width = float(proj.max() - proj.min())
    return SplitRule(direction, position, width, theta, decay)


def mixture_moments(weights, means, variances):
    """Mean and variance of a Gaussian mixture.

    Uses ``sum w (var + (mu - mean)^2)``, which equals
    ``sum w (var + mu^2) - mean^2`` but cannot cancel below zero.
    """
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    var = np.asarray(variances, dtype=float)
    mean = float(np.dot(w, mu))
    spread = mu - mean
    return mean, float(np.dot(w, var) + np.dot(w, spread * spread))


@dataclass(frozen=True)
class JointPrediction:
    mean: float
    sigma: float
    sigma_calibrated: float
    n_leaves: int = 1

    @property
    def variance(self) -> float:
        return self.sigma * self.sigma


class GPTree:
    """Streaming regression with a dividing tree of local GPs.

    >>> tree = GPTree(nbar=25, theta=0.0, retrain_buffer_length=1)
    >>> for x, y in stream:                               # doctest: +SKIP
    ...     pred = tree.joint_prediction(x)
    ...     tree.update(x, y, y_var=0.01)

    Not safe for concurrent ``update`` calls; predictions may run
    concurrently with each other.
    """

    def __init__(self, config: Optional[TreeConfig] = None, **settings):
        if config is None:
            config = TreeConfig(**settings)
        elif settings:
            config = TreeConfig(**{**config.to_dict(), **settings})
        self.config = config
        self.backend = BACKENDS[config.wrapper](config.kernel)
        self.rng = np.random.Generator(np.random.Philox(config.seed))
        self.nodes: Dict[str, Node] = {"0": self._new_node("0")}
        self.n_received = 0
        self.dim: Optional[int] = None

    def _new_node(self, node_id, calib=None) -> Node:
        if calib is None:
            calib = CalibrationState(scale=self.config.calibration_initial_scale)
        return Node(node_id, calib=calib)

    # -- structure ---------------------------------------------------------

    def leaves(self) -> List[str]:
        return [i for i, n in self.nodes.items() if n.is_leaf]

    def sibling_id(self, node_id: str) -> Optional[str]:
        if node_id == "0":
            return None
        return node_id[:-1] + ("1" if node_id[-1] == "0" else "0")

    def _as_point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
        if self.dim is not None and x.size != self.dim:
            raise ValueError(f"expected a {self.dim}-vector, got {x.size} coordinates")
        if not np.all(np.isfinite(x)):
            raise ValueError("input point must be finite")
        return x

    # -- routing -----------------------------------------------------------

    def marginal_probabilities(self, x) -> Dict[str, float]:
        """Leaf id -> product of branch probabilities, for leaves with p > 0."""
        x = self._as_point(x)
        out = {}
        stack = [("0", 1.0)]
        while stack:
            node_id, p = stack.pop()
            node = self.nodes[node_id]
            if node.is_leaf:
                out[node_id] = p
                continue
            p0 = branch_probability(node.split, x)
            if p0 < 1.0:
                stack.append((node_id + "1", p * (1.0 - p0)))
            if p0 > 0.0:
                stack.append((node_id + "0", p * p0))
        return out

    def assign_leaf(self, x) -> str:
        """Route ``x`` to one leaf by Bernoulli draws from the root down."""
        x = self._as_point(x)
        node_id = "0"
        node = self.nodes[node_id]
        while not node.is_leaf:
            p0 = branch_probability(node.split, x)
            node_id += "0" if self.rng.random() < p0 else "1"
            node = self.nodes[node_id]
        return node_id

    # -- prediction --------------------------------------------------------

    def leaf_prediction(self, node: Node, x):
        """(mean, variance) of one leaf, with a data-driven prior if untrained."""
        if node.gp is not None:
            pred = self.backend.predict(node.gp, x)
            return pred.mean, pred.variance
        if not node.ys:
            return 0.0, self.config.untrained_prior_variance
        mean = float(np.mean(node.ys))
        if len(node.ys) < 2:
            return mean, self.config.untrained_prior_variance
        return mean, float(np.var(node.ys, ddof=1))

    def joint_prediction(self, x) -> JointPrediction:
        """Probability-weighted mixture of the contributing leaf posteriors."""
        x = self._as_point(x)
        probs = self.marginal_probabilities(x)
        w, mu, var, scaled = [], [], [], []
        for node_id, p in probs.items():
            node = self.nodes[node_id]
            m, v = self.leaf_prediction(node, x)
            w.append(p)
            mu.append(m)
            var.append(v)
            scaled.append(node.calib.scale ** 2 * v)
        mean, variance = mixture_moments(w, mu, var)
        sigma = math.sqrt(max(variance, 0.0))
        if self.config.use_empirical_error:
            sigma_cal = math.sqrt(max(mixture_moments(w, mu, scaled)[1], 0.0))
        else:
            sigma_cal = sigma
        return JointPrediction(mean, sigma, sigma_cal, len(probs))

    # -- training ----------------------------------------------------------

    def update(self, x, y: float, y_var: float = 0.0):
        """Add one observation: calibrate, store, retrain, split as needed."""
        x = self._as_point(x)
        if not (math.isfinite(y) and math.isfinite(y_var) and y_var >= 0):
            raise ValueError("y must be finite and y_var finite and non-negative")
        if self.dim is None:
            self.dim = x.size
        cfg = self.config
        leaf_id = self.assign_leaf(x)
        node = self.nodes[leaf_id]

        if node.gp is not None:
            pred = self.backend.predict(node.gp, x)
            node.calib.push(y - pred.mean, pred.sd, cfg.calibration_rate_limit)

        pid = self.n_received
        self.n_received += 1
        node.append(pid, x, y, y_var)
        sibling = None
        if node.shared_count:
            parent = self.nodes[leaf_id[:-1]]
            sibling = self.nodes[self.sibling_id(leaf_id)]
            side = "right" if leaf_id[-1] == "0" else "left"
            gradual_evict(node, side, parent.split, sibling)

        node.buffer_count += 1
        if node.buffer_count >= cfg.buffer_length:
            node.buffer_count = 0
            self._refit(node)

        self._split_if_full(node)
        if sibling is not None and sibling.is_leaf:
            self._split_if_full(sibling)

    def _refit(self, node: Node):
        if node.n_points < 2:
            return
        warm = self.backend.hyperparameters(node.gp) if node.gp is not None else None
        try:
            node.gp = self.backend.fit(node.dataset(), warm)
        except (FactorizationError, ValueError) as exc:
            log.warning("leaf %s: GP fit failed (%s); keeping previous GP", node.id, exc)

    def _split_if_full(self, node: Node):
        if node.n_points >= self.config.nbar and node.shared_count == 0:
            self.split_node(node.id)

    def split_node(self, node_id: str):
        """Turn a full leaf into an internal node with two child leaves."""
        cfg = self.config
        node = self.nodes[node_id]
        if not node.is_leaf:
            raise ValueError(f"node {node_id} is not a leaf")
        data = node.dataset()
        gp = node.gp
        if gp is None and data.n >= 2:
            gp = self.backend.fit(data)
        rule = choose_split(data, gp, cfg.split_direction_criterion,
                            cfg.split_position_criterion, cfg.theta, Decay(cfg.shape_decay))
        warm = self.backend.hyperparameters(gp) if gp is not None else None
        kids = [self._new_node(node_id + c, node.calib.copy()) for c in "01"]

        if cfg.gradual_split:
            for kid in kids:
                for i in range(node.n_points):
                    kid.append(node.pids[i], node.xs[i], node.ys[i], node.y_vars[i], shared=True)
            child_gp = self._fit_child(data, warm)
            for kid in kids:
                kid.gp = child_gp
        else:
            for i in range(node.n_points):
                p0 = branch_probability(rule, node.xs[i])
                kid = kids[0] if self.rng.random() < p0 else kids[1]
                kid.append(node.pids[i], node.xs[i], node.ys[i], node.y_vars[i])
            for kid in kids:
                if kid.n_points:
                    kid.gp = self._fit_child(kid.dataset(), warm)

        node.split = rule
        node.gp = None
        node.pids, node.xs, node.ys, node.y_vars, node.shared = [], [], [], [], []
        node.buffer_count = 0
        for kid in kids:
            self.nodes[kid.id] = kid
        if not cfg.gradual_split:
            for kid in kids:
                self._split_if_full(kid)

    def _fit_child(self, data: Dataset, warm):
        try:
            return self.backend.fit(data, warm)
        except (FactorizationError, ValueError) as exc:
            log.warning("child GP fit failed (%s); leaf starts untrained", exc)
            return None

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        state = self.rng.bit_generator.state
        return {
            "format": "gptree-snapshot",
            "version": 1,
            "config": self.config.to_dict(),
            "dim": self.dim,
            "n_received": self.n_received,
            "rng": _jsonable(state),
            "nodes": {i: _node_to_dict(n) for i, n in self.nodes.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GPTree":
        if data.get("format") != "gptree-snapshot":
            raise ValueError("not a gptree snapshot")
        tree = cls(TreeConfig.from_dict(data["config"]))
        tree.dim = data["dim"]
        tree.n_received = data["n_received"]
        tree.rng.bit_generator.state = _rng_state(data["rng"])
        kind = KernelKind.parse(tree.config.kernel)
        tree.nodes = {i: _node_from_dict(i, d, kind) for i, d in data["nodes"].items()}
        return tree

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GPTree":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def copy(self) -> "GPTree":
        return copy.deepcopy(self)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _rng_state(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _rng_state(v) for k, v in obj.items()}
    return obj


def _gp_to_dict(gp: TrainedGP) -> dict:
    return {
        "X": gp.dataset.X.tolist(),
        "y": gp.dataset.y.tolist(),
        "y_var": gp.dataset.y_var.tolist(),
        "signal_variance": gp.params.signal_variance,
        "lengthscales": gp.params.lengthscales.tolist(),
        "mean_const": gp.mean_const,
        "lml": gp.lml,
        "converged": gp.converged,
        "n_iter": gp.n_iter,
    }


def _gp_from_dict(d: dict, kind: KernelKind) -> TrainedGP:
    data = Dataset(np.array(d["X"], dtype=float), d["y"], d["y_var"])
    params = KernelParams(d["signal_variance"], d["lengthscales"])
    return _finalize(data, kind, params, d["mean_const"], lml=d["lml"],
                     converged=d["converged"], n_iter=d["n_iter"])


def _node_to_dict(node: Node) -> dict:
    return {
        "pids": list(node.pids),
        "xs": [x.tolist() for x in node.xs],
        "ys": list(node.ys),
        "y_vars": list(node.y_vars),
        "shared": list(node.shared),
        "buffer_count": node.buffer_count,
        "split": node.split.to_dict() if node.split is not None else None,
        "calib": {"pairs": [list(p) for p in node.calib.pairs], "scale": node.calib.scale},
        "gp": _gp_to_dict(node.gp) if node.gp is not None else None,
    }


def _node_from_dict(node_id: str, d: dict, kind: KernelKind) -> Node:
    calib = CalibrationState(deque((tuple(p) for p in d["calib"]["pairs"]),
                                   maxlen=CALIBRATION_WINDOW), d["calib"]["scale"])
    return Node(
        id=node_id,
        pids=list(d["pids"]),
        xs=[np.array(x, dtype=float) for x in d["xs"]],
        ys=list(d["ys"]),
        y_vars=list(d["y_vars"]),
        shared=list(d["shared"]),
        gp=_gp_from_dict(d["gp"], kind) if d["gp"] is not None else None,
        buffer_count=d["buffer_count"],
        split=SplitRule.from_dict(d["split"]) if d["split"] is not None else None,
        calib=calib,
    )


# Functional aliases of the tree operations.

def marginal_probabilities(tree: GPTree, x) -> Dict[str, float]:
    return tree.marginal_probabilities(x)


def assign_leaf(tree: GPTree, x) -> str:
    return tree.assign_leaf(x)


def joint_prediction(tree: GPTree, x) -> JointPrediction:
    return tree.joint_prediction(x)


def update(tree: GPTree, x, y, y_var=0.0):
    tree.update(x, y, y_var)


def split_node(tree: GPTree, node_id: str):
    tree.split_node(node_id)
