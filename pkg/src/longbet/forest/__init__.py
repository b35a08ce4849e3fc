"""Bayesian regression trees grown from the root (XBART style).

Trees split on static covariates and, optionally, on calendar time and
exposure time. Each node samples among "no split" and all candidate
cutpoints with probability proportional to the conjugate normal marginal
likelihood times the depth prior ``alpha * (1 + depth) ** -beta``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Axis",
    "Design",
    "SplitRule",
    "SufficientStats",
    "ForestParams",
    "Tree",
    "Forest",
    "marginal_loglik",
    "sample_split",
    "grow_from_root",
    "predict",
]

COVARIATE = "covariate"
CALENDAR_TIME = "calendar_time"
EXPOSURE_TIME = "exposure_time"


@dataclass(frozen=True)
class Axis:
    """A splittable column. ``levels`` set means unordered categorical."""

    name: str
    role: str = COVARIATE
    levels: tuple[float, ...] | None = None

    @property
    def categorical(self) -> bool:
        return self.levels is not None

    def encode(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.levels is None:
            return values
        out = np.full(values.shape, -1.0)
        for k, level in enumerate(self.levels):
            out[values == level] = k
        return out

    def to_dict(self) -> dict:
        d = {"name": self.name, "role": self.role}
        if self.levels is not None:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d) -> "Axis":
        levels = d.get("levels")
        return cls(d["name"], d.get("role", COVARIATE), None if levels is None else tuple(levels))


class Design:
    """Encoded split matrix with per-axis presorted row orders.

    Parameters
    ----------
    columns : array, shape (N, q)
        Raw column values (categorical columns hold level values).
    axes : sequence of Axis
        One per column.
    """

    def __init__(self, columns: np.ndarray, axes: Sequence[Axis]):
        columns = np.asarray(columns, dtype=float)
        if columns.ndim != 2 or columns.shape[1] != len(axes):
            raise ValueError(f"columns must be (N, {len(axes)}), got {columns.shape}")
        self.axes = tuple(axes)
        self.X = encode(columns, self.axes)
        if any(a.categorical and np.any(self.X[:, j] < 0) for j, a in enumerate(self.axes)):
            raise ValueError("categorical column holds a value outside its levels")
        self.order = np.ascontiguousarray(
            np.stack([np.argsort(self.X[:, j], kind="stable") for j in range(len(axes))]).astype(np.int64)
        )
        self.is_cat = np.array([a.categorical for a in self.axes], dtype=np.bool_)
        self.n_levels = np.array([len(a.levels) if a.categorical else 0 for a in self.axes], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "Design":
        d = object.__new__(Design)
        d.axes = self.axes
        d.X = np.ascontiguousarray(self.X[np.asarray(rows)])
        d.order = np.ascontiguousarray(
            np.stack([np.argsort(d.X[:, j], kind="stable") for j in range(len(self.axes))]).astype(np.int64)
        )
        d.is_cat = self.is_cat
        d.n_levels = self.n_levels
        return d


def encode(columns: np.ndarray, axes: Sequence[Axis]) -> np.ndarray:
    columns = np.atleast_2d(np.asarray(columns, dtype=float))
    if columns.shape[1] != len(axes):
        raise ValueError(f"expected {len(axes)} columns, got {columns.shape[1]}")
    out = np.empty_like(columns)
    for j, axis in enumerate(axes):
        out[:, j] = axis.encode(columns[:, j])
    return np.ascontiguousarray(out)


@dataclass(frozen=True)
class SplitRule:
    """``axis`` indexes the design columns; exactly one of ``cutpoint``
    (ordered, ``value <= cutpoint`` goes left) or ``left_levels`` is set."""

    axis: int
    axis_name: str = ""
    cutpoint: float | None = None
    left_levels: tuple[float, ...] | None = None

    def goes_left(self, value: float) -> bool:
        if self.left_levels is not None:
            return value in self.left_levels
        return value <= self.cutpoint


@dataclass(frozen=True)
class SufficientStats:
    n: int = 0
    sum_r: float = 0.0
    sum_r2: float = 0.0

    @classmethod
    def of(cls, residuals) -> "SufficientStats":
        r = np.asarray(residuals, dtype=float)
        return cls(int(r.size), float(r.sum()), float(r @ r))

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(self.n + other.n, self.sum_r + other.sum_r, self.sum_r2 + other.sum_r2)


@dataclass(frozen=True)
class ForestParams:
    """Tree-prior and sampler settings for one forest.

    ``tau_mu=None`` means "calibrate at fit time" (``0.6 * var / num_trees``
    on the standardized outcome).
    """

    num_trees: int = 50
    max_depth: int = 10
    max_cutpoints: int = 20
    alpha: float = 0.95
    beta_depth: float = 1.25
    tau_mu: float | None = None

    def __post_init__(self):
        if self.num_trees < 1 or self.max_depth < 0 or self.max_cutpoints < 1:
            raise ValueError("num_trees, max_cutpoints must be positive and max_depth non-negative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta_depth <= 0:
            raise ValueError(f"beta_depth must be positive, got {self.beta_depth}")
        if self.tau_mu is not None and self.tau_mu <= 0:
            raise ValueError(f"tau_mu must be positive, got {self.tau_mu}")

    def resolved_tau(self, y_var: float = 1.0) -> float:
        return self.tau_mu if self.tau_mu is not None else 0.6 * y_var / self.num_trees

    def node_cap(self, n: int) -> int:
        return int(min(2 ** min(self.max_depth + 1, 30) - 1, 2 * max(n, 1) - 1))


def marginal_loglik(stats: SufficientStats, sigma2: float, tau_mu: float) -> float:
    """Log marginal likelihood of a leaf, leaf mean integrated out.

    Drops ``-sum_r2 / (2 sigma2) - n/2 log(2 pi sigma2)``, which is common
    to every partition of the same rows.
    """
    if not (sigma2 > 0 and tau_mu > 0):
        raise ValueError(f"variances must be positive (sigma2={sigma2}, tau_mu={tau_mu})")
    d = sigma2 + stats.n * tau_mu
    return 0.5 * math.log(sigma2 / d) + tau_mu * stats.sum_r ** 2 / (2.0 * sigma2 * d)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def sample_split(design: Design, rows, residuals, sigma2: float, params: ForestParams,
                 depth: int, rng: np.random.Generator, tau_mu: float | None = None,
                 weights=None) -> SplitRule | None:
    """Sample a split (or ``None`` for no split) for the node holding ``rows``.

    ``residuals`` is aligned with ``design`` rows. Only one uniform variate is
    drawn from ``rng``.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("node must be non-empty")
    sub = design.subset(rows)
    r = np.ascontiguousarray(np.asarray(residuals, dtype=float)[rows])
    b = np.ones_like(r) if weights is None else np.ascontiguousarray(np.asarray(weights, float)[rows])
    tau = params.resolved_tau() if tau_mu is None else tau_mu
    j, cut, mask, _ = _kernels.node_split(
        sub.X, sub.order, 0, sub.n, sub.is_cat, sub.n_levels, r, b, float(sigma2), float(tau),
        params.alpha, params.beta_depth, depth, params.max_depth, params.max_cutpoints, rng.random(),
    )
    if j < 0:
        return None
    axis = design.axes[j]
    if mask:
        left = tuple(axis.levels[c] for c in range(len(axis.levels)) if (mask >> c) & 1)
        return SplitRule(int(j), axis.name, left_levels=left)
    if axis.categorical:
        # many-level categorical split as ordered on its codes
        left = tuple(v for c, v in enumerate(axis.levels) if c <= cut)
        return SplitRule(int(j), axis.name, left_levels=left)
    return SplitRule(int(j), axis.name, cutpoint=float(cut))


@dataclass(frozen=True, eq=False)
class Tree:
    """A grown tree as flat node arrays (see ``_kernels`` for the layout)."""

    var: np.ndarray
    cut: np.ndarray
    mask: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    axes: tuple[Axis, ...] = field(default=())

    @property
    def n_nodes(self) -> int:
        return self.var.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.var < 0))

    def depth(self) -> int:
        def rec(k):
            return 0 if self.var[k] < 0 else 1 + max(rec(self.left[k]), rec(self.right[k]))
        return rec(0)

    def predict_encoded(self, X) -> np.ndarray:
        return Forest.from_trees([self]).predict_encoded(X)

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("var", "cut", "mask", "left", "right", "value"))

    def is_valid(self) -> bool:
        """Structural check: binary nodes, strictly nested non-contradictory rules."""
        bounds = {}
        allowed = {}
        for j, a in enumerate(self.axes):
            if a.categorical:
                allowed[j] = (1 << len(a.levels)) - 1
        seen = set()

        def rec(k, bounds, allowed):
            if k in seen or not 0 <= k < self.n_nodes:
                return False
            seen.add(k)
            j = self.var[k]
            if j < 0:
                return self.left[k] < 0 and self.right[k] < 0
            if self.left[k] < 0 or self.right[k] < 0:
                return False
            m = int(self.mask[k])
            if m:
                cur = allowed.get(j, (1 << 62) - 1)
                lset, rset = cur & m, cur & ~m
                if m & ~cur or not lset or not rset:
                    return False
                return (rec(self.left[k], bounds, {**allowed, j: lset})
                        and rec(self.right[k], bounds, {**allowed, j: rset}))
            lo, hi = bounds.get(j, (-math.inf, math.inf))
            c = self.cut[k]
            if not lo < c < hi:
                return False
            return (rec(self.left[k], {**bounds, j: (lo, c)}, allowed)
                    and rec(self.right[k], {**bounds, j: (c, hi)}, allowed))

        return rec(0, bounds, allowed) and len(seen) == self.n_nodes

    def to_dict(self) -> dict:
        def rec(k):
            if self.var[k] < 0:
                return {"leaf": float(self.value[k])}
            axis = self.axes[self.var[k]] if self.axes else Axis(str(self.var[k]))
            node = {"axis": axis.name}
            m = int(self.mask[k])
            if m:
                node["kind"] = "categorical"
                node["leftset"] = [axis.levels[c] for c in range(len(axis.levels)) if (m >> c) & 1]
            else:
                node["kind"] = "ordered"
                node["cutpoint"] = float(self.cut[k])
            node["children"] = [rec(self.left[k]), rec(self.right[k])]
            return node

        return rec(0)

    @classmethod
    def from_dict(cls, d: dict, axes: Sequence[Axis]) -> "Tree":
        axes = tuple(axes)
        index = {a.name: j for j, a in enumerate(axes)}
        var, cut, mask, left, right, value = [], [], [], [], [], []

        def new():
            for lst, v in ((var, -1), (cut, 0.0), (mask, 0), (left, -1), (right, -1), (value, 0.0)):
                lst.append(v)
            return len(var) - 1

        # children numbered at their parent, left subtree first: the same
        # numbering the sampler produces, so round trips are array-exact
        stack = [(d, new())]
        while stack:
            node, k = stack.pop()
            if "leaf" in node:
                value[k] = float(node["leaf"])
                continue
            j = index[node["axis"]]
            var[k] = j
            if node["kind"] == "categorical":
                levels = axes[j].levels
                m = 0
                for v in node["leftset"]:
                    m |= 1 << levels.index(v)
                mask[k] = m
            else:
                cut[k] = float(node["cutpoint"])
            lc, rc = new(), new()
            left[k], right[k] = lc, rc
            stack.append((node["children"][1], rc))
            stack.append((node["children"][0], lc))
        return cls(np.array(var, np.int64), np.array(cut, float), np.array(mask, np.int64),
                   np.array(left, np.int64), np.array(right, np.int64), np.array(value, float), axes)


class Forest:
    """Sum-of-trees model; trees are stored concatenated for fast prediction."""

    def __init__(self, var, cut, mask, left, right, value, offsets, axes=()):
        self.var = np.ascontiguousarray(var, dtype=np.int64)
        self.cut = np.ascontiguousarray(cut, dtype=float)
        self.mask = np.ascontiguousarray(mask, dtype=np.int64)
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.value = np.ascontiguousarray(value, dtype=float)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.axes = tuple(axes)

    @classmethod
    def from_trees(cls, trees: Sequence[Tree], axes=None) -> "Forest":
        trees = list(trees)
        if axes is None:
            axes = trees[0].axes if trees else ()
        offsets = np.zeros(len(trees) + 1, dtype=np.int64)
        offsets[1:] = np.cumsum([t.n_nodes for t in trees])
        cat = lambda a: np.concatenate([getattr(t, a) for t in trees]) if trees else np.empty(0)
        return cls(cat("var"), cat("cut"), cat("mask"), cat("left"), cat("right"), cat("value"),
                   offsets, axes)

    def __len__(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def trees(self) -> list[Tree]:
        out = []
        for a, b in zip(self.offsets[:-1], self.offsets[1:]):
            out.append(Tree(self.var[a:b], self.cut[a:b], self.mask[a:b], self.left[a:b],
                            self.right[a:b], self.value[a:b], self.axes))
        return out

    def predict_encoded(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or (self.axes and X.shape[1] != len(self.axes)):
            raise ValueError(f"design has {X.shape[-1]} columns, forest expects {len(self.axes)}")
        return _kernels.predict_forest(X, self.var, self.cut, self.mask, self.left, self.right,
                                       self.value, self.offsets)

    def predict_each(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        return _kernels.predict_each(X, self.var, self.cut, self.mask, self.left, self.right,
                                     self.value, self.offsets)

    def predict_raw(self, columns) -> np.ndarray:
        return self.predict_encoded(encode(columns, self.axes))

    def scaled(self, factor: float) -> "Forest":
        return Forest(self.var, self.cut, self.mask, self.left, self.right, self.value * factor,
                      self.offsets, self.axes)

    def to_dict(self, include_axes: bool = True) -> dict:
        d = {"trees": [t.to_dict() for t in self.trees]}
        if include_axes:
            d["axes"] = [a.to_dict() for a in self.axes]
        return d

    @classmethod
    def from_dict(cls, d: dict, axes=None) -> "Forest":
        if axes is None:
            axes = [Axis.from_dict(a) for a in d["axes"]]
        axes = tuple(axes)
        return cls.from_trees([Tree.from_dict(t, axes) for t in d["trees"]], axes)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Forest":
        return cls.from_dict(json.loads(s))


def grow_from_root(design: Design, residuals, sigma2: float, params: ForestParams,
                   rng: np.random.Generator, tau_mu: float | None = None, weights=None,
                   return_fitted: bool = False):
    """Grow a fresh tree on ``residuals``.

    With ``weights`` ``b``, row ``i`` has likelihood ``N(r_i; b_i * mu, sigma2)``;
    rows with ``b_i == 0`` follow the split rules but carry no likelihood.
    Leaves are drawn from their conjugate normal posterior.
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    r = np.ascontiguousarray(residuals, dtype=float)
    if r.shape != (design.n,):
        raise ValueError(f"residuals must have length {design.n}, got {r.shape}")
    b = np.ones_like(r) if weights is None else np.ascontiguousarray(weights, dtype=float)
    tau = params.resolved_tau() if tau_mu is None else float(tau_mu)
    var, cut, mask, left, right, value, fitted = _kernels.grow(
        design.X, design.order, design.is_cat, design.n_levels, r, b, float(sigma2), tau,
        params.alpha, params.beta_depth, params.max_depth, params.max_cutpoints,
        params.node_cap(design.n), _seed(rng),
    )
    tree = Tree(var, cut, mask, left, right, value, design.axes)
    return (tree, fitted) if return_fitted else tree


def predict(model, x, t=None, s=None) -> float:
    """Evaluate a tree or forest at one point given raw covariates ``x``.

    ``t`` and ``s`` are required exactly when the model has calendar-time and
    exposure-time axes.
    """
    forest = Forest.from_trees([model]) if isinstance(model, Tree) else model
    row = list(np.atleast_1d(np.asarray(x, dtype=float)))
    roles = [a.role for a in forest.axes]
    n_cov = roles.count(COVARIATE)
    if len(row) != n_cov:
        raise ValueError(f"expected {n_cov} covariates, got {len(row)}")
    for role, val in ((CALENDAR_TIME, t), (EXPOSURE_TIME, s)):
        if role in roles:
            if val is None:
                raise ValueError(f"model splits on {role}; a value is required")
            row.append(float(val))
        elif val is not None:
            raise ValueError(f"model has no {role} axis")
    return float(forest.predict_raw(np.array([row]))[0])
