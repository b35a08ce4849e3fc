"""Balanced staggered-adoption panels: container, file I/O, exposure times.

A panel holds ``n_units`` units observed over the contiguous integer periods
``t0..t1``. Covariates are static (one row per unit). Identification rests on
ignorability of adoption given the covariates and on overlap; both are
assumptions about the data-generating process and are not checked here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    IncompletePanelError,
    PanelError,
    PanelParseError,
    StaggeredAdoptionError,
)

__all__ = [
    "CovariateKind",
    "PanelDataset",
    "ExposureView",
    "NEVER_TREATED",
    "load_panel",
    "read_schema",
    "write_panel_csv",
    "write_panel_json",
    "derive_exposure",
    "cohorts",
]


@dataclass(frozen=True)
class CovariateKind:
    """Column tag. ``levels`` is ``None`` for continuous columns.

    Categorical values are stored as the level values themselves (numeric);
    ``codes`` maps them to ``0..L-1`` for the tree sampler, which treats them
    as unordered.
    """

    levels: tuple[float, ...] | None = None

    @property
    def categorical(self) -> bool:
        return self.levels is not None

    def codes(self, values: np.ndarray) -> np.ndarray:
        """Integer codes ``0..L-1``; values outside the level set map to -1."""
        if self.levels is None:
            raise TypeError("continuous column has no level codes")
        lv = np.asarray(self.levels, dtype=float)
        out = np.full(np.shape(values), -1, dtype=np.int64)
        for k, level in enumerate(lv):
            out[np.asarray(values) == level] = k
        return out

    def to_dict(self) -> dict:
        if self.levels is None:
            return {"kind": "continuous"}
        return {"kind": "categorical", "levels": list(self.levels)}

    @classmethod
    def from_dict(cls, d: dict) -> "CovariateKind":
        if d.get("kind", "continuous") == "continuous":
            return cls()
        return cls(tuple(float(v) for v in d["levels"]))


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Aligned unit-by-time outcome and treatment arrays plus static covariates.

    Parameters
    ----------
    y : array, shape (n_units, T)
        Outcomes.
    z : array, shape (n_units, T)
        Binary treatment indicators, non-decreasing along time for every unit.
    x : array, shape (n_units, p)
        Pre-treatment covariates.
    t0, t1 : int
        First and last period; ``T = t1 - t0 + 1``.
    covariate_names : tuple of str, optional
        Defaults to ``x1..xp``.
    covariate_kinds : tuple of CovariateKind, optional
        Defaults to all continuous.
    unit_ids : tuple, optional
        External unit labels, defaults to ``0..n_units-1``.
    """

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    t0: int
    t1: int
    covariate_names: tuple[str, ...] = ()
    covariate_kinds: tuple[CovariateKind, ...] = ()
    unit_ids: tuple = ()

    def __post_init__(self):
        y = _readonly(self.y, float)
        z = _readonly(self.z, np.int8)
        x = _readonly(self.x, float)
        if x.ndim == 1:
            x = _readonly(x[:, None], float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t0", int(self.t0))
        object.__setattr__(self, "t1", int(self.t1))
        n, p = x.shape
        if not self.covariate_names:
            object.__setattr__(self, "covariate_names", tuple(f"x{j + 1}" for j in range(p)))
        if not self.covariate_kinds:
            object.__setattr__(self, "covariate_kinds", tuple(CovariateKind() for _ in range(p)))
        if not self.unit_ids:
            object.__setattr__(self, "unit_ids", tuple(range(n)))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "covariate_kinds", tuple(self.covariate_kinds))
        object.__setattr__(self, "unit_ids", tuple(self.unit_ids))
        self.validate()

    @property
    def n_units(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.t1 - self.t0 + 1

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.t0, self.t1 + 1)

    def validate(self) -> None:
        T = self.t1 - self.t0 + 1
        if T < 2:
            raise PanelError(f"need at least 2 periods, got t0={self.t0}, t1={self.t1}")
        n = self.y.shape[0] if self.y.ndim == 2 else -1
        if self.y.shape != (n, T) or self.z.shape != (n, T):
            raise PanelError(f"y and z must have shape (n_units, {T}); got {self.y.shape} and {self.z.shape}")
        if self.x.shape[0] != n:
            raise PanelError(f"x has {self.x.shape[0]} rows for {n} units")
        p = self.x.shape[1]
        if len(self.covariate_names) != p or len(self.covariate_kinds) != p:
            raise PanelError("covariate_names / covariate_kinds do not match the number of x columns")
        if len(self.unit_ids) != n:
            raise PanelError("unit_ids length does not match n_units")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.x))):
            raise IncompletePanelError("panel contains missing or non-finite entries")
        if not np.isin(self.z, (0, 1)).all():
            raise PanelError("z must be binary")
        bad = np.nonzero((np.diff(self.z, axis=1) < 0).any(axis=1))[0]
        if bad.size:
            raise StaggeredAdoptionError(self.unit_ids[bad[0]])
        for j, kind in enumerate(self.covariate_kinds):
            if kind.categorical and (kind.codes(self.x[:, j]) < 0).any():
                raise PanelError(f"column {self.covariate_names[j]} has values outside its declared levels")

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.t0 == other.t0 and self.t1 == other.t1
            and np.array_equal(self.y, other.y) and np.array_equal(self.z, other.z)
            and np.array_equal(self.x, other.x)
            and self.covariate_names == other.covariate_names
            and self.covariate_kinds == other.covariate_kinds
            and tuple(map(str, self.unit_ids)) == tuple(map(str, other.unit_ids))
        )

    def to_dict(self) -> dict:
        return {
            "n_units": self.n_units,
            "t0": self.t0,
            "t1": self.t1,
            "y": self.y.tolist(),
            "z": self.z.astype(int).tolist(),
            "x": self.x.tolist(),
            "covariate_names": list(self.covariate_names),
            "covariate_kinds": [k.to_dict() for k in self.covariate_kinds],
            "unit_ids": list(self.unit_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PanelDataset":
        try:
            panel = cls(
                y=d["y"],
                z=d["z"],
                x=d["x"],
                t0=d["t0"],
                t1=d["t1"],
                covariate_names=tuple(d.get("covariate_names", ())),
                covariate_kinds=tuple(CovariateKind.from_dict(k) for k in d.get("covariate_kinds", ())),
                unit_ids=tuple(d.get("unit_ids", ())),
            )
        except KeyError as exc:
            raise PanelParseError(f"missing field {exc.args[0]!r}") from None
        if "n_units" in d and int(d["n_units"]) != panel.n_units:
            raise PanelError(f"n_units={d['n_units']} but arrays hold {panel.n_units} units")
        return panel


# event time of never-treated units; outside any plausible period label
NEVER_TREATED = np.iinfo(np.int64).min


@dataclass(frozen=True, eq=False)
class ExposureView:
    """Periods elapsed since adoption.

    ``s[i, t]`` is the running count of treated periods, so a unit adopting
    at ``e`` has ``s == 1`` at ``e``. ``event_time[i]`` is ``e_i``, or
    :data:`NEVER_TREATED` for units never treated.
    """

    s: np.ndarray
    event_time: np.ndarray
    t0: int
    t1: int

    @property
    def treated(self) -> np.ndarray:
        return self.event_time != NEVER_TREATED

    @property
    def s_max(self) -> int:
        return int(self.s.max()) if self.s.size else 0


@dataclass
class _Cell:
    y: float
    z: int
    x: list = field(default_factory=list)


def derive_exposure(panel: PanelDataset) -> ExposureView:
    s = np.cumsum(panel.z.astype(np.int64), axis=1)
    ever = s[:, -1] > 0
    first = np.argmax(panel.z > 0, axis=1)
    event_time = np.where(ever, first + panel.t0, NEVER_TREATED).astype(np.int64)
    s.setflags(write=False)
    event_time.setflags(write=False)
    return ExposureView(s=s, event_time=event_time, t0=panel.t0, t1=panel.t1)


def cohorts(view: ExposureView) -> dict[int, list[int]]:
    """Map each adoption period to the (sorted) indices of its units."""
    out: dict[int, list[int]] = {}
    for i in np.nonzero(view.treated)[0]:
        out.setdefault(int(view.event_time[i]), []).append(int(i))
    return dict(sorted(out.items()))


def read_schema(path) -> dict:
    with open(path) as fh:
        schema = json.load(fh)
    if not isinstance(schema.get("categorical", []), list):
        raise PanelParseError(f"{path}: 'categorical' must be a list")
    return schema


def _sort_key(uid: str):
    try:
        return (0, int(uid), "")
    except ValueError:
        return (1, 0, uid)


def _parse_float(value: str, what: str, line: int) -> float:
    try:
        v = float(value)
    except ValueError:
        raise PanelParseError(f"non-numeric {what} {value!r}", line) from None
    if not np.isfinite(v):
        raise PanelParseError(f"non-finite {what} {value!r}", line)
    return v


def _load_csv(path: Path, schema: dict | None) -> PanelDataset:
    categorical = set(schema.get("categorical", [])) if schema else set()
    declared_levels = dict(schema.get("levels", {})) if schema else {}
    rows: dict[tuple[str, int], _Cell] = {}
    with open(path, newline="") as fh:
        lines = enumerate(fh, start=1)
        header = None
        for lineno, raw in lines:
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                # header directive: "# categorical: x4,x5"
                key, _, rest = text.lstrip("#").partition(":")
                if key.strip().lower() == "categorical":
                    categorical.update(c.strip() for c in rest.split(",") if c.strip())
                continue
            header = next(csv.reader([text]))
            break
        if header is None:
            raise PanelParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:4] != ["unit", "time", "y", "z"]:
            raise PanelParseError(f"header must start with unit,time,y,z; got {header[:4]}", lineno)
        cov_names = header[4:]
        unknown = categorical - set(cov_names)
        if unknown:
            raise PanelParseError(f"categorical columns not in header: {sorted(unknown)}")
        for lineno, raw in lines:
            if not raw.strip() or raw.lstrip().startswith("#"):
                continue
            rec = next(csv.reader([raw]))
            if len(rec) != len(header):
                raise PanelParseError(f"expected {len(header)} fields, got {len(rec)}", lineno)
            uid = rec[0].strip()
            t = _parse_float(rec[1], "time", lineno)
            if t != int(t):
                raise PanelParseError(f"time must be an integer, got {rec[1]!r}", lineno)
            t = int(t)
            z = _parse_float(rec[3], "z", lineno)
            if z not in (0.0, 1.0):
                raise PanelParseError(f"z must be 0 or 1, got {rec[3]!r}", lineno)
            cell = _Cell(
                y=_parse_float(rec[2], "y", lineno),
                z=int(z),
                x=[_parse_float(v, name, lineno) for v, name in zip(rec[4:], cov_names)],
            )
            if (uid, t) in rows:
                raise PanelError(f"line {lineno}: duplicate cell (unit={uid}, time={t})")
            rows[(uid, t)] = cell
    if not rows:
        raise PanelParseError(f"{path}: no data rows")

    units = sorted({u for u, _ in rows}, key=_sort_key)
    times = sorted({t for _, t in rows})
    t0, t1 = times[0], times[-1]
    n, T, p = len(units), t1 - t0 + 1, len(cov_names)
    y = np.empty((n, T))
    z = np.empty((n, T), dtype=np.int8)
    x = np.empty((n, p))
    for i, u in enumerate(units):
        for k, t in enumerate(range(t0, t1 + 1)):
            cell = rows.get((u, t))
            if cell is None:
                raise IncompletePanelError(f"missing cell (unit={u}, time={t})")
            y[i, k] = cell.y
            z[i, k] = cell.z
            if k == 0:
                x[i] = cell.x
            elif cell.x != list(x[i]):
                raise PanelError(f"unit {u}: covariates change over time (must be static)")
    kinds = []
    for j, name in enumerate(cov_names):
        if name in categorical:
            levels = declared_levels.get(name)
            if levels is None:
                levels = np.unique(x[:, j]).tolist()
            kinds.append(CovariateKind(tuple(float(v) for v in levels)))
        else:
            kinds.append(CovariateKind())
    for i, u in enumerate(units):
        if np.any(np.diff(z[i]) < 0):
            raise StaggeredAdoptionError(u)
    return PanelDataset(
        y=y, z=z, x=x, t0=t0, t1=t1,
        covariate_names=tuple(cov_names), covariate_kinds=tuple(kinds),
        unit_ids=tuple(int(u) if _sort_key(u)[0] == 0 else u for u in units),
    )


def load_panel(path, format: str | None = None, schema=None) -> PanelDataset:
    """Read a panel from long CSV or JSON.

    Parameters
    ----------
    path : path-like
        Input file.
    format : {"csv", "json"}, optional
        Inferred from the extension when omitted.
    schema : path-like or dict, optional
        Sidecar schema ``{"categorical": [...], "levels": {...}}`` for CSV
        input. When omitted, ``<path>.schema.json`` is used if present.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    format = format.lower()
    if format == "json":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise PanelParseError(str(exc.msg), exc.lineno) from None
        return PanelDataset.from_dict(data)
    if format not in ("csv", "long-csv"):
        raise ValueError(f"unknown panel format {format!r}")
    if schema is None:
        sidecar = path.with_name(path.name + ".schema.json")
        schema = read_schema(sidecar) if sidecar.exists() else None
    elif not isinstance(schema, dict):
        schema = read_schema(schema)
    return _load_csv(path, schema)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_panel_csv(panel: PanelDataset, path, schema_sidecar: bool = True) -> None:
    """Write long CSV (and ``<path>.schema.json`` when any column is categorical)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", "y", "z", *panel.covariate_names])
        for i, uid in enumerate(panel.unit_ids):
            xs = [_fmt(v) for v in panel.x[i]]
            for k, t in enumerate(panel.times):
                w.writerow([uid, int(t), _fmt(panel.y[i, k]), int(panel.z[i, k]), *xs])
    cats = {n: list(k.levels) for n, k in zip(panel.covariate_names, panel.covariate_kinds) if k.categorical}
    if schema_sidecar and cats:
        with open(path.with_name(path.name + ".schema.json"), "w") as fh:
            json.dump({"categorical": list(cats), "levels": cats}, fh, indent=1)


def write_panel_json(panel: PanelDataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(panel.to_dict(), fh)
