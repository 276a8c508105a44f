"""Shared data model: datasets, seeded RNG streams, fold splitting, CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidArgumentError",
    "DataError",
    "CsvFormatError",
    "SchemaError",
    "DegenerateSampleError",
    "MissingArmError",
    "NumericError",
    "RngStream",
    "IidRecord",
    "IidDataset",
    "Trajectory",
    "PanelDataset",
    "kfold_split",
    "load_iid_csv",
    "write_iid_csv",
    "load_panel_csv",
    "write_panel_csv",
]

_MASK64 = 0xFFFFFFFFFFFFFFFF


class InvalidArgumentError(ValueError):
    """A parameter is outside its documented domain."""


class DataError(Exception):
    """Input data violates a structural requirement."""


class CsvFormatError(DataError):
    """A CSV cell or row cannot be parsed; the message names the line."""


class SchemaError(DataError):
    """Rows parse individually but the file-level layout is wrong."""


class DegenerateSampleError(DataError):
    """All pseudo-outcomes are identical, so the test statistic is undefined."""


class MissingArmError(DataError):
    """A fit requires observations from a treatment arm that has none."""


class NumericError(Exception):
    """An internal numerical computation failed."""


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by (seed, stream id).

    Equal (seed, stream) pairs reproduce identical draw sequences; distinct
    stream ids give statistically independent streams.  Every stochastic
    operation in this package takes one of these explicitly, so simulations
    replay exactly across runs and thread counts.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise InvalidArgumentError(f"{name} must be a 64-bit unsigned integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *ids: int) -> "RngStream":
        """Derive a sub-stream by mixing integer ids into the stream id.

        Derivation is order-sensitive and deterministic; the seed never changes,
        so all streams of one run remain tied to the one user-facing seed.
        """
        s = self.stream
        for i in ids:
            if not isinstance(i, (int, np.integer)) or int(i) < 0:
                raise InvalidArgumentError(f"child ids must be nonnegative integers, got {i!r}")
            s = _splitmix64(s ^ _splitmix64(int(i) & _MASK64))
        return RngStream(self.seed, s)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class IidRecord:
    """One experimental unit: covariates x, binary treatment a, outcome y."""

    x: np.ndarray
    a: int
    y: float


class IidDataset:
    """n records of (covariate vector, treatment in {0,1}, outcome), stored columnwise."""

    def __init__(self, x, a, y):
        x = np.array(x, dtype=float)
        a = np.array(a)
        y = np.array(y, dtype=float)
        if x.ndim != 2:
            raise InvalidArgumentError("x must be a 2-d array of shape (n, p)")
        n, p = x.shape
        if n < 2:
            raise InvalidArgumentError("need at least 2 records")
        if a.shape != (n,) or y.shape != (n,):
            raise InvalidArgumentError("x, a, y must have matching first dimension")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise InvalidArgumentError("all covariate and outcome entries must be finite")
        if not np.isin(a, (0, 1)).all():
            raise InvalidArgumentError("treatment entries must be 0 or 1")
        self.x = _readonly(x)
        self.a = _readonly(a.astype(np.int64))
        self.y = _readonly(y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.n

    def record(self, i: int) -> IidRecord:
        return IidRecord(self.x[i], int(self.a[i]), float(self.y[i]))

    def subset(self, idx) -> "IidDataset":
        """New dataset with the selected rows, in the given order."""
        return IidDataset(self.x[idx], self.a[idx], self.y[idx])


@dataclass(frozen=True)
class Trajectory:
    """One day's path: states x (T, d), actions a (T,), outcomes y (T,)."""

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        a = np.array(self.a)
        y = np.array(self.y, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InvalidArgumentError("trajectory states must have shape (T, d), T >= 1")
        T = x.shape[0]
        if a.shape != (T,) or y.shape != (T,):
            raise InvalidArgumentError("trajectory arrays must share length T")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise InvalidArgumentError("trajectory entries must be finite")
        if not np.isin(a, (0, 1)).all():
            raise InvalidArgumentError("actions must be 0 or 1")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "a", _readonly(a.astype(np.int64)))
        object.__setattr__(self, "y", _readonly(y))

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


class PanelDataset:
    """n daily trajectories of identical horizon T and state dimension d."""

    def __init__(self, x, a, y):
        x = np.array(x, dtype=float)
        a = np.array(a)
        y = np.array(y, dtype=float)
        if x.ndim != 3:
            raise InvalidArgumentError("panel states must have shape (n, T, d)")
        n, T, d = x.shape
        if n < 1 or T < 1:
            raise InvalidArgumentError("panel needs at least one day and one step")
        if a.shape != (n, T) or y.shape != (n, T):
            raise InvalidArgumentError("panel arrays must share shape (n, T)")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise InvalidArgumentError("panel entries must be finite")
        if not np.isin(a, (0, 1)).all():
            raise InvalidArgumentError("actions must be 0 or 1")
        self.x = _readonly(x)
        self.a = _readonly(a.astype(np.int64))
        self.y = _readonly(y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.x.shape[1]

    @property
    def d(self) -> int:
        return self.x.shape[2]

    def __len__(self) -> int:
        return self.n

    def day(self, i: int) -> Trajectory:
        return Trajectory(self.x[i], self.a[i], self.y[i])

    def subset(self, idx) -> "PanelDataset":
        return PanelDataset(self.x[idx], self.a[idx], self.y[idx])


def kfold_split(n: int, n_folds: int, rng: RngStream) -> np.ndarray:
    """Random partition of {0..n-1} into n_folds folds whose sizes differ by at most 1.

    The first (n mod n_folds) folds receive one extra unit.  Deterministic
    given the stream.  Returns the fold index of each unit.
    """
    if n_folds < 2 or n_folds > n:
        raise InvalidArgumentError(f"number of folds must satisfy 2 <= K <= n, got K={n_folds}, n={n}")
    order = rng.generator().permutation(n)
    sizes = np.full(n_folds, n // n_folds, dtype=np.int64)
    sizes[: n % n_folds] += 1
    fold = np.empty(n, dtype=np.int64)
    start = 0
    for k, size in enumerate(sizes):
        fold[order[start : start + size]] = k
        start += size
    return fold


def _parse_float(cell: str, lineno: int, colname: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise CsvFormatError(f"line {lineno}: non-numeric value {cell!r} in column {colname}") from None
    if not np.isfinite(v):
        raise CsvFormatError(f"line {lineno}: non-finite value {cell!r} in column {colname}")
    return v


def _parse_int(cell: str, lineno: int, colname: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise CsvFormatError(f"line {lineno}: expected integer {colname}, got {cell!r}") from None


def load_iid_csv(path) -> IidDataset:
    """Read a dataset with header ``y,a,x1..xp``; errors name the offending line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError("line 1: empty file")
        header = [h.strip() for h in header]
        expected = ["y", "a"] + [f"x{j}" for j in range(1, max(len(header) - 1, 1))]
        if len(header) < 3 or header != expected:
            raise CsvFormatError(f"line 1: expected header y,a,x1..xp, got {','.join(header)!r}")
        p = len(header) - 2
        ys, arms, xs = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            ys.append(_parse_float(row[0], lineno, "y"))
            aval = _parse_float(row[1], lineno, "a")
            if aval not in (0.0, 1.0):
                raise CsvFormatError(f"line {lineno}: treatment must be 0 or 1, got {row[1]!r}")
            arms.append(int(aval))
            xs.append([_parse_float(c, lineno, f"x{j + 1}") for j, c in enumerate(row[2:])])
    return IidDataset(np.array(xs, dtype=float).reshape(len(ys), p), arms, ys)


def write_iid_csv(data: IidDataset, path) -> None:
    """Write the ``y,a,x1..xp`` schema; floats use shortest round-trip form."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "a"] + [f"x{j}" for j in range(1, data.p + 1)])
        for i in range(data.n):
            writer.writerow([repr(float(data.y[i])), int(data.a[i])] + [repr(float(v)) for v in data.x[i]])


def load_panel_csv(path) -> PanelDataset:
    """Read a panel with header ``day,t,a,y,x1..xd``.

    Rows must arrive sorted by (day, t) with every day covering t = 1..T
    exactly once; anything else is a schema error, never a silent reorder.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError("line 1: empty file")
        header = [h.strip() for h in header]
        expected = ["day", "t", "a", "y"] + [f"x{j}" for j in range(1, max(len(header) - 3, 1))]
        if len(header) < 5 or header != expected:
            raise CsvFormatError(f"line 1: expected header day,t,a,y,x1..xd, got {','.join(header)!r}")
        d = len(header) - 4
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            day = _parse_int(row[0], lineno, "day")
            t = _parse_int(row[1], lineno, "t")
            aval = _parse_float(row[2], lineno, "a")
            if aval not in (0.0, 1.0):
                raise CsvFormatError(f"line {lineno}: action must be 0 or 1, got {row[2]!r}")
            yval = _parse_float(row[3], lineno, "y")
            xvals = [_parse_float(c, lineno, f"x{j + 1}") for j, c in enumerate(row[4:])]
            rows.append((lineno, day, t, int(aval), yval, xvals))
    if not rows:
        raise SchemaError("panel file has no data rows")

    prev_key = None
    for lineno, day, t, _, _, _ in rows:
        key = (day, t)
        if prev_key is not None and key <= prev_key:
            if key == prev_key:
                raise SchemaError(f"line {lineno}: duplicate (day={day}, t={t})")
            raise SchemaError(f"line {lineno}: rows not sorted by (day, t)")
        prev_key = key

    days: list[int] = []
    by_day: dict[int, list] = {}
    for lineno, day, t, a, yval, xvals in rows:
        if day not in by_day:
            days.append(day)
            by_day[day] = []
        steps = by_day[day]
        if t != len(steps) + 1:
            raise SchemaError(f"line {lineno}: day {day} is missing step t={len(steps) + 1}")
        steps.append((a, yval, xvals))

    T = len(by_day[days[0]])
    for day in days:
        if len(by_day[day]) != T:
            raise SchemaError(f"day {day} has {len(by_day[day])} steps, expected T={T}")
    n = len(days)
    x = np.empty((n, T, d))
    a = np.empty((n, T), dtype=np.int64)
    y = np.empty((n, T))
    for i, day in enumerate(days):
        for t0, (av, yv, xv) in enumerate(by_day[day]):
            a[i, t0] = av
            y[i, t0] = yv
            x[i, t0] = xv
    return PanelDataset(x, a, y)


def write_panel_csv(panel: PanelDataset, path) -> None:
    """Write the ``day,t,a,y,x1..xd`` schema with days numbered from 1."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "t", "a", "y"] + [f"x{j}" for j in range(1, panel.d + 1)])
        for i in range(panel.n):
            for t0 in range(panel.horizon):
                writer.writerow(
                    [i + 1, t0 + 1, int(panel.a[i, t0]), repr(float(panel.y[i, t0]))]
                    + [repr(float(v)) for v in panel.x[i, t0]]
                )
