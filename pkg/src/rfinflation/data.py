"""Monthly panel ingestion, per-variable transforms and lagged design matrices."""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

TRANSFORM_KINDS = ("level", "pct_change_monthly", "pct_change_monthly_ma3", "diff")
MODES = ("nowcast", "forecast")

_DATE_RE = re.compile(r"^(\d{4})-(\d{2})$")


class DataError(ValueError):
    """Raised for malformed input panels or impossible design requests."""


def parse_month(text: str) -> np.datetime64:
    m = _DATE_RE.match(text.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise DataError(f"malformed date {text!r}, expected YYYY-MM")
    return np.datetime64(f"{m.group(1)}-{m.group(2)}", "M")


def format_month(month) -> str:
    return str(np.datetime64(month, "M"))


class SeriesFrame:
    """Monthly-dated table of named float columns; NaN marks a missing cell.

    Frames are treated as immutable: every method returns a new frame and
    ``values`` hands out copies.
    """

    def __init__(self, months: Sequence, columns: Mapping[str, Sequence]):
        months = np.asarray(months, dtype="datetime64[M]")
        if months.ndim != 1:
            raise DataError("months must be one-dimensional")
        if len(months) > 1:
            steps = np.diff(months).astype(int)
            bad = np.flatnonzero(steps != 1)
            if bad.size:
                # rows counted from 1, matching load_csv messages
                raise DataError(f"month gap at row {bad[0] + 2}")
        cols = {}
        for name, values in columns.items():
            arr = np.array(values, dtype=float)
            if arr.shape != months.shape:
                raise DataError(
                    f"column {name!r} has {arr.size} values for {months.size} months")
            arr.setflags(write=False)
            cols[name] = arr
        months.setflags(write=False)
        self._months = months
        self._columns = cols

    # -- access ---------------------------------------------------------
    @property
    def months(self) -> np.ndarray:
        return self._months

    @property
    def names(self) -> list[str]:
        return list(self._columns)

    def __len__(self) -> int:
        return len(self._months)

    def __contains__(self, name) -> bool:
        return name in self._columns

    def values(self, name: str) -> np.ndarray:
        if name not in self._columns:
            raise DataError(f"unknown column {name!r}")
        return self._columns[name].copy()

    def index_of(self, month) -> int:
        month = np.datetime64(month, "M")
        if len(self) == 0 or not self._months[0] <= month <= self._months[-1]:
            raise DataError(f"month {format_month(month)} outside the frame")
        return int((month - self._months[0]).astype(int))

    # -- derivation -----------------------------------------------------
    def _derive(self, months, columns) -> "SeriesFrame":
        return SeriesFrame(months, columns)

    def upto(self, month) -> "SeriesFrame":
        """Rows dated at or before ``month``."""
        stop = self.index_of(month) + 1
        return self._derive(self._months[:stop],
                            {k: v[:stop] for k, v in self._columns.items()})

    def with_columns(self, columns: Mapping[str, Sequence]) -> "SeriesFrame":
        merged = dict(self._columns)
        merged.update(columns)
        return self._derive(self._months, merged)

    def with_missing(self, name: str, month) -> "SeriesFrame":
        """Copy with one cell blanked out."""
        col = self._columns[name].copy()
        col[self.index_of(month)] = np.nan
        return self._derive(self._months, {**self._columns, name: col})

    # -- io -------------------------------------------------------------
    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", *self.names])
            for i, month in enumerate(self._months):
                writer.writerow([format_month(month)]
                                + [_fmt(self._columns[n][i]) for n in self.names])

    def equals(self, other: "SeriesFrame") -> bool:
        if self.names != other.names or not np.array_equal(self.months, other.months):
            return False
        return all(np.array_equal(self._columns[n], other._columns[n], equal_nan=True)
                   for n in self.names)


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


class AuditedFrame(SeriesFrame):
    """SeriesFrame that logs which raw cells are read.

    Each read through ``values`` appends ``(cutoff, column, month)`` for every
    visible cell of an original column, where ``cutoff`` is the month passed to
    the most recent ``upto`` (None on the root frame). Cells blanked with
    ``with_missing`` and columns added by ``with_columns`` are not logged.
    """

    def __init__(self, months, columns, *, log=None, cutoff=None,
                 audited=None, hidden=None):
        super().__init__(months, columns)
        self.log = [] if log is None else log
        self.cutoff = cutoff
        self._audited = set(self.names) if audited is None else set(audited)
        self._hidden = set() if hidden is None else set(hidden)

    @classmethod
    def wrap(cls, frame: SeriesFrame) -> "AuditedFrame":
        return cls(frame.months, {n: frame.values(n) for n in frame.names})

    def _derive(self, months, columns, *, cutoff=None, audited=None, hidden=None):
        return AuditedFrame(months, columns, log=self.log,
                            cutoff=self.cutoff if cutoff is None else cutoff,
                            audited=self._audited if audited is None else audited,
                            hidden=self._hidden if hidden is None else hidden)

    def values(self, name):
        out = super().values(name)
        if name in self._audited:
            for m in self.months:
                if (name, m) not in self._hidden:
                    self.log.append((self.cutoff, name, m))
        return out

    def upto(self, month):
        stop = self.index_of(month) + 1
        return self._derive(self._months[:stop],
                            {k: v[:stop] for k, v in self._columns.items()},
                            cutoff=np.datetime64(month, "M"))

    def with_columns(self, columns):
        merged = dict(self._columns)
        merged.update(columns)
        return self._derive(self._months, merged,
                            audited=self._audited - set(columns))

    def with_missing(self, name, month):
        col = self._columns[name].copy()
        col[self.index_of(month)] = np.nan
        return self._derive(self._months, {**self._columns, name: col},
                            hidden=self._hidden | {(name, np.datetime64(month, "M"))})


def load_csv(path) -> SeriesFrame:
    """Read a monthly panel: header ``date,<col>,...``; dates YYYY-MM; empty = missing."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "date":
        raise DataError(f"{path}: first header must be 'date'")
    names = header[1:]
    seen = set()
    for name in names:
        if name in seen or not name:
            raise DataError(f"{path}: duplicate or empty header {name!r}")
        seen.add(name)

    months, data = [], [[] for _ in names]
    for r, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        try:
            months.append(parse_month(row[0]))
        except DataError as exc:
            raise DataError(f"{path}: row {r}: {exc}") from None
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "":
                data[c].append(np.nan)
                continue
            try:
                data[c].append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {r}, column {names[c]!r}"
                ) from None
    try:
        return SeriesFrame(months, dict(zip(names, data)))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# transforms

@dataclass(frozen=True)
class TransformSpec:
    source: str
    kind: str = "level"
    output: str | None = None

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise DataError(f"unknown transform kind {self.kind!r}")
        if self.output is None:
            object.__setattr__(self, "output", self.source)


def pct_change(x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, np.nan)
    prev, cur = x[:-1], x[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.where(prev != 0, 100.0 * (cur / prev - 1.0), np.nan)
    return out


def _transform(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "level":
        return x.copy()
    if kind == "diff":
        out = np.full_like(x, np.nan)
        out[1:] = x[1:] - x[:-1]
        return out
    pc = pct_change(x)
    if kind == "pct_change_monthly":
        return pc
    out = np.full_like(x, np.nan)
    if len(x) >= 3:
        # NaN in any window member propagates
        out[2:] = (pc[2:] + pc[1:-1] + pc[:-2]) / 3.0
    return out


def apply_transforms(frame: SeriesFrame, specs: Sequence[TransformSpec]) -> SeriesFrame:
    """Add one output column per spec; untouched columns are carried over."""
    outputs = [s.output for s in specs]
    if len(set(outputs)) != len(outputs):
        raise DataError("transform output names must be unique")
    new = {}
    for spec in specs:
        if spec.source not in frame:
            raise DataError(f"transform source column {spec.source!r} not in frame")
        new[spec.output] = _transform(frame.values(spec.source), spec.kind)
    return frame.with_columns(new) if new else frame


# ---------------------------------------------------------------------------
# design matrices

def feature_label(name: str, lag: int) -> str:
    return f"{name}_t" if lag == 0 else f"{name}_t-{lag}"


def parse_feature_label(label: str) -> tuple[str, int]:
    m = re.match(r"^(.*)_t(?:-(\d+))?$", label)
    if not m:
        raise DataError(f"not a feature label: {label!r}")
    return m.group(1), int(m.group(2) or 0)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    target: np.ndarray
    features: np.ndarray
    feature_names: tuple[str, ...]
    months: np.ndarray
    fill_values: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n, d = self.features.shape
        if self.target.shape != (n,) or len(self.feature_names) != d or len(self.months) != n:
            raise DataError("inconsistent design dimensions")
        if len(set(self.feature_names)) != d:
            raise DataError("duplicate feature names")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n_rows

    def subset(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return DesignMatrix(self.target[rows], self.features[rows], self.feature_names,
                            self.months[rows], self.fill_values)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def drop_variables(self, variables: Iterable[str]) -> "DesignMatrix":
        """Remove every lag of the named source variables."""
        variables = set(variables)
        keep = [i for i, lab in enumerate(self.feature_names)
                if parse_feature_label(lab)[0] not in variables]
        fill = None if self.fill_values is None else self.fill_values[keep]
        return DesignMatrix(self.target, self.features[:, keep],
                            tuple(self.feature_names[i] for i in keep), self.months, fill)

    def resolve(self, name: str) -> str:
        """Map a bare variable name to its feature label (lowest lag wins)."""
        if name in self.feature_names:
            return name
        matches = sorted((parse_feature_label(f)[1], f) for f in self.feature_names
                         if parse_feature_label(f)[0] == name)
        if not matches:
            raise DataError(f"unknown feature {name!r}")
        return matches[0][1]


def _check_lags(target, lag_spec, mode):
    if mode not in MODES:
        raise DataError(f"mode must be one of {MODES}, got {mode!r}")
    for name, lags in lag_spec.items():
        for k in lags:
            if int(k) != k or k < 0:
                raise DataError(f"lag {k!r} of {name!r} must be a non-negative integer")
            if k == 0 and (mode == "forecast" or name == target):
                raise DataError(f"lag 0 of {name!r} not allowed in {mode} mode")


def _lagged(x: np.ndarray, k: int) -> np.ndarray:
    out = np.full_like(x, np.nan)
    out[k:] = x[: len(x) - k]
    return out


def build_design(frame: SeriesFrame, target: str, lag_spec: Mapping[str, Iterable[int]],
                 mode: str = "nowcast", impute: bool = True) -> DesignMatrix:
    """Assemble the target vector and lag-tagged regressor matrix.

    Rows are dropped when the target is missing or a requested lag reaches
    before the first month. Remaining missing regressor cells get the column
    median over retained rows (``impute=False`` raises instead).
    """
    if target not in frame:
        raise DataError(f"target column {target!r} not in frame")
    lag_spec = {name: sorted(set(int(k) for k in lags)) for name, lags in lag_spec.items()}
    _check_lags(target, lag_spec, mode)
    for name in lag_spec:
        if name not in frame:
            raise DataError(f"regressor column {name!r} not in frame")

    y = frame.values(target)
    names, cols = [], []
    max_lag = 0
    for name, lags in lag_spec.items():
        x = frame.values(name) if name != target else y
        for k in lags:
            names.append(feature_label(name, k))
            cols.append(_lagged(x, k))
            max_lag = max(max_lag, k)
    keep = ~np.isnan(y)
    keep[:max_lag] = False
    rows = np.flatnonzero(keep)
    if rows.size == 0:
        raise DataError("design is empty after dropping rows")
    X = np.column_stack(cols)[rows] if cols else np.empty((rows.size, 0))
    fill = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        miss = np.isnan(X[:, j])
        present = X[~miss, j]
        fill[j] = np.median(present) if present.size else np.nan
        if miss.any():
            if not impute:
                raise DataError(f"missing values in feature {names[j]!r}")
            if not present.size:
                raise DataError(f"feature {names[j]!r} has no observed values")
            X[miss, j] = fill[j]
    return DesignMatrix(y[rows], X, tuple(names), frame.months[rows], fill)


def design_row(frame: SeriesFrame, lag_spec: Mapping[str, Iterable[int]], month,
               fill_values: np.ndarray | None = None) -> np.ndarray:
    """Regressor vector for ``month`` in the column order ``build_design`` uses."""
    t = frame.index_of(month)
    out = []
    for name, lags in lag_spec.items():
        x = frame.values(name)
        for k in sorted(set(int(k) for k in lags)):
            out.append(x[t - k] if t - k >= 0 else np.nan)
    row = np.array(out, dtype=float)
    miss = np.isnan(row)
    if miss.any():
        if fill_values is None:
            raise DataError(f"missing regressors for {format_month(month)}")
        row[miss] = fill_values[miss]
    return row


# ---------------------------------------------------------------------------
# resampling

def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def train_test_split(n_or_design, test_fraction: float = 0.2, seed: int = 0):
    """Random (train, test) row-index arrays, both sorted ascending."""
    n = n_or_design if isinstance(n_or_design, (int, np.integer)) else len(n_or_design)
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie in (0, 1)")
    n_test = int(math.floor(n * test_fraction + 0.5))
    if n_test == 0 or n_test == n:
        raise DataError(f"degenerate split: {n} rows, {n_test} in test")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def kfold_partition(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    if k < 2 or k > n:
        raise DataError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


# ---------------------------------------------------------------------------
# pipeline configuration

@dataclass(frozen=True)
class PipelineConfig:
    """Which column is the target, how raw columns are transformed and lagged.

    YAML layout::

        target: inflacion
        mode: nowcast            # or forecast
        impute: true
        transforms:
          - {source: actividad, kind: pct_change_monthly_ma3, output: A_ECO_MA}
        lags:
          inflacion: [1, 2]
          TC_oficial: [0]
    """
    target: str
    lags: Mapping[str, tuple]
    mode: str = "nowcast"
    transforms: tuple = ()
    impute: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lags", {k: tuple(sorted(set(int(x) for x in v)))
                                          for k, v in self.lags.items()})
        object.__setattr__(self, "transforms", tuple(self.transforms))
        _check_lags(self.target, self.lags, self.mode)

    def target_source(self) -> str:
        """Raw column the target is computed from."""
        for spec in self.transforms:
            if spec.output == self.target:
                return spec.source
        return self.target

    def prepare(self, frame: SeriesFrame) -> SeriesFrame:
        return apply_transforms(frame, self.transforms)

    def design(self, frame: SeriesFrame) -> DesignMatrix:
        return build_design(self.prepare(frame), self.target, self.lags, self.mode, self.impute)

    def with_mode(self, mode: str) -> "PipelineConfig":
        lags = self.lags
        if mode == "forecast":
            lags = {k: tuple(sorted({max(x, 1) for x in v})) for k, v in lags.items()}
        return PipelineConfig(self.target, lags, mode, self.transforms, self.impute)

    def to_dict(self) -> dict:
        return {"target": self.target, "mode": self.mode, "impute": self.impute,
                "transforms": [{"source": s.source, "kind": s.kind, "output": s.output}
                               for s in self.transforms],
                "lags": {k: list(v) for k, v in self.lags.items()}}

    @classmethod
    def from_dict(cls, rec: Mapping) -> "PipelineConfig":
        try:
            return cls(target=rec["target"], lags=rec["lags"],
                       mode=rec.get("mode", "nowcast"),
                       transforms=tuple(TransformSpec(**t) for t in rec.get("transforms", ())),
                       impute=bool(rec.get("impute", True)))
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid pipeline config: {exc}") from None


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"spec file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        rec = yaml.safe_load(fh)
    if not isinstance(rec, dict):
        raise DataError(f"{path}: expected a mapping at top level")
    return PipelineConfig.from_dict(rec)


def save_pipeline_config(config: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def load_consensus_csv(path) -> dict:
    """Two-column ``date,forecast`` file; months may be sparse. Returns {month: value}."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"consensus file not found: {path}")
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0][:1]] != ["date"] or len(rows[0]) != 2:
        raise DataError(f"{path}: expected header 'date,forecast'")
    for r, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        month = parse_month(row[0])
        try:
            out[month] = float(row[1])
        except (ValueError, IndexError):
            raise DataError(f"{path}: bad forecast at row {r}") from None
    return out
