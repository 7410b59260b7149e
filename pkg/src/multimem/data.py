"""Datasets, variable partitions, hyperparameters and CSV/JSON ingestion.

Files use 1-based category codes (as written in surveys and in the model
notation); in memory codes are 0-based.  The conversion happens only in
:func:`load_dataset` and :func:`write_dataset`.

Schema files are JSON documents of the form::

    {
      "variables": [
        {"name": "walls", "levels": 3, "group": 2, "missing": true},
        ...
      ],
      "time": "year",             # optional, spatio-temporal variant only
      "coords": ["lon", "lat"]    # optional, spatio-temporal variant only
    }

``levels`` counts every category, including the missing category when
``missing`` is true; the missing category is always the last level.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataFormatError",
    "DataValidationError",
    "PartitionError",
    "CategoricalDataset",
    "GroupPartition",
    "Hyperparams",
    "Schema",
    "VariableSpec",
    "load_schema",
    "write_schema",
    "load_dataset",
    "write_dataset",
    "validate_partition",
    "default_hyperparams",
]


class DataFormatError(ValueError):
    """Malformed input file; message carries the row/column location."""


class DataValidationError(ValueError):
    """Well-formed input whose values violate a dataset invariant."""


class PartitionError(ValueError):
    """Variable partition inconsistent with the dataset."""


@dataclass(frozen=True)
class CategoricalDataset:
    """An ``n x p`` matrix of 0-based category codes.

    Parameters
    ----------
    codes : (n, p) int array
        ``codes[i, j]`` lies in ``0 .. levels[j] - 1``.
    levels : (p,) int array
        Number of categories ``d_j`` of each variable (at least 2).
    names : tuple of str, optional
        Variable names; defaults to ``x1 .. xp``.
    """

    codes: np.ndarray
    levels: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        codes = np.array(self.codes, dtype=np.int64, copy=True)
        levels = np.array(self.levels, dtype=np.int64, copy=True)
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise DataValidationError(f"codes must be a non-empty n x p matrix, got shape {codes.shape}")
        if levels.shape != (codes.shape[1],):
            raise DataValidationError("levels must have one entry per variable")
        if np.any(levels < 2):
            raise DataValidationError("every variable needs at least 2 levels")
        bad = (codes < 0) | (codes >= levels[None, :])
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataValidationError(
                f"code {codes[i, j] + 1} out of range 1..{levels[j]} at row {i + 1}, column {j + 1}"
            )
        names = tuple(self.names) or tuple(f"x{j + 1}" for j in range(codes.shape[1]))
        if len(names) != codes.shape[1]:
            raise DataValidationError("one name per variable required")
        codes.setflags(write=False)
        levels.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def p(self) -> int:
        return self.codes.shape[1]

    @property
    def max_levels(self) -> int:
        return int(self.levels.max())

    def frequencies(self) -> np.ndarray:
        """Empirical level frequencies as a ``(p, max_levels)`` array (zero padded)."""
        out = np.zeros((self.p, self.max_levels))
        for j in range(self.p):
            out[j, : self.levels[j]] = np.bincount(self.codes[:, j], minlength=self.levels[j]) / self.n
        return out

    def pair_frequencies(self, j: int, k: int) -> np.ndarray:
        """Empirical joint frequencies of variables ``j`` and ``k``."""
        table = np.zeros((self.levels[j], self.levels[k]))
        np.add.at(table, (self.codes[:, j], self.codes[:, k]), 1.0)
        return table / self.n

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.codes, dtype="<i8").tobytes())
        h.update(np.ascontiguousarray(self.levels, dtype="<i8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class GroupPartition:
    """Assignment of each variable to one of ``n_groups`` groups (0-based)."""

    assignment: np.ndarray
    n_groups: int | None = None

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64, copy=True)
        if a.ndim != 1:
            raise PartitionError("assignment must be a vector")
        if np.any(a < 0):
            raise PartitionError("group labels must be non-negative (0-based)")
        g = int(a.max()) + 1 if self.n_groups is None else int(self.n_groups)
        if a.size and a.max() >= g:
            raise PartitionError(f"group label {a.max()} exceeds declared group count {g}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "n_groups", g)

    @classmethod
    def from_labels(cls, labels, n_groups=None) -> "GroupPartition":
        """Build from 1-based group labels as written in files."""
        return cls(np.asarray(labels) - 1, n_groups)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_groups)

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == g)


def validate_partition(dataset: CategoricalDataset, partition: GroupPartition) -> None:
    """Raise :class:`PartitionError` unless the partition covers ``p`` variables with no empty group."""
    if partition.assignment.size != dataset.p:
        raise PartitionError(
            f"partition has {partition.assignment.size} entries but the dataset has {dataset.p} variables"
        )
    empty = np.flatnonzero(partition.group_sizes == 0)
    if empty.size:
        raise PartitionError(f"group(s) {', '.join(str(g + 1) for g in empty)} have no variables")


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters of the MMM model with two profiles per group.

    ``alpha[j]`` is the Dirichlet concentration for the kernels of variable
    ``j``; ``mu ~ N(mu0, Sigma0)`` and ``Sigma ~ IW(nu0, Psi0)``.
    """

    alpha: tuple
    mu0: np.ndarray
    Sigma0: np.ndarray
    nu0: float
    Psi0: np.ndarray

    def __post_init__(self):
        alpha = tuple(np.asarray(a, dtype=float) for a in self.alpha)
        if any(np.any(a <= 0) for a in alpha):
            raise ValueError("Dirichlet concentrations must be positive")
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        G = mu0.size
        Sigma0 = np.atleast_2d(np.asarray(self.Sigma0, dtype=float))
        Psi0 = np.atleast_2d(np.asarray(self.Psi0, dtype=float))
        for name, m in (("Sigma0", Sigma0), ("Psi0", Psi0)):
            if m.shape != (G, G):
                raise ValueError(f"{name} must be {G} x {G}")
            if not np.allclose(m, m.T, atol=1e-10):
                raise ValueError(f"{name} must be symmetric")
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise ValueError(f"{name} must be positive definite") from None
        if not self.nu0 > G - 1:
            raise ValueError(f"nu0 must exceed G - 1 = {G - 1}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "Sigma0", Sigma0)
        object.__setattr__(self, "Psi0", Psi0)
        object.__setattr__(self, "nu0", float(self.nu0))

    @property
    def n_groups(self) -> int:
        return self.mu0.size

    def alpha_matrix(self) -> np.ndarray:
        """Concentrations as a zero-padded ``(p, max_levels)`` array."""
        d = max(a.size for a in self.alpha)
        out = np.zeros((len(self.alpha), d))
        for j, a in enumerate(self.alpha):
            out[j, : a.size] = a
        return out


def default_hyperparams(dataset: CategoricalDataset, partition: GroupPartition) -> Hyperparams:
    """Uniform ``1/d_j`` Dirichlet concentrations, ``mu0 = 0``, identity scales and ``nu0 = G``."""
    G = partition.n_groups
    return Hyperparams(
        alpha=tuple(np.full(d, 1.0 / d) for d in dataset.levels),
        mu0=np.zeros(G),
        Sigma0=np.eye(G),
        nu0=float(G),
        Psi0=np.eye(G),
    )


# --------------------------------------------------------------------------- schema / CSV


@dataclass(frozen=True)
class VariableSpec:
    name: str
    levels: int
    group: int  # 1-based, as in files
    missing: bool = False


@dataclass(frozen=True)
class Schema:
    variables: tuple
    time: str | None = None
    coords: tuple | None = None
    extra: dict = field(default_factory=dict)

    @property
    def names(self) -> tuple:
        return tuple(v.name for v in self.variables)

    def partition(self) -> GroupPartition:
        return GroupPartition.from_labels([v.group for v in self.variables])

    def to_dict(self) -> dict:
        out = {
            "variables": [
                {"name": v.name, "levels": v.levels, "group": v.group, "missing": v.missing}
                for v in self.variables
            ]
        }
        if self.time is not None:
            out["time"] = self.time
        if self.coords is not None:
            out["coords"] = list(self.coords)
        out.update(self.extra)
        return out


def load_schema(path) -> Schema:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    try:
        variables = tuple(
            VariableSpec(str(v["name"]), int(v["levels"]), int(v.get("group", 1)), bool(v.get("missing", False)))
            for v in raw["variables"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad variable entry ({exc})") from None
    coords = raw.get("coords")
    extra = {k: v for k, v in raw.items() if k not in ("variables", "time", "coords")}
    return Schema(variables, raw.get("time"), tuple(coords) if coords else None, extra)


def write_schema(schema: Schema, path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n")


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _column_indices(path, header, wanted):
    idx = {}
    for name in wanted:
        if name not in header:
            raise DataFormatError(f"{path}: column {name!r} declared in schema is missing from the header")
        idx[name] = header.index(name)
    return idx


def load_dataset(path, schema: Schema) -> CategoricalDataset:
    """Read a CSV of 1-based integer codes as described by ``schema``.

    Blank cells are mapped to the last level of variables whose schema entry
    enables the missing category; blanks elsewhere are a format error.
    """
    header, rows = _read_rows(path)
    idx = _column_indices(path, header, schema.names)
    n, p = len(rows), len(schema.variables)
    if n == 0:
        raise DataFormatError(f"{path}: no data rows")
    codes = np.empty((n, p), dtype=np.int64)
    levels = np.array([v.levels for v in schema.variables])
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for j, var in enumerate(schema.variables):
            cell = row[idx[var.name]].strip()
            if cell == "":
                if not var.missing:
                    raise DataFormatError(f"{path}: blank cell at row {r}, column {var.name!r}")
                codes[r - 2, j] = var.levels
                continue
            try:
                codes[r - 2, j] = int(cell)
            except ValueError:
                raise DataFormatError(f"{path}: non-integer value {cell!r} at row {r}, column {var.name!r}") from None
            if not 1 <= codes[r - 2, j] <= var.levels:
                raise DataValidationError(
                    f"{path}: code {cell} out of range 1..{var.levels} at row {r}, column {var.name!r}"
                )
    return CategoricalDataset(codes - 1, levels, schema.names)


def load_columns(path, names) -> dict:
    """Read numeric auxiliary columns (time labels, coordinates) by name."""
    header, rows = _read_rows(path)
    idx = _column_indices(path, header, names)
    out = {}
    for name in names:
        vals = []
        for r, row in enumerate(rows, start=2):
            try:
                vals.append(float(row[idx[name]]))
            except ValueError:
                raise DataFormatError(f"{path}: non-numeric value {row[idx[name]]!r} at row {r}, column {name!r}") from None
        out[name] = np.array(vals)
    return out


def dataset_to_csv(dataset: CategoricalDataset, schema: Schema | None = None, extra_columns=None) -> str:
    """Canonical CSV text: header, then 1-based codes; missing categories as blanks."""
    missing = [False] * dataset.p if schema is None else [v.missing for v in schema.variables]
    extra_columns = extra_columns or {}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(dataset.names) + list(extra_columns))
    extras = [np.asarray(v) for v in extra_columns.values()]
    for i in range(dataset.n):
        row = [
            "" if missing[j] and dataset.codes[i, j] == dataset.levels[j] - 1 else str(dataset.codes[i, j] + 1)
            for j in range(dataset.p)
        ]
        row += [repr(float(col[i])) if col.dtype.kind == "f" else str(col[i]) for col in extras]
        writer.writerow(row)
    return buf.getvalue()


def write_dataset(dataset: CategoricalDataset, path, schema: Schema | None = None, extra_columns=None) -> None:
    Path(path).write_text(dataset_to_csv(dataset, schema, extra_columns))
