"""Piecewise-linear paths and ensembles of sample paths.

A Path is a d-dimensional trajectory observed on a strictly increasing time
grid; linear interpolation between grid points is implied everywhere. An
Ensemble is a collection of sample paths from one process, all sharing the
same grid and state dimension, stored as a dense (m, P, d) array.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Path:
    """One piecewise-linear trajectory.

    times: shape (P,), strictly increasing. values: shape (P, d). A path
    normally has at least two grid points; single-point paths arise from
    restriction to the first grid index and are accepted.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ValidationError(f"values must be 2-d (P, d), got shape {values.shape}")
        if times.ndim != 1 or len(times) != values.shape[0]:
            raise ValidationError(
                f"times (len {len(times)}) and values (rows {values.shape[0]}) disagree"
            )
        if len(times) < 1:
            raise ValidationError("a path needs at least one grid point")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValidationError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValidationError("path entries must be finite")
        object.__setattr__(self, "times", _as_readonly(times))
        object.__setattr__(self, "values", _as_readonly(values))

    @property
    def n_points(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Ensemble:
    """Sample paths from one process on a shared time grid.

    Stored densely: times (P,), values (m, P, d). Immutable after
    construction, so instances can be shared freely across workers.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=np.float64))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ValidationError(f"values must be 3-d (m, P, d), got shape {values.shape}")
        if values.shape[0] < 1:
            raise ValidationError("an ensemble must contain at least one path")
        if values.shape[1] != len(times):
            raise ValidationError("grid length and values disagree")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValidationError("times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValidationError("ensemble entries must be finite")
        object.__setattr__(self, "times", _as_readonly(times))
        object.__setattr__(self, "values", _as_readonly(values))

    @classmethod
    def from_paths(cls, paths: Sequence[Path]) -> "Ensemble":
        if len(paths) == 0:
            raise ValidationError("an ensemble must contain at least one path")
        t0 = paths[0].times
        for p in paths[1:]:
            if p.dim != paths[0].dim:
                raise ValidationError("all paths must share the state dimension")
            if len(p.times) != len(t0) or not np.array_equal(p.times, t0):
                raise ValidationError("all paths must share one time grid")
        return cls(t0, np.stack([p.values for p in paths]))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def __len__(self) -> int:
        return self.n_samples

    def path(self, i: int) -> Path:
        return Path(self.times, self.values[i])

    def paths(self) -> list[Path]:
        return [self.path(i) for i in range(self.n_samples)]

    def subset(self, indices) -> "Ensemble":
        return Ensemble(self.times, self.values[np.asarray(indices)])


def same_grid(a: Ensemble | Path, b: Ensemble | Path) -> bool:
    return (
        a.dim == b.dim
        and len(a.times) == len(b.times)
        and np.array_equal(a.times, b.times)
    )


def require_same_grid(a, b) -> None:
    if not same_grid(a, b):
        raise ValidationError("operands must share time grid and dimension")


def pool(x: Ensemble, y: Ensemble) -> Ensemble:
    """Concatenate two grid-compatible ensembles along the sample axis."""
    require_same_grid(x, y)
    return Ensemble(x.times, np.concatenate([x.values, y.values], axis=0))


def stack_coords(ensembles: Sequence[Ensemble]) -> Ensemble:
    """Joint process of several ensembles: coordinates concatenated per path.

    Sample i of the result is the product path (x_i^(1), ..., x_i^(k)).
    """
    base = ensembles[0]
    for e in ensembles[1:]:
        if e.n_samples != base.n_samples:
            raise ValidationError("joint process needs equal sample counts")
        if len(e.times) != len(base.times) or not np.array_equal(e.times, base.times):
            raise ValidationError("joint process needs one shared grid")
    return Ensemble(base.times, np.concatenate([e.values for e in ensembles], axis=2))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def restrict(p: Path, index_q: int) -> Path:
    """Prefix of a path: the first index_q grid points (1-based count)."""
    if not 1 <= index_q <= p.n_points:
        raise ValidationError(f"index_q must be in [1, {p.n_points}], got {index_q}")
    return Path(p.times[:index_q], p.values[:index_q])


def increments(p: Path) -> np.ndarray:
    """Per-segment increment matrix, shape (P-1, d)."""
    return np.diff(p.values, axis=0)


def time_augment(obj: Path | Ensemble, scale: float = 1.0):
    """Prepend scale*t as an extra state coordinate.

    Standard practice to break the reparametrization invariance of the
    signature; opt-in, nothing in the kernel pipeline applies it implicitly.
    """
    if not scale > 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    if isinstance(obj, Path):
        aug = np.column_stack([scale * obj.times, obj.values])
        return Path(obj.times, aug)
    m = obj.n_samples
    t = np.broadcast_to(scale * obj.times[None, :, None], (m, obj.n_points, 1))
    return Ensemble(obj.times, np.concatenate([t, obj.values], axis=2))


def resample(p: Path, new_times: np.ndarray) -> Path:
    """Linear interpolation of a path onto a new grid."""
    new_times = np.asarray(new_times, dtype=np.float64)
    cols = [np.interp(new_times, p.times, p.values[:, k]) for k in range(p.dim)]
    return Path(new_times, np.column_stack(cols))


# ---------------------------------------------------------------------------
# Dataset formats
#
# JSON-lines: one object per path, {"times": [...], "values": [[...], ...]}.
# CSV directory: one file per path with header time,x1,...,xd.
# Both parsers produce identical Ensembles on equivalent data. Paths on
# heterogeneous grids are resampled onto the grid of the first path.
# ---------------------------------------------------------------------------

def _homogenize(paths: list[Path]) -> Ensemble:
    if not paths:
        raise ValidationError("dataset contains no paths")
    t0 = paths[0].times
    if all(len(p.times) == len(t0) and np.array_equal(p.times, t0) for p in paths):
        return Ensemble.from_paths(paths)
    return Ensemble.from_paths([resample(p, t0) for p in paths])


def load_jsonl(path: str | os.PathLike) -> Ensemble:
    paths = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                paths.append(Path(np.asarray(obj["times"]), np.asarray(obj["values"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed path record: {exc}") from exc
    return _homogenize(paths)


def save_jsonl(ens: Ensemble, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(ens.n_samples):
            rec = {
                "times": [float(t) for t in ens.times],
                "values": [[float(v) for v in row] for row in ens.values[i]],
            }
            fh.write(json.dumps(rec) + "\n")


def load_csv_dir(directory: str | os.PathLike) -> Ensemble:
    files = sorted(
        f for f in os.listdir(directory) if f.lower().endswith(".csv")
    )
    if not files:
        raise ValidationError(f"no CSV files in {directory}")
    paths = []
    for name in files:
        full = os.path.join(directory, name)
        with open(full, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{full}: empty file") from None
            if not header or header[0].strip() != "time":
                raise ValidationError(f"{full}: expected header time,x1,...,xd")
            rows = []
            for lineno, row in enumerate(reader, 2):
                if not row:
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ValidationError(f"{full}:{lineno}: {exc}") from exc
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != len(header):
            raise ValidationError(f"{full}: ragged rows")
        paths.append(Path(arr[:, 0], arr[:, 1:]))
    return _homogenize(paths)


def save_csv_dir(ens: Ensemble, directory: str | os.PathLike) -> None:
    os.makedirs(directory, exist_ok=True)
    width = len(str(ens.n_samples - 1))
    header = ["time"] + [f"x{k+1}" for k in range(ens.dim)]
    for i in range(ens.n_samples):
        full = os.path.join(directory, f"path_{i:0{width}d}.csv")
        with open(full, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t, row in zip(ens.times, ens.values[i]):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
