"""Dataset container, CSV ingestion and centering."""

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import AlreadyCentered, EmptyFile, InvalidArgs, MissingColumn, NonNumericCell


@dataclass(frozen=True)
class Dataset:
    """Response ``y``, linear block ``z`` (n x p1) and continuous block ``x`` (n x p2).

    ``y_mean`` / ``x_means`` are ``None`` until :func:`center` has been
    applied; afterwards they hold the offsets needed to map new
    observations onto the centered scale. ``z`` is never centered.
    """

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    y_mean: float | None = None
    x_means: np.ndarray | None = None
    response_name: str = "y"
    z_names: tuple = ()
    x_names: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n = y.shape[0]
        z = np.asarray(self.z, dtype=float).reshape(n, -1) if np.size(self.z) else np.zeros((n, 0))
        x = np.asarray(self.x, dtype=float).reshape(n, -1) if np.size(self.x) else np.zeros((n, 0))
        if n < 2:
            raise InvalidArgs("need at least 2 observations")
        for name, arr in (("y", y), ("z", z), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgs(f"non-finite entries in {name}")
        for arr in (y, z, x):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        if not self.z_names:
            object.__setattr__(self, "z_names", tuple(f"z_{k + 1}" for k in range(z.shape[1])))
        if not self.x_names:
            object.__setattr__(self, "x_names", tuple(f"x_{l + 1}" for l in range(x.shape[1])))
        if len(self.z_names) != z.shape[1] or len(self.x_names) != x.shape[1]:
            raise InvalidArgs("column name count does not match data")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p1(self):
        return self.z.shape[1]

    @property
    def p2(self):
        return self.x.shape[1]

    @property
    def centered(self):
        return self.y_mean is not None

    def raw_y(self):
        return self.y + (self.y_mean or 0.0)

    def raw_x(self):
        if self.x_means is None:
            return self.x
        return self.x + self.x_means

    def subset(self, rows):
        """Uncentered row subset (offsets are re-applied first)."""
        rows = np.asarray(rows)
        return Dataset(
            self.raw_y()[rows], self.z[rows], self.raw_x()[rows],
            response_name=self.response_name, z_names=self.z_names, x_names=self.x_names,
        )


def center(ds):
    """Center ``y`` and every ``x`` column; ``z`` is left untouched."""
    if ds.centered:
        raise AlreadyCentered("dataset is already centered")
    y_mean = float(ds.y.mean())
    x_means = ds.x.mean(axis=0)
    return replace(ds, y=ds.y - y_mean, x=ds.x - x_means, y_mean=y_mean, x_means=x_means)


def infer_roles(header):
    """Role map from the ``y`` / ``z_*`` / ``x_*`` naming convention."""
    if "y" not in header:
        raise MissingColumn("no response column 'y' and no role map supplied")
    return {
        "response": "y",
        "z": [h for h in header if h.startswith("z_")],
        "x": [h for h in header if h.startswith("x_")],
    }


def read_roles(path):
    with open(path) as fh:
        roles = json.load(fh)
    if "response" not in roles:
        raise MissingColumn("role map has no 'response' entry")
    roles.setdefault("z", [])
    roles.setdefault("x", [])
    return roles


def load_csv(path, role_map=None):
    """Read a headed CSV into an (uncentered) :class:`Dataset`.

    ``role_map`` is ``{"response": name, "z": [...], "x": [...]}``, a path
    to a JSON file holding one, or ``None`` to use name prefixes. Columns
    not mentioned are ignored.
    """
    path = Path(path)
    if isinstance(role_map, (str, Path)):
        role_map = read_roles(role_map)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no data rows")
    roles = role_map if role_map is not None else infer_roles(header)

    wanted = [roles["response"], *roles["z"], *roles["x"]]
    seen = set()
    for name in wanted:
        if name not in header:
            raise MissingColumn(f"column {name!r} not found in {path}")
        if name in seen:
            raise InvalidArgs(f"column {name!r} assigned more than one role")
        seen.add(name)
    idx = {h: j for j, h in enumerate(header)}

    def column(name):
        j = idx[name]
        out = np.empty(len(body))
        for i, row in enumerate(body):
            cell = row[j].strip() if j < len(row) else ""
            try:
                v = float(cell)
            except ValueError:
                raise NonNumericCell(i + 1, name, cell) from None
            if not math.isfinite(v):
                raise NonNumericCell(i + 1, name, cell)
            out[i] = v
        return out

    y = column(roles["response"])
    z = np.column_stack([column(c) for c in roles["z"]]) if roles["z"] else np.zeros((len(body), 0))
    x = np.column_stack([column(c) for c in roles["x"]]) if roles["x"] else np.zeros((len(body), 0))
    return Dataset(y, z, x, response_name=roles["response"],
                   z_names=tuple(roles["z"]), x_names=tuple(roles["x"]))


def write_csv(ds, path):
    """Write the raw (uncentered) values with a ``y``/``z_*``/``x_*`` style header."""
    header = [ds.response_name, *ds.z_names, *ds.x_names]
    data = np.column_stack([ds.raw_y(), ds.z, ds.raw_x()])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    return {"response": ds.response_name, "z": list(ds.z_names), "x": list(ds.x_names)}


def make_rng(seed, stream=0):
    """Counter-based generator; replicate ``k`` of run ``seed`` uses ``seed + k``."""
    return np.random.Generator(np.random.Philox(int(seed) + int(stream)))
