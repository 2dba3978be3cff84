"""Synthetic mixture generators, tabular CSV ingestion, and splitting.

Presets cover the toy targets used across the diagnostics: an 8-component
ring of Gaussians at radius 1.5 and a two-component 1-D mixture with
selectable separation.  Tabular loading applies min-max scaling of
continuous columns to [-1, 1] and one-hot encoding of categoricals, and
keeps the metadata needed to invert both exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class MixtureSpec:
    centers: np.ndarray  # K x d
    sigma: float
    weights: np.ndarray | None = None  # uniform when None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if self.sigma <= 0:
            raise ValueError("MixtureSpec: sigma must be positive")
        k = self.centers.shape[0]
        if self.weights is None:
            self.weights = np.full(k, 1.0 / k)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (k,) or abs(self.weights.sum() - 1) > 1e-9:
                raise ValueError("MixtureSpec: weights must sum to 1")


def ring8_spec(radius: float = 1.5, sigma: float = 0.1) -> MixtureSpec:
    angles = 2.0 * np.pi * np.arange(8) / 8.0
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return MixtureSpec(centers, sigma)


def two1d_spec(mu2: float = 1.5, sigma: float = 0.1) -> MixtureSpec:
    return MixtureSpec(np.array([[-mu2], [mu2]]), sigma)


PRESETS = {
    "ring8": ring8_spec,
    "two1d": two1d_spec,
    "two1d_wide": lambda: two1d_spec(mu2=3.0),
}


def sample_mixture(spec: MixtureSpec, n: int, rng) -> np.ndarray:
    if n < 1:
        raise ValueError("sample_mixture: n must be >= 1")
    comp = rng.choice(spec.centers.shape[0], size=n, p=spec.weights)
    noise = rng.standard_normal((n, spec.centers.shape[1])) * spec.sigma
    return spec.centers[comp] + noise


def split(matrix: np.ndarray, fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic shuffled split; outputs are disjoint and exhaustive."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("split: fraction must be in (0, 1)")
    matrix = np.asarray(matrix)
    idx = np.random.default_rng(seed).permutation(matrix.shape[0])
    k = int(matrix.shape[0] * fraction)
    return matrix[idx[:k]], matrix[idx[k:]]


# ---------------------------------------------------------------------------
# tabular schema and loading


@dataclass
class ColumnSpec:
    name: str
    kind: str  # continuous | categorical
    levels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise ValueError(f"column {self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and not self.levels:
            raise ValueError(f"column {self.name}: categorical needs levels")


@dataclass
class TabularSchema:
    columns: list[ColumnSpec]
    sensitive: str | None = None
    label: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("TabularSchema: duplicate column names")
        for special in (self.sensitive, self.label):
            if special is not None and special not in names:
                raise ValueError(f"TabularSchema: column {special!r} not declared")

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @classmethod
    def from_dict(cls, tree: dict) -> "TabularSchema":
        known = {"columns", "sensitive", "label"}
        unknown = set(tree) - known
        if unknown:
            raise ValueError(f"schema: unknown keys {sorted(unknown)}")
        cols = []
        for c in tree["columns"]:
            extra = set(c) - {"name", "kind", "levels"}
            if extra:
                raise ValueError(f"schema column: unknown keys {sorted(extra)}")
            cols.append(ColumnSpec(c["name"], c["kind"],
                                   [str(v) for v in c.get("levels", [])]))
        return cls(cols, tree.get("sensitive"), tree.get("label"))


@dataclass
class TabularMeta:
    """Everything needed to map encoded matrices back to raw columns."""

    schema: TabularSchema
    scale: dict  # name -> (min, max) for continuous columns
    layout: list  # (name, kind, start, width) in encoded order

    def encoded_width(self) -> int:
        return sum(w for _, _, _, w in self.layout)

    def block(self, name: str) -> tuple[int, int]:
        for n, _, start, width in self.layout:
            if n == name:
                return start, width
        raise KeyError(name)

    def positive_level_column(self, name: str) -> int:
        """Encoded index of level '1' of a binary categorical column."""
        col = self.schema.column(name)
        start, _ = self.block(name)
        if col.kind == "categorical":
            return start + col.levels.index("1")
        return start


def load_tabular(path, schema: TabularSchema):
    """Parse a CSV into the encoded float matrix plus inverse metadata."""
    return encode_tabular(read_columns(path, schema), schema)


def read_columns(path, schema: TabularSchema) -> dict:
    """Parse and validate raw columns; continuous as floats, categoricals
    as their level strings."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    col_idx = {}
    for col in schema.columns:
        if col.name not in header:
            raise ValueError(f"{path}: missing column {col.name!r}")
        col_idx[col.name] = header.index(col.name)

    raw: dict[str, list] = {c.name: [] for c in schema.columns}
    for i, row in enumerate(rows):
        for col in schema.columns:
            cell = row[col_idx[col.name]].strip()
            if col.kind == "continuous":
                try:
                    raw[col.name].append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {i + 2}, column {col.name!r}: "
                        f"non-numeric value {cell!r}"
                    ) from None
            else:
                if cell not in col.levels:
                    raise ValueError(
                        f"{path}: row {i + 2}, column {col.name!r}: "
                        f"unknown level {cell!r}"
                    )
                raw[col.name].append(cell)
    return raw


def encode_tabular(raw: dict, schema: TabularSchema):
    """Encode parsed columns: continuous min-max scaled to [-1, 1]
    (constant columns map to 0), categoricals one-hot in declared level
    order."""
    blocks = []
    layout = []
    scale = {}
    start = 0
    n = len(next(iter(raw.values())))
    for col in schema.columns:
        if col.kind == "continuous":
            vals = np.asarray(raw[col.name], dtype=np.float64)
            lo, hi = float(vals.min()), float(vals.max())
            scale[col.name] = (lo, hi)
            if hi > lo:
                enc = 2.0 * (vals - lo) / (hi - lo) - 1.0
            else:
                enc = np.zeros(n)
            blocks.append(enc.reshape(-1, 1))
            layout.append((col.name, "continuous", start, 1))
            start += 1
        else:
            k = len(col.levels)
            onehot = np.zeros((n, k))
            index = {lv: j for j, lv in enumerate(col.levels)}
            for i, v in enumerate(raw[col.name]):
                onehot[i, index[v]] = 1.0
            blocks.append(onehot)
            layout.append((col.name, "categorical", start, k))
            start += k
    matrix = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return matrix, TabularMeta(schema, scale, layout)


def encode_with_meta(columns: dict, meta: TabularMeta) -> np.ndarray:
    """Re-encode decoded columns with the stored scaling and layout, giving
    hard one-hots; the round trip partner of decode_tabular."""
    n = len(next(iter(columns.values())))
    out = np.zeros((n, meta.encoded_width()))
    for name, kind, start, width in meta.layout:
        if kind == "continuous":
            vals = np.asarray(columns[name], dtype=np.float64)
            lo, hi = meta.scale[name]
            if hi > lo:
                out[:, start] = 2.0 * (vals - lo) / (hi - lo) - 1.0
        else:
            levels = meta.schema.column(name).levels
            index = {lv: j for j, lv in enumerate(levels)}
            for i, v in enumerate(columns[name]):
                out[i, start + index[str(v)]] = 1.0
    return out


def decode_tabular(matrix: np.ndarray, meta: TabularMeta) -> dict:
    """Invert the encoding; soft one-hot blocks resolve by argmax."""
    out = {}
    for name, kind, start, width in meta.layout:
        block = matrix[:, start : start + width]
        if kind == "continuous":
            lo, hi = meta.scale[name]
            if hi > lo:
                out[name] = (block.ravel() + 1.0) / 2.0 * (hi - lo) + lo
            else:
                out[name] = np.full(matrix.shape[0], lo)
        else:
            levels = meta.schema.column(name).levels
            picks = block.argmax(axis=1)
            out[name] = np.array([levels[j] for j in picks])
    return out


def write_csv(path, columns: dict, order: list[str]):
    """Dump decoded columns with a header row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(order)
        n = len(next(iter(columns.values())))
        for i in range(n):
            writer.writerow([columns[name][i] for name in order])


# Schema presets for the three standard fairness benchmarks; users supply
# the CSVs.  Sensitive attributes: binarized race (Adult), the white-flag
# column (Law School), sex (Credit Card Default).
ADULT_SCHEMA = TabularSchema(
    columns=[
        ColumnSpec("age", "continuous"),
        ColumnSpec("education-num", "continuous"),
        ColumnSpec("capital-gain", "continuous"),
        ColumnSpec("capital-loss", "continuous"),
        ColumnSpec("hours-per-week", "continuous"),
        ColumnSpec("workclass", "categorical",
                   ["Private", "Self-emp", "Gov", "Other"]),
        ColumnSpec("marital-status", "categorical",
                   ["Married", "Never-married", "Other"]),
        ColumnSpec("race", "categorical", ["1", "0"]),  # 1 = White
        ColumnSpec("sex", "categorical", ["Male", "Female"]),
        ColumnSpec("income", "categorical", ["0", "1"]),  # 1 = >50K
    ],
    sensitive="race",
    label="income",
)

LAW_SCHEMA = TabularSchema(
    columns=[
        ColumnSpec("lsat", "continuous"),
        ColumnSpec("gpa", "continuous"),
        ColumnSpec("white", "categorical", ["0", "1"]),
        ColumnSpec("admit", "categorical", ["0", "1"]),
    ],
    sensitive="white",
    label="admit",
)

CREDIT_SCHEMA = TabularSchema(
    columns=[
        ColumnSpec("limit_bal", "continuous"),
        ColumnSpec("age", "continuous"),
        ColumnSpec("bill_amt1", "continuous"),
        ColumnSpec("pay_amt1", "continuous"),
        ColumnSpec("sex", "categorical", ["1", "0"]),
        ColumnSpec("default", "categorical", ["0", "1"]),
    ],
    sensitive="sex",
    label="default",
)

SCHEMA_PRESETS = {
    "adult": ADULT_SCHEMA,
    "law": LAW_SCHEMA,
    "credit": CREDIT_SCHEMA,
}
