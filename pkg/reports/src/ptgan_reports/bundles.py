"""Read-only access to run directories.

A run directory contains metrics.jsonl (one JSON object per checkpoint,
schema tag "v1"), an optional frozen config.yaml, and optional sample CSVs
whose last column is the interpolation weight used per row.  Nothing here
ever writes into a run directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

SCHEMA_VERSION = "v1"


@dataclass
class RunBundle:
    path: str
    config: dict
    metrics: list[dict]
    _samples: dict = field(default_factory=dict, repr=False)

    def metric_series(self, name: str):
        """(iterations, values) for one metric field; raises KeyError
        naming the run when a row lacks the field."""
        iters, vals = [], []
        for row in self.metrics:
            if name not in row:
                raise KeyError(
                    f"run {self.path}: metrics field {name!r} missing at "
                    f"iteration {row.get('iteration')}"
                )
            iters.append(row["iteration"])
            vals.append(row[name])
        return np.array(iters), np.array(vals, dtype=float)

    def samples(self, name: str = "samples.csv"):
        """Sample rows as (values, alphas, header); cached per file."""
        if name not in self._samples:
            path = os.path.join(self.path, name)
            with open(path) as fh:
                header = fh.readline().strip().split(",")
                body = np.loadtxt(fh, delimiter=",", ndmin=2)
            if header[-1] != "alpha":
                raise ValueError(f"{path}: expected trailing alpha column")
            self._samples[name] = (body[:, :-1], body[:, -1], header[:-1])
        return self._samples[name]


def load_run(path: str) -> RunBundle:
    metrics_path = os.path.join(path, "metrics.jsonl")
    if not os.path.exists(metrics_path):
        raise FileNotFoundError(f"run {path}: metrics.jsonl not found")
    rows = []
    with open(metrics_path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("schema") != SCHEMA_VERSION:
                raise ValueError(
                    f"run {path}: line {i + 1} has schema "
                    f"{row.get('schema')!r}, expected {SCHEMA_VERSION!r}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"run {path}: metrics.jsonl is empty")
    rows.sort(key=lambda r: r["iteration"])

    config = {}
    config_path = os.path.join(path, "config.yaml")
    if os.path.exists(config_path):
        with open(config_path) as fh:
            config = yaml.safe_load(fh) or {}
    return RunBundle(path=path, config=config, metrics=rows)
