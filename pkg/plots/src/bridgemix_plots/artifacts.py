"""Loading and validating run artifacts."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SUPPORTED_SCHEMA = 1


class MissingArtifactError(FileNotFoundError):
    """A required artifact is absent; the message names the expected file."""


class SchemaMismatchError(RuntimeError):
    pass


def require(run_dir, name) -> Path:
    path = Path(run_dir) / name
    if not path.exists():
        raise MissingArtifactError(
            f"expected artifact {name!r} in {run_dir} (not found at {path})"
        )
    return path


def load_json(run_dir, name):
    payload = json.loads(require(run_dir, name).read_text())
    version = payload.get("schema_version")
    if version != SUPPORTED_SCHEMA:
        raise SchemaMismatchError(
            f"{name}: schema_version {version!r} unsupported (need {SUPPORTED_SCHEMA})"
        )
    return payload


def load_csv_columns(run_dir, name):
    """Header CSV -> dict of column name -> list of strings."""
    path = require(run_dir, name)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = {k: [] for k in reader.fieldnames}
        for row in reader:
            for k, v in row.items():
                cols[k].append(v)
    return cols


def floats(values):
    return np.array([float(v) for v in values])


def read_field_bin(path, height, width, channels):
    data = np.fromfile(path, dtype="<f8")
    expect = height * width * channels
    if data.size != expect:
        raise SchemaMismatchError(
            f"{path}: expected {expect} float64 values, found {data.size}"
        )
    return data.reshape(height, width, channels)
