"""On-disk formats shared by the CLI and the plots package.

* Datasets: headerless CSV, one sample per row, one column per dimension.
* Fields: flat binary of float64 little-endian values, H*W*C of them in
  row-major channel-last order (index (i, j, c) at offset (i*W + j)*C + c),
  or the same values as CSV with one pixel per row and C columns.
* Trajectories: CSV with header ``t, x_1..x_D`` plus optional ``w_1..w_N``
  and ``e_1..e_D`` blocks (weights and denoised expectation per step; the
  final row carries empty cells there since drifts are evaluated at the
  left endpoint of each step).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

FLOAT_FMT = "%.17g"


def write_dataset_csv(path, samples):
    np.savetxt(path, np.atleast_2d(samples), delimiter=",", fmt=FLOAT_FMT)


def read_dataset_csv(path):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    return arr


def write_field_bin(path, field):
    field = np.asarray(field, dtype="<f8")
    if field.ndim == 2:
        field = field[:, :, None]
    if field.ndim != 3:
        raise ConfigError("field must be (H, W[, C])")
    with open(path, "wb") as fh:
        fh.write(field.tobytes())  # row-major, channel-last


def read_field_bin(path, height, width, channels=1):
    data = np.fromfile(path, dtype="<f8")
    expect = height * width * channels
    if data.size != expect:
        raise ConfigError(
            f"{path}: expected {expect} float64 values for "
            f"{height}x{width}x{channels}, found {data.size}"
        )
    return data.reshape(height, width, channels)


def write_field_csv(path, field):
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        field = field[:, :, None]
    height, width, channels = field.shape
    np.savetxt(path, field.reshape(height * width, channels), delimiter=",", fmt=FLOAT_FMT)


def read_field_csv(path, height, width):
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if arr.shape[0] != height * width:
        raise ConfigError(f"{path}: expected {height * width} pixel rows")
    return arr.reshape(height, width, arr.shape[1])


def write_trajectory_csv(path, trajectory):
    """Columns t, x_1..x_D, then w_1..w_N and e_1..e_D when recorded."""
    times = trajectory.times
    states = trajectory.states
    dim = states.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(dim)]
    blocks = [times[:, None], states]
    for name, track in (("w", trajectory.weights), ("e", trajectory.denoised)):
        if track is None:
            continue
        header += [f"{name}_{i + 1}" for i in range(track.shape[1])]
        padded = np.full((times.shape[0], track.shape[1]), np.nan)
        padded[: track.shape[0]] = track
        blocks.append(padded)
    table = np.concatenate(blocks, axis=1)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join("" if np.isnan(v) else FLOAT_FMT % v for v in row) + "\n")
