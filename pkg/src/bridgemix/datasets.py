"""Builtin desk-scale datasets."""

from __future__ import annotations

import numpy as np

from .transport import Dataset


def three_atoms() -> Dataset:
    """The 1D toy: atoms at -2, 0, 2."""
    return Dataset(np.array([[-2.0], [0.0], [2.0]]))


def two_rings(n_points: int = 32, radii=(1.0, 2.0)) -> Dataset:
    """Points equally spaced on two concentric 2D rings (default 16 + 16).

    Chosen so exact-drift weight trajectories show the averaging, shuffling,
    and single-atom-lock-in phases at desk scale.
    """
    per_ring = n_points // len(radii)
    rows = []
    for k, radius in enumerate(radii):
        count = per_ring if k < len(radii) - 1 else n_points - per_ring * (len(radii) - 1)
        angles = 2.0 * np.pi * (np.arange(count) + 0.5 * k) / count
        rows.append(radius * np.stack([np.cos(angles), np.sin(angles)], axis=1))
    return Dataset(np.concatenate(rows, axis=0))


BUILTINS = {"three_atoms": three_atoms, "rings": two_rings}
