"""The four figure renderers: toy, weights, gp, variogram."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .artifacts import (
    MissingArtifactError,
    floats,
    load_csv_columns,
    load_json,
    read_field_bin,
    require,
)


def render_toy(run_dir, out_path):
    """Marginal heatmap + sample paths per coupling, transition matrices below."""
    matrices = load_json(run_dir, "transition_matrix.json")
    grid = load_csv_columns(run_dir, "marginal_density_grid.csv")
    paths = load_csv_columns(run_dir, "sample_paths.csv")

    couplings = [c for c in ("independent", "identity") if c in matrices]
    fig, axes = plt.subplots(2, len(couplings), figsize=(5 * len(couplings), 7))
    axes = np.atleast_2d(axes)
    coupling_col = np.array(grid["coupling"])
    ts = floats(grid["t"])
    xs = floats(grid["x"])
    dens = floats(grid["density"])
    p_coupling = np.array(paths["coupling"])
    p_path = np.array(paths["path"])
    p_t = floats(paths["t"])
    p_x = floats(paths["x"])

    for col, name in enumerate(couplings):
        ax = axes[0, col]
        mask = coupling_col == name
        t_vals = np.unique(ts[mask])
        x_vals = np.unique(xs[mask])
        z = dens[mask].reshape(t_vals.size, x_vals.size)
        ax.pcolormesh(t_vals, x_vals, z.T, cmap="YlOrBr", shading="auto")
        for pid in np.unique(p_path[p_coupling == name]):
            sel = (p_coupling == name) & (p_path == pid)
            ax.plot(p_t[sel], p_x[sel], color="black", linewidth=0.8)
        ax.set_title(f"{name}: mixture marginal + paths from 0")
        ax.set_xlabel("t")
        ax.set_ylabel("x")

        ax = axes[1, col]
        freq = np.array(matrices[name]["frequencies"])
        im = ax.imshow(freq, cmap="viridis", vmin=0, vmax=1)
        for i in range(freq.shape[0]):
            for j in range(freq.shape[1]):
                ax.text(j, i, f"{freq[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=8)
        ax.set_title(f"{name}: start-to-end frequencies")
        ax.set_xlabel("end atom")
        ax.set_ylabel("start atom")
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def _weights_subdir(run_dir):
    summary = load_json(run_dir, "weights_summary.json")
    sweep = summary["sweep"]
    return Path(run_dir) / f"T{sweep[0]}", summary


def render_weights(run_dir, out_path):
    """Weight trajectories of one path plus state/denoised component strips."""
    sub, summary = _weights_subdir(run_dir)
    rel = sub.relative_to(run_dir)
    states = load_csv_columns(run_dir, rel / "states.csv")
    panels = 3
    have_weights = True
    try:
        weights = load_csv_columns(run_dir, rel / "weights.csv")
    except MissingArtifactError:
        have_weights = False
        panels = 2
    denoised = load_csv_columns(run_dir, rel / "denoised.csv")

    fig, axes = plt.subplots(panels, 1, figsize=(8, 2.6 * panels), sharex=True)
    axes = np.atleast_1d(axes)
    row = 0
    if have_weights:
        ax = axes[row]
        row += 1
        pid = weights["path"][0]
        sel = np.array(weights["path"]) == pid
        t = floats(weights["t"])[sel]
        w_cols = [k for k in weights if k.startswith("w_")]
        cmap = plt.get_cmap("twilight")
        for k, col in enumerate(w_cols):
            ax.plot(t, floats(weights[col])[sel], linewidth=0.7,
                    color=cmap(k / max(1, len(w_cols) - 1)))
        ax.set_ylabel("posterior weight")
        ax.set_title(f"path {pid}: endpoint weights over time")
    else:
        fig.text(0.5, 0.98, "weights not recorded in this run: panel omitted",
                 ha="center", va="top", fontsize=9)

    for name, cols, ax in (
        ("state", states, axes[row]),
        ("denoised", denoised, axes[row + 1] if row + 1 < panels else axes[row]),
    ):
        pid = cols["path"][0]
        sel = np.array(cols["path"]) == pid
        t = floats(cols["t"])[sel]
        comp_cols = [k for k in cols if k[0] in "xe" and "_" in k]
        for col in comp_cols:
            ax.plot(t, floats(cols[col])[sel], linewidth=0.9, label=col)
        ax.set_ylabel(name)
        if len(comp_cols) <= 4:
            ax.legend(fontsize=7)
        if name == "denoised":
            break
        row += 1
    axes[-1].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_gp(run_dir, out_path):
    """One sample field per flavor, shared color scale per row."""
    report = load_json(run_dir, "gp_report.json")
    size = report["demo_size"]
    channels = report["channels"]
    flavors = list(report["fields"])
    fig, axes = plt.subplots(1, len(flavors), figsize=(3.4 * len(flavors), 3.4))
    axes = np.atleast_1d(axes)
    for ax, flavor in zip(axes, flavors):
        path = require(run_dir, report["fields"][flavor])
        field = read_field_bin(path, size, size, channels)
        img = field[:, :, 0]
        im = ax.imshow(img, cmap="magma")
        ax.set_title(f"{flavor} ({size}x{size})")
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, shrink=0.75)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_variogram(run_dir, out_path):
    """Empirical dots + fitted curves per image/channel, one panel per image."""
    report = load_json(run_dir, "variogram_report.json")
    images = report["images"]
    show = images[: min(4, len(images))]
    fig, axes = plt.subplots(1, len(show), figsize=(3.6 * len(show), 3.2),
                             squeeze=False)
    style = {"exponential": "-", "rbf": ":"}
    for ax, entry in zip(axes[0], show):
        palette = plt.get_cmap("tab10")
        for ci, channel in enumerate(entry["channels"]):
            lags = np.array(channel["lags"])
            ax.plot(lags, channel["gamma"], "o", markersize=3, color=palette(ci))
            grid = np.linspace(lags.min(), lags.max(), 120)
            for fam, fit in channel["fits"].items():
                s2, th = fit["variance"], fit["length_scale"]
                if fam == "exponential":
                    curve = s2 * (1.0 - np.exp(-grid / th))
                else:
                    curve = s2 * (1.0 - np.exp(-0.5 * (grid / th) ** 2))
                ax.plot(grid, curve, style.get(fam, "--"), color=palette(ci),
                        linewidth=1.0)
        ax.set_title(entry["image"], fontsize=8)
        ax.set_xlabel("lag")
        ax.set_ylabel("semivariance")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


RENDERERS = {
    "toy": render_toy,
    "weights": render_weights,
    "gp": render_gp,
    "variogram": render_variogram,
}
