import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bridgemix.cli import main
from bridgemix.config import load_config
from bridgemix.errors import ConfigError

TOY_TOML = """
[run]
out = "{out}"
seed = 7

[sde]
kind = "bm"
tau = 1.0

[sde.beta]
variant = "constant"
rate = 1.0

[dataset]
builtin = "three_atoms"

[sampler]
steps = 64
paths = 300
"""


def write_toy_config(tmp_path, out_name="run"):
    cfg_path = tmp_path / "toy.toml"
    cfg_path.write_text(TOY_TOML.format(out=tmp_path / out_name))
    return cfg_path


def test_unknown_keys_rejected(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sde]\nkind = 'bm'\nnonsense = 3\n")
    with pytest.raises(ConfigError, match="nonsense"):
        load_config(bad)
    bad.write_text("[not_a_section]\nx = 1\n")
    with pytest.raises(ConfigError, match="not_a_section"):
        load_config(bad)


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[sde]\nkind = 'weird'\n[dataset]\nbuiltin = 'three_atoms'\n")
    assert main(["toy", "--config", str(bad)]) == 2
    assert main(["toy", "--config", str(tmp_path / "missing.toml")]) == 2


def test_toy_run_outputs_and_determinism(tmp_path):
    cfg = write_toy_config(tmp_path)
    assert main(["toy", "--config", str(cfg)]) == 0
    out = tmp_path / "run"
    for name in ("transition_matrix.json", "marginal_density_grid.csv",
                 "sample_paths.csv", "resolved_config.json"):
        assert (out / name).exists(), name
    payload = json.loads((out / "transition_matrix.json").read_text())
    assert payload["schema_version"] == 1
    assert "independent" in payload and "identity" in payload

    # deterministic rerun: byte-identical artifacts
    blobs = {n: (out / n).read_bytes() for n in ("transition_matrix.json",
                                                 "marginal_density_grid.csv",
                                                 "sample_paths.csv")}
    assert main(["toy", "--config", str(cfg)]) == 0
    for name, blob in blobs.items():
        assert (out / name).read_bytes() == blob, name

    # resolved-config round trip reproduces the run in a fresh directory
    resolved = out / "resolved_config.json"
    cfg2 = json.loads(resolved.read_text())
    cfg2["run"]["out"] = str(tmp_path / "run2")
    (tmp_path / "echo.json").write_text(json.dumps(cfg2))
    assert main(["toy", "--config", str(tmp_path / "echo.json")]) == 0
    for name, blob in blobs.items():
        assert (tmp_path / "run2" / name).read_bytes() == blob, name


def test_toy_marginal_grid_integrates_to_one(tmp_path):
    cfg = write_toy_config(tmp_path)
    assert main(["toy", "--config", str(cfg)]) == 0
    rows = (tmp_path / "run" / "marginal_density_grid.csv").read_text().splitlines()[1:]
    table = {}
    for row in rows:
        coupling, t, x, d = row.split(",")
        table.setdefault((coupling, float(t)), []).append((float(x), float(d)))
    for (coupling, t), pts in table.items():
        xs = np.array([p[0] for p in pts])
        ds = np.array([p[1] for p in pts])
        assert abs(np.trapezoid(ds, xs) - 1.0) < 0.01, (coupling, t)


def test_marginal_concentrates_at_coupling_starts(tmp_path):
    cfg = write_toy_config(tmp_path)
    main(["toy", "--config", str(cfg)])
    rows = (tmp_path / "run" / "marginal_density_grid.csv").read_text().splitlines()[1:]
    first_t = None
    mass_near_atoms = 0.0
    total = 0.0
    for row in rows:
        coupling, t, x, d = row.split(",")
        t, x, d = float(t), float(x), float(d)
        if coupling != "independent":
            continue
        if first_t is None:
            first_t = t
        if t != first_t:
            continue
        total += d
        if min(abs(x + 2), abs(x), abs(x - 2)) < 0.5:
            mass_near_atoms += d
    assert mass_near_atoms / total > 0.99


def test_inspect_weights_outputs(tmp_path):
    cfg_path = tmp_path / "w.toml"
    cfg_path.write_text(f"""
[run]
out = "{tmp_path / 'wrun'}"
seed = 3

[sampler]
paths = 4
steps_sweep = [50, 20]
""")
    assert main(["inspect-weights", "--config", str(cfg_path)]) == 0
    for steps in (50, 20):
        sub = tmp_path / "wrun" / f"T{steps}"
        for name in ("weights.csv", "denoised.csv", "states.csv"):
            assert (sub / name).exists()
    rows = (tmp_path / "wrun" / "T50" / "weights.csv").read_text().splitlines()
    header = rows[0].split(",")
    assert header[:3] == ["path", "step", "t"]
    w = np.array([[float(v) for v in r.split(",")[3:]] for r in rows[1:]])
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_train_and_sample_checkpoint_flow(tmp_path):
    train_cfg = tmp_path / "train.toml"
    train_cfg.write_text(f"""
[run]
out = "{tmp_path / 'train'}"

[dataset]
builtin = "three_atoms"

[coupling]
kind = "empirical"

[training]
loss = "endpoint_bridge"
steps = 300
batch_size = 32
hidden = [16, 16]
""")
    assert main(["train", "--config", str(train_cfg)]) == 0
    ckpt = tmp_path / "train" / "checkpoint.bin"
    assert ckpt.exists()
    curve = np.loadtxt(tmp_path / "train" / "loss_curve.csv", skiprows=1)
    assert curve.shape == (300,)

    sample_cfg = tmp_path / "sample.toml"
    sample_cfg.write_text(f"""
[run]
out = "{tmp_path / 'samples'}"

[dataset]
builtin = "three_atoms"

[coupling]
kind = "empirical"

[sampler]
steps = 32
paths = 20
record_paths = 2
drift = "endpoint"
checkpoint = "{ckpt}"
""")
    assert main(["sample", "--config", str(sample_cfg)]) == 0
    assert (tmp_path / "samples" / "terminal.csv").exists()
    traj = (tmp_path / "samples" / "trajectory_000.csv").read_text().splitlines()
    assert traj[0].split(",")[:2] == ["t", "x_1"]
    assert len(traj) == 34  # header + T+1 rows


def test_gp_command(tmp_path):
    cfg_path = tmp_path / "gp.toml"
    cfg_path.write_text(f"""
[run]
out = "{tmp_path / 'gp'}"

[sde.gamma]
kernel = "exponential"
variance = 1.0
length_scale = 0.2

[gp]
sizes = [16, 32]
flavors = ["white", "torus", "plane"]
samples_per_size = 4
demo_size = 16
""")
    assert main(["gp", "--config", str(cfg_path)]) == 0
    report = json.loads((tmp_path / "gp" / "gp_report.json").read_text())
    assert set(report["timings"]) == {"white", "torus", "plane"}
    field = np.fromfile(tmp_path / "gp" / "gp_torus_16.bin")
    assert field.size == 16 * 16


def test_variogram_command(tmp_path):
    cfg_path = tmp_path / "v.toml"
    cfg_path.write_text(f"""
[run]
out = "{tmp_path / 'vario'}"
seed = 5

[sde.gamma]
kernel = "exponential"
variance = 1.0
length_scale = 0.2

[variogram]
builtin_corpus = 6
corpus_size = 24
n_bins = 12
""")
    assert main(["variogram", "--config", str(cfg_path)]) == 0
    report = json.loads((tmp_path / "vario" / "variogram_report.json").read_text())
    assert len(report["images"]) == 6
    med = report["medians"]["exponential"]["length_scale_median"]
    assert 0.05 < med < 0.6


def test_console_script_runs(tmp_path):
    cfg = write_toy_config(tmp_path, out_name="cli_run")
    cfg_small = tmp_path / "small.toml"
    cfg_small.write_text(cfg.read_text().replace("paths = 300", "paths = 50"))
    proc = subprocess.run(
        [sys.executable, "-m", "bridgemix.cli", "toy", "--config", str(cfg_small)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
