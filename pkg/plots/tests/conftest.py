"""Handcrafted artifact fixtures following the documented bridgemix schemas."""

import json

import numpy as np
import pytest


def write_json(path, payload):
    path.write_text(json.dumps({"schema_version": 1, **payload}, indent=2))


@pytest.fixture
def toy_run(tmp_path):
    run = tmp_path / "toy_run"
    run.mkdir()
    freq = [[1 / 9] * 3] * 3
    write_json(run / "transition_matrix.json", {
        "atoms": [[-2.0], [0.0], [2.0]],
        "paths": 100,
        "steps": 16,
        "independent": {"counts": [[11] * 3] * 3, "frequencies": freq,
                        "n_unassigned": 0, "tolerance": 0.5},
        "identity": {"counts": np.diag([33, 33, 34]).tolist(),
                     "frequencies": np.eye(3).tolist(),
                     "n_unassigned": 0, "tolerance": 0.5},
    })
    with open(run / "marginal_density_grid.csv", "w") as fh:
        fh.write("coupling,t,x,density\n")
        for name in ("independent", "identity"):
            for t in np.linspace(0.1, 0.9, 5):
                for x in np.linspace(-3, 3, 13):
                    d = np.exp(-0.5 * x * x)
                    fh.write(f"{name},{t},{x},{d}\n")
    with open(run / "sample_paths.csv", "w") as fh:
        fh.write("coupling,path,t,x\n")
        for name in ("independent", "identity"):
            for p in range(3):
                for t in np.linspace(0, 1, 9):
                    fh.write(f"{name},{p},{t},{np.sin(t + p)}\n")
    return run


@pytest.fixture
def weights_run(tmp_path):
    run = tmp_path / "weights_run"
    sub = run / "T20"
    sub.mkdir(parents=True)
    write_json(run / "weights_summary.json", {
        "sweep": [20], "paths": 2, "atoms": [[0.0, 1.0]] * 4,
    })
    n_atoms, dim, steps = 4, 2, 20
    rng = np.random.default_rng(0)
    with open(sub / "weights.csv", "w") as fh:
        fh.write("path,step,t," + ",".join(f"w_{k+1}" for k in range(n_atoms)) + "\n")
        for p in range(2):
            for s in range(steps):
                w = rng.dirichlet(np.ones(n_atoms))
                fh.write(f"{p},{s},{s / steps}," + ",".join(map(str, w)) + "\n")
    with open(sub / "denoised.csv", "w") as fh:
        fh.write("path,step,t," + ",".join(f"e_{k+1}" for k in range(dim)) + "\n")
        for p in range(2):
            for s in range(steps):
                fh.write(f"{p},{s},{s / steps},0.1,0.2\n")
    with open(sub / "states.csv", "w") as fh:
        fh.write("path,step,t," + ",".join(f"x_{k+1}" for k in range(dim)) + "\n")
        for p in range(2):
            for s in range(steps + 1):
                fh.write(f"{p},{s},{s / steps},0.3,-0.1\n")
    return run


@pytest.fixture
def gp_run(tmp_path):
    run = tmp_path / "gp_run"
    run.mkdir()
    size, channels = 8, 1
    rng = np.random.default_rng(1)
    fields = {}
    for flavor in ("white", "torus"):
        name = f"gp_{flavor}_{size}.bin"
        arr = rng.standard_normal((size, size, channels)).astype("<f8")
        (run / name).write_bytes(arr.tobytes())
        fields[flavor] = name
    write_json(run / "gp_report.json", {
        "demo_size": size, "channels": channels, "kernel": "exponential",
        "variance": 1.0, "length_scale": 0.2, "sizes": [8],
        "fields": fields, "timings": {f: {"8": 1e-4} for f in fields},
    })
    return run


@pytest.fixture
def variogram_run(tmp_path):
    run = tmp_path / "vario_run"
    run.mkdir()
    lags = np.linspace(0.05, 0.45, 8)
    gamma = 1.0 - np.exp(-lags / 0.2)
    write_json(run / "variogram_report.json", {
        "images": [
            {
                "image": "synthetic_000",
                "channels": [
                    {
                        "lags": lags.tolist(),
                        "gamma": gamma.tolist(),
                        "counts": [100] * 8,
                        "fits": {
                            "exponential": {"variance": 1.0, "length_scale": 0.2,
                                            "objective": 0.01, "theta_pinned": False},
                            "rbf": {"variance": 1.0, "length_scale": 0.15,
                                    "objective": 0.05, "theta_pinned": False},
                        },
                    }
                ],
            }
        ],
        "medians": {"exponential": {"length_scale_median": 0.2}},
        "n_bins": 8,
        "max_lag": 0.5,
    })
    return run
