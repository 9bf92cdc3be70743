"""Run configuration: TOML/JSON parsing, strict validation, resolved echo.

Unknown sections or keys are rejected. Every command writes the fully
resolved configuration (defaults filled in) as ``resolved_config.json`` next
to its outputs; loading that file reproduces the run.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import tomli

from .covariance import (
    ExponentialKernel,
    IdentityCovariance,
    RbfKernel,
    WhiteNoiseKernel,
    build_torus_operator,
    embed_plane_operator,
)
from .dataio import read_dataset_csv, read_field_bin
from .datasets import BUILTINS
from .errors import ConfigError
from .regressor import TrainConfig
from .schedules import ConstantBeta, GeometricVE, LinearVP
from .sde import SdeSpec
from .transport import (
    Dataset,
    DeltaStart,
    EmpiricalStart,
    GaussianStart,
    IdentityCoupling,
    centered_start,
)

# section -> key -> (type tuple, default); None default means optional/derived
SCHEMA = {
    "run": {
        "out": ((str,), "runs/out"),
        "seed": ((int,), 0),
        "threads": ((int,), 1),
    },
    "sde": {
        "kind": ((str,), "bm"),
        "alpha": ((int, float), 0.0),
        "tau": ((int, float), 1.0),
        "dim": ((int,), None),
    },
    "sde.beta": {
        "variant": ((str,), "constant"),
        "rate": ((int, float), 1.0),
        "beta_min": ((int, float), 0.1),
        "beta_max": ((int, float), 20.0),
        "sigma_min": ((int, float), 0.01),
        "sigma_max": ((int, float), 50.0),
    },
    "sde.gamma": {
        "kind": ((str,), "identity"),
        "path": ((str,), None),
        "height": ((int,), 32),
        "width": ((int,), 32),
        "channels": ((int,), 1),
        "kernel": ((str,), "exponential"),
        "variance": ((int, float), 1.0),
        "length_scale": ((int, float), 0.2),
        "max_doublings": ((int,), 4),
        "allow_truncation": ((bool,), False),
    },
    "coupling": {
        "kind": ((str,), "empirical"),
        "x0": ((list,), None),
        "centered": ((bool,), False),
        "sigma0_sq": ((int, float), 1.0),
        "start_path": ((str,), None),
    },
    "dataset": {
        "builtin": ((str,), None),
        "path": ((str,), None),
        "format": ((str,), "csv"),
        "height": ((int,), None),
        "width": ((int,), None),
        "channels": ((int,), 1),
    },
    "sampler": {
        "steps": ((int,), 1024),
        "paths": ((int,), 2000),
        "record_paths": ((int,), 5),
        "record_weights": ((bool,), False),
        "record_denoised": ((bool,), False),
        "steps_sweep": ((list,), None),
        "atom_tolerance": ((int, float), 0.5),
        "drift": ((str,), "exact"),  # exact | checkpoint path via 'checkpoint'
        "checkpoint": ((str,), None),
        "field": ((str,), "bridge"),  # bridge | reversal
    },
    "training": {
        "loss": ((str,), "endpoint_bridge"),
        "batch_size": ((int,), 128),
        "steps": ((int,), 5000),
        "learning_rate": ((int, float), 1e-3),
        "lr_schedule": ((str,), "constant"),
        "optimizer": ((str,), "adam"),
        "t_eps": ((int, float), 1e-3),
        "seed": ((int,), 0),
        "hidden": ((list,), [64, 64]),
        "activation": ((str,), "tanh"),
        "time_features": ((int,), 4),
    },
    "gp": {
        "sizes": ((list,), [16, 32, 64, 128]),
        "flavors": ((list,), ["white", "torus", "plane"]),
        "samples_per_size": ((int,), 16),
        "demo_size": ((int,), 32),
    },
    "variogram": {
        "inputs": ((list,), None),
        "builtin_corpus": ((int,), 0),
        "corpus_size": ((int,), 32),
        "n_bins": ((int,), 16),
        "max_lag": ((int, float), 0.5),
        "families": ((list,), ["exponential", "rbf"]),
    },
}


def _validate(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a table")
    # flatten one level of nesting into dotted section names; the JSON echo
    # stores dotted names directly, TOML nests them
    flat = {}
    for key, value in raw.items():
        if not isinstance(value, dict):
            raise ConfigError(f"top-level entry {key!r} must be a section")
        if "." in key:
            flat[key] = dict(value)
            continue
        scalars = {}
        for sub, subval in value.items():
            if isinstance(subval, dict):
                flat[f"{key}.{sub}"] = dict(subval)
            else:
                scalars[sub] = subval
        if scalars or key in SCHEMA:
            flat[key] = scalars
    resolved = {}
    for section, content in flat.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        spec = SCHEMA[section]
        resolved[section] = {}
        for key, value in content.items():
            if key not in spec:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            types, _ = spec[key]
            if value is not None and not isinstance(value, types):
                if isinstance(value, int) and float in types:
                    value = float(value)
                else:
                    raise ConfigError(
                        f"[{section}] {key} must be of type {types}, got {type(value).__name__}"
                    )
            resolved[section][key] = value
    # fill defaults
    for section, spec in SCHEMA.items():
        resolved.setdefault(section, {})
        for key, (_, default) in spec.items():
            resolved[section].setdefault(key, default)
    return resolved


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            raw = tomli.loads(path.read_text())
    except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = _validate(raw)
    cfg["_base_dir"] = str(path.parent)
    return cfg


def echo_resolved(cfg, out_dir):
    """Write the resolved config next to the outputs; parsing it reproduces the run."""
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    path = Path(out_dir) / "resolved_config.json"
    path.write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _resolve_path(cfg, rel):
    base = Path(cfg.get("_base_dir", "."))
    p = Path(rel)
    return p if p.is_absolute() else base / p


def build_kernel(gcfg):
    kind = gcfg["kernel"]
    if kind == "white":
        return WhiteNoiseKernel(gcfg["variance"])
    if kind == "exponential":
        return ExponentialKernel(gcfg["variance"], gcfg["length_scale"])
    if kind == "rbf":
        return RbfKernel(gcfg["variance"], gcfg["length_scale"])
    raise ConfigError(f"unknown kernel {kind!r}")


def build_gamma(cfg, dim):
    gcfg = cfg["sde.gamma"]
    kind = gcfg["kind"]
    if kind == "identity":
        return IdentityCovariance(dim)
    if kind == "dense":
        if not gcfg["path"]:
            raise ConfigError("[sde.gamma] dense backing needs 'path'")
        from .covariance import DenseCovariance

        return DenseCovariance(np.loadtxt(_resolve_path(cfg, gcfg["path"]), delimiter=","))
    height, width, channels = gcfg["height"], gcfg["width"], gcfg["channels"]
    kernel = build_kernel(gcfg)
    if kind == "torus":
        return build_torus_operator(
            kernel, height, width, channels, allow_truncation=gcfg["allow_truncation"]
        )
    if kind == "plane":
        return embed_plane_operator(
            kernel, height, width, channels,
            max_doublings=gcfg["max_doublings"],
            allow_truncation=gcfg["allow_truncation"],
        )
    raise ConfigError(f"unknown gamma backing {kind!r}")


def build_dataset(cfg) -> Dataset:
    dcfg = cfg["dataset"]
    if dcfg["builtin"]:
        if dcfg["builtin"] not in BUILTINS:
            raise ConfigError(f"unknown builtin dataset {dcfg['builtin']!r}")
        return BUILTINS[dcfg["builtin"]]()
    if not dcfg["path"]:
        raise ConfigError("[dataset] needs 'builtin' or 'path'")
    path = _resolve_path(cfg, dcfg["path"])
    if dcfg["format"] == "csv":
        return Dataset(read_dataset_csv(path))
    if dcfg["format"] == "bin":
        if dcfg["height"] is None or dcfg["width"] is None:
            raise ConfigError("[dataset] binary fields need 'height' and 'width'")
        field = read_field_bin(path, dcfg["height"], dcfg["width"], dcfg["channels"])
        return Dataset(field.reshape(1, -1))
    raise ConfigError(f"unknown dataset format {dcfg['format']!r}")


def build_sde(cfg, dim) -> SdeSpec:
    scfg = cfg["sde"]
    bcfg = cfg["sde.beta"]
    variant = bcfg["variant"]
    if variant == "constant":
        beta = ConstantBeta(bcfg["rate"])
    elif variant == "linear_vp":
        beta = LinearVP(bcfg["beta_min"], bcfg["beta_max"])
    elif variant == "geometric_ve":
        beta = GeometricVE(bcfg["sigma_min"], bcfg["sigma_max"])
    else:
        raise ConfigError(f"unknown beta variant {variant!r}")
    if scfg["dim"] is not None and scfg["dim"] != dim:
        raise ConfigError(f"[sde] dim {scfg['dim']} != dataset dim {dim}")
    gamma = build_gamma(cfg, dim)
    try:
        return SdeSpec(
            kind=scfg["kind"], alpha=scfg["alpha"], beta=beta, gamma=gamma,
            tau=scfg["tau"], dim=dim,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_coupling(cfg, dataset: Dataset, sde: SdeSpec):
    ccfg = cfg["coupling"]
    kind = ccfg["kind"]
    if kind == "identity":
        return IdentityCoupling(dataset)
    if kind == "gaussian":
        return GaussianStart(dataset, sde.gamma, sigma0_sq=ccfg["sigma0_sq"])
    if kind == "empirical":
        if ccfg["start_path"]:
            start = Dataset(read_dataset_csv(_resolve_path(cfg, ccfg["start_path"])))
        else:
            start = dataset
        return EmpiricalStart(start, dataset)
    if kind == "delta":
        if ccfg["centered"]:
            x0 = centered_start(dataset, sde)
        elif ccfg["x0"] is not None:
            x0 = np.asarray(ccfg["x0"], dtype=float)
        else:
            raise ConfigError("[coupling] delta needs 'x0' or centered = true")
        return DeltaStart(x0, dataset)
    raise ConfigError(f"unknown coupling kind {kind!r}")


def build_train_config(cfg) -> TrainConfig:
    tcfg = cfg["training"]
    try:
        return TrainConfig(
            loss=tcfg["loss"],
            batch_size=tcfg["batch_size"],
            steps=tcfg["steps"],
            learning_rate=tcfg["learning_rate"],
            lr_schedule=tcfg["lr_schedule"],
            optimizer=tcfg["optimizer"],
            t_eps=tcfg["t_eps"],
            seed=tcfg["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
