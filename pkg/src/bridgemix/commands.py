"""Implementations behind the CLI subcommands.

Every command takes the resolved config, writes its artifacts under the run
directory, and echoes the resolved config next to them. All JSON artifacts
carry ``schema_version``. Outputs are byte-identical across reruns with the
same (config, seed), except the wall-clock timing values in the gp report.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .config import (
    build_coupling,
    build_dataset,
    build_kernel,
    build_sde,
    build_train_config,
    echo_resolved,
)
from .covariance import build_torus_operator, embed_plane_operator
from .dataio import FLOAT_FMT, write_field_bin, write_trajectory_csv
from .datasets import two_rings
from .errors import ConfigError
from .objectives import LossKind
from .regressor import Mlp, NetSpec, load_checkpoint, save_checkpoint, train
from .sampler import (
    estimate_transition_matrix,
    euler_sample,
    run_bridge_realization,
    run_paths,
)
from .sde import bridge_params
from .transport import (
    Dataset,
    DeltaStart,
    EmpiricalStart,
    ExactBridgeMixtureField,
    ExactReversalField,
    IdentityCoupling,
    LearnedEndpointField,
    LearnedScoreField,
)
from .variogram import empirical_variogram, fit_variogram_wls

SCHEMA_VERSION = 1


def _prepare_out(cfg):
    out = Path(cfg["run"]["out"])
    out.mkdir(parents=True, exist_ok=True)
    echo_resolved(cfg, out)
    return out


def _dump_json(path, payload):
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _matrix_payload(est):
    return {
        "counts": est.counts.tolist(),
        "frequencies": est.frequencies.tolist(),
        "n_unassigned": est.n_unassigned,
        "tolerance": est.tolerance,
    }


def cmd_toy(cfg):
    """The 1D three-atom transport under both couplings.

    Emits transition_matrix.json (coupled-bridge realization, plus the
    posterior-drift Markov field's matrices under "markov_field"),
    marginal_density_grid.csv, and sample_paths.csv (5 paths from 0).
    """
    out = _prepare_out(cfg)
    data = build_dataset(cfg)
    sde = build_sde(cfg, data.dim)
    seed = cfg["run"]["seed"]
    threads = cfg["run"]["threads"]
    steps = cfg["sampler"]["steps"]
    n_paths = cfg["sampler"]["paths"]
    tol = cfg["sampler"]["atom_tolerance"]
    couplings = {
        "independent": EmpiricalStart(data, data),
        "identity": IdentityCoupling(data),
    }

    matrices = {}
    for name, coupling in couplings.items():
        bundle = run_bridge_realization(sde, coupling, steps, n_paths,
                                        seed=seed, threads=threads)
        est = estimate_transition_matrix(bundle.initial, bundle.terminal,
                                         data.samples, tolerance=tol)
        matrices[name] = _matrix_payload(est)
        field = ExactBridgeMixtureField(sde, coupling)
        markov = run_paths(field, coupling, steps, n_paths, seed=seed + 1,
                           threads=threads)
        est_m = estimate_transition_matrix(markov.initial, markov.terminal,
                                           data.samples, tolerance=tol)
        matrices.setdefault("markov_field", {})[name] = _matrix_payload(est_m)
    _dump_json(out / "transition_matrix.json", {
        "atoms": data.samples.tolist(),
        "paths": n_paths,
        "steps": steps,
        **{k: v for k, v in matrices.items()},
    })

    # closed-form mixture marginal over a (t, x) grid, per coupling
    ts = np.linspace(0.02, sde.tau - 0.02, 49)
    xs = np.linspace(-4.0, 4.0, 401)
    rows = []
    for name, coupling in couplings.items():
        if isinstance(coupling, IdentityCoupling):
            pairs = [(a, a, 1.0 / data.n) for a in data.samples[:, 0]]
        else:
            pairs = [
                (a, b, 1.0 / data.n**2)
                for a in data.samples[:, 0]
                for b in data.samples[:, 0]
            ]
        for t in ts:
            bp = bridge_params(sde, float(t))
            dens = np.zeros_like(xs)
            for x0, x1, w in pairs:
                mean = bp.a_under * x0 + bp.a_over * x1
                dens += w * np.exp(-0.5 * (xs - mean) ** 2 / bp.v_br) / np.sqrt(
                    2 * np.pi * bp.v_br
                )
            rows.extend(
                (name, t, x, d) for x, d in zip(xs, dens)
            )
    with open(out / "marginal_density_grid.csv", "w") as fh:
        fh.write("coupling,t,x,density\n")
        for name, t, x, d in rows:
            fh.write(f"{name},{FLOAT_FMT % t},{FLOAT_FMT % x},{FLOAT_FMT % d}\n")

    # 5 recorded bridge-realization paths started at 0 per coupling
    with open(out / "sample_paths.csv", "w") as fh:
        fh.write("coupling,path,t,x\n")
        for name, coupling in couplings.items():
            bundle = run_bridge_realization(
                sde, coupling, steps, 5, seed=seed + 2, keep_states=True,
                start_override=np.zeros(data.dim),
            )
            times = np.linspace(0.0, sde.tau, steps + 1)
            for p in range(5):
                for t, x in zip(times, bundle.states[p, :, 0]):
                    fh.write(f"{name},{p},{FLOAT_FMT % t},{FLOAT_FMT % x}\n")
    return out


def cmd_inspect_weights(cfg):
    """Exact-drift run recording weight/denoised tracks, with an Euler-T sweep."""
    out = _prepare_out(cfg)
    dcfg = cfg["dataset"]
    data = two_rings() if not (dcfg["builtin"] or dcfg["path"]) else build_dataset(cfg)
    sde = build_sde(cfg, data.dim)
    coupling = build_coupling(cfg, data, sde)
    if cfg["sampler"]["field"] == "reversal":
        field = ExactReversalField(sde, data)
        init = coupling
    else:
        field = ExactBridgeMixtureField(sde, coupling)
        init = coupling
    sweep = cfg["sampler"]["steps_sweep"] or [cfg["sampler"]["steps"]]
    n_paths = cfg["sampler"]["paths"]
    seed = cfg["run"]["seed"]
    for steps in sweep:
        sub = out / f"T{steps}"
        sub.mkdir(exist_ok=True)
        bundle = run_paths(
            field, init, int(steps), n_paths, seed=seed,
            record_weights=True, record_denoised=True, keep_states=True,
            threads=cfg["run"]["threads"],
        )
        times = np.linspace(0.0, sde.tau, int(steps) + 1)
        n_atoms = bundle.weights.shape[-1]
        with open(sub / "weights.csv", "w") as fh:
            fh.write("path,step,t," + ",".join(f"w_{k+1}" for k in range(n_atoms)) + "\n")
            for p in range(n_paths):
                for s in range(int(steps)):
                    vals = ",".join(FLOAT_FMT % v for v in bundle.weights[p, s])
                    fh.write(f"{p},{s},{FLOAT_FMT % times[s]},{vals}\n")
        with open(sub / "denoised.csv", "w") as fh:
            fh.write("path,step,t," + ",".join(f"e_{k+1}" for k in range(data.dim)) + "\n")
            for p in range(n_paths):
                for s in range(int(steps)):
                    vals = ",".join(FLOAT_FMT % v for v in bundle.denoised[p, s])
                    fh.write(f"{p},{s},{FLOAT_FMT % times[s]},{vals}\n")
        with open(sub / "states.csv", "w") as fh:
            fh.write("path,step,t," + ",".join(f"x_{k+1}" for k in range(data.dim)) + "\n")
            for p in range(n_paths):
                for s in range(int(steps) + 1):
                    vals = ",".join(FLOAT_FMT % v for v in bundle.states[p, s])
                    fh.write(f"{p},{s},{FLOAT_FMT % times[s]},{vals}\n")
    _dump_json(out / "weights_summary.json", {
        "sweep": [int(s) for s in sweep],
        "paths": n_paths,
        "atoms": data.samples.tolist(),
    })
    return out


def cmd_train(cfg):
    """Train the regressor per [training] and save checkpoint + loss curve."""
    out = _prepare_out(cfg)
    data = build_dataset(cfg)
    sde = build_sde(cfg, data.dim)
    tconf = build_train_config(cfg)
    kind = LossKind(tconf.loss)
    source = data if not kind.is_bridge else build_coupling(cfg, data, sde)
    tcfg = cfg["training"]
    net = Mlp(
        NetSpec(
            dim=data.dim,
            hidden=tuple(tcfg["hidden"]),
            activation=tcfg["activation"],
            time_features=tcfg["time_features"],
            tau=sde.tau,
        ),
        rng=np.random.default_rng(tcfg["seed"]),
    )
    result = train(net, tconf, sde, source)
    save_checkpoint(out / "checkpoint.bin", net)
    np.savetxt(out / "loss_curve.csv", result.loss_curve[:, None],
               delimiter=",", fmt=FLOAT_FMT, header="loss", comments="")
    _dump_json(out / "train_report.json", {
        "loss": tconf.loss,
        "steps": tconf.steps,
        "final_loss_mean_100": float(result.loss_curve[-100:].mean()),
        "n_params": net.n_params,
    })
    return out


def _build_field(cfg, sde, data, coupling):
    scfg = cfg["sampler"]
    direction = scfg["field"]
    if scfg["drift"] == "exact":
        if direction == "reversal":
            return ExactReversalField(sde, data)
        return ExactBridgeMixtureField(sde, coupling)
    if scfg["drift"] in ("endpoint", "score"):
        if not scfg["checkpoint"]:
            raise ConfigError("[sampler] learned drift needs 'checkpoint'")
        net = load_checkpoint(Path(cfg.get("_base_dir", ".")) / scfg["checkpoint"])
        if scfg["drift"] == "endpoint":
            return LearnedEndpointField(sde, net, direction)
        if direction == "bridge":
            x0 = getattr(coupling, "x0", None)
            if x0 is None:
                raise ConfigError("score-form bridge sampling needs a delta coupling")
            return LearnedScoreField(sde, net, "bridge", x0=x0)
        return LearnedScoreField(sde, net, "reversal")
    raise ConfigError(f"unknown drift {scfg['drift']!r}")


def cmd_sample(cfg):
    """Integrate paths with an exact or checkpointed drift; dump trajectories."""
    out = _prepare_out(cfg)
    data = build_dataset(cfg)
    sde = build_sde(cfg, data.dim)
    coupling = build_coupling(cfg, data, sde)
    field = _build_field(cfg, sde, data, coupling)
    scfg = cfg["sampler"]
    bundle = run_paths(
        field, coupling, scfg["steps"], scfg["paths"], seed=cfg["run"]["seed"],
        threads=cfg["run"]["threads"],
    )
    np.savetxt(out / "terminal.csv", bundle.terminal, delimiter=",", fmt=FLOAT_FMT)
    exact = scfg["drift"] == "exact"
    for k in range(min(scfg["record_paths"], scfg["paths"])):
        rng = np.random.default_rng(np.random.SeedSequence((cfg["run"]["seed"], k)))
        init = coupling.initial_states(rng, 1)[0]
        traj = euler_sample(
            field, init, scfg["steps"], rng,
            record_weights=exact and scfg["record_weights"],
            record_denoised=scfg["record_denoised"],
            seed=cfg["run"]["seed"],
        )
        write_trajectory_csv(out / f"trajectory_{k:03d}.csv", traj)
    _dump_json(out / "sample_report.json", {
        "paths": scfg["paths"],
        "steps": scfg["steps"],
        "drift": scfg["drift"],
        "field": scfg["field"],
        "terminal_mean": bundle.terminal.mean(axis=0).tolist(),
    })
    return out


def cmd_gp(cfg):
    """GP sample fields per flavor plus per-sample timing across grid sizes."""
    out = _prepare_out(cfg)
    gcfg = cfg["gp"]
    kernel = build_kernel(cfg["sde.gamma"])
    channels = cfg["sde.gamma"]["channels"]
    seed = cfg["run"]["seed"]
    demo = gcfg["demo_size"]

    def build(flavor, size):
        if flavor == "white":
            from .covariance import IdentityCovariance

            return IdentityCovariance(size * size * channels)
        if flavor == "torus":
            return build_torus_operator(kernel, size, size, channels)
        if flavor == "plane":
            return embed_plane_operator(kernel, size, size, channels)
        raise ConfigError(f"unknown gp flavor {flavor!r}")

    timings = {}
    for flavor in gcfg["flavors"]:
        rng = np.random.default_rng(seed)
        op = build(flavor, demo)
        field = op.sqrt_sample(rng, 1)[0].reshape(demo, demo, channels)
        if flavor == "white":
            field *= np.sqrt(kernel.variance)
        write_field_bin(out / f"gp_{flavor}_{demo}.bin", field)
        timings[flavor] = {}
        for size in gcfg["sizes"]:
            op = build(flavor, int(size))
            rng = np.random.default_rng(seed)
            op.sqrt_sample(rng, 4)  # warm-up
            best = np.inf
            for _ in range(3):
                start = time.perf_counter()
                op.sqrt_sample(rng, gcfg["samples_per_size"])
                best = min(best, (time.perf_counter() - start) / gcfg["samples_per_size"])
            timings[flavor][str(size)] = best
    _dump_json(out / "gp_report.json", {
        "demo_size": demo,
        "channels": channels,
        "kernel": cfg["sde.gamma"]["kernel"],
        "variance": cfg["sde.gamma"]["variance"],
        "length_scale": cfg["sde.gamma"]["length_scale"],
        "sizes": [int(s) for s in gcfg["sizes"]],
        "fields": {f: f"gp_{f}_{demo}.bin" for f in gcfg["flavors"]},
        "timings": timings,  # wall clock: excluded from byte-identity contract
    })
    return out


def cmd_variogram(cfg):
    """Per-channel empirical variograms + WLS fits; medians across images."""
    out = _prepare_out(cfg)
    vcfg = cfg["variogram"]
    gcfg = cfg["sde.gamma"]
    images = []
    names = []
    if vcfg["inputs"]:
        from .dataio import read_field_bin, read_field_csv

        for rel in vcfg["inputs"]:
            path = Path(cfg.get("_base_dir", ".")) / rel
            if path.suffix == ".bin":
                img = read_field_bin(path, gcfg["height"], gcfg["width"], gcfg["channels"])
            else:
                img = read_field_csv(path, gcfg["height"], gcfg["width"])
            images.append(img)
            names.append(path.name)
    if vcfg["builtin_corpus"]:
        kernel = build_kernel(gcfg)
        size = vcfg["corpus_size"]
        op = embed_plane_operator(kernel, size, size, 1)
        rng = np.random.default_rng(cfg["run"]["seed"])
        draws = op.sqrt_sample(rng, vcfg["builtin_corpus"])
        for k in range(vcfg["builtin_corpus"]):
            images.append(draws[k].reshape(size, size, 1))
            names.append(f"synthetic_{k:03d}")
    if not images:
        raise ConfigError("[variogram] needs 'inputs' or builtin_corpus > 0")

    reports = []
    per_family_theta = {fam: [] for fam in vcfg["families"]}
    for name, img in zip(names, images):
        emps = empirical_variogram(img, n_bins=vcfg["n_bins"], max_lag=vcfg["max_lag"])
        channels = []
        for emp in emps:
            entry = {
                "lags": emp.lags.tolist(),
                "gamma": emp.gamma.tolist(),
                "counts": emp.counts.tolist(),
                "fits": {},
            }
            for fam in vcfg["families"]:
                fit = fit_variogram_wls(emp, fam)
                entry["fits"][fam] = {
                    "variance": fit.kernel.variance,
                    "length_scale": fit.kernel.length_scale,
                    "objective": fit.objective,
                    "theta_pinned": fit.theta_pinned,
                }
                per_family_theta[fam].append(fit.kernel.length_scale)
            channels.append(entry)
        reports.append({"image": name, "channels": channels})
    medians = {
        fam: {
            "length_scale_median": float(np.median(v)) if v else None,
        }
        for fam, v in per_family_theta.items()
    }
    _dump_json(out / "variogram_report.json", {
        "images": reports,
        "medians": medians,
        "n_bins": vcfg["n_bins"],
        "max_lag": vcfg["max_lag"],
    })
    return out
