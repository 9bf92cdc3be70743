"""Small fully-connected regressor s(x, t) with hand-written forward/backward.

Time enters through raw t/tau plus F sinusoidal pairs sin/cos(2^k pi t / tau),
k = 0..F-1 (a choice; nothing in the problem fixes the encoding). Weights are
fan-in-scaled uniform. Training runs single-threaded and is bit-reproducible
given (seed, config).

Checkpoint format (little-endian):
    bytes 0..3   magic b"BMXR"
    u32          version (currently 1)
    u32          input dim D
    u32          output dim
    u32          activation code (0 = tanh, 1 = softplus)
    u32          time feature pairs F
    f64          tau
    u32          number of hidden layers L
    u32 * L      hidden widths
    u64          total parameter count
    f64 * count  parameters, per layer: W row-major (out x in), then b
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import DomainError, TrainingDiverged

MAGIC = b"BMXR"
CHECKPOINT_VERSION = 1
_ACTIVATIONS = {"tanh": 0, "softplus": 1}


@dataclass(frozen=True)
class NetSpec:
    """Architecture: dims, hidden widths, activation, and time encoding."""

    dim: int
    hidden: Tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    time_features: int = 4
    tau: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or any(w < 1 for w in self.hidden):
            raise DomainError("dims and widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise DomainError(f"activation must be one of {sorted(_ACTIVATIONS)}")
        if self.time_features < 0:
            raise DomainError("time_features must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(w) for w in self.hidden))

    @property
    def input_dim(self):
        return self.dim + 1 + 2 * self.time_features


def time_features(t, spec: NetSpec):
    """(B, 1 + 2F) time encoding for times t (B,)."""
    t = np.asarray(t, dtype=float)
    s = t / spec.tau
    cols = [s[:, None]]
    for k in range(spec.time_features):
        arg = (2.0**k) * np.pi * s
        cols.append(np.sin(arg)[:, None])
        cols.append(np.cos(arg)[:, None])
    return np.concatenate(cols, axis=1)


def _act(name, z):
    if name == "tanh":
        a = np.tanh(z)
        return a, 1.0 - a * a
    # softplus; sigmoid as derivative, stable for large |z|
    a = np.logaddexp(0.0, z)
    return a, 1.0 / (1.0 + np.exp(-z))


class Mlp:
    """Feed-forward net; params is a flat list [W0, b0, W1, b1, ...]."""

    def __init__(self, spec: NetSpec, rng=None):
        self.spec = spec
        widths = [spec.input_dim, *spec.hidden, spec.dim]
        self.params: List[np.ndarray] = []
        rng = rng or np.random.default_rng(0)
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(n_in)
            self.params.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            self.params.append(rng.uniform(-bound, bound, size=(n_out,)))

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params))

    def _features(self, x, t):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.spec.dim:
            raise DomainError(f"expected inputs of dim {self.spec.dim}")
        return np.concatenate([x, time_features(t, self.spec)], axis=1)

    def forward(self, x, t):
        """Returns (output (B, D), cache for backward)."""
        h = self._features(x, t)
        cache = [(h, None)]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = h @ w.T + b
            if layer < n_layers - 1:
                h, dh = _act(self.spec.activation, z)
            else:
                h, dh = z, None  # linear output layer
            cache.append((h, dh))
        return h, cache

    def predict(self, x, t):
        out, _ = self.forward(x, t)
        return out

    def backward(self, cache, dout):
        """Parameter gradients for upstream gradient dout (B, D)."""
        grads = [None] * len(self.params)
        n_layers = len(self.params) // 2
        delta = np.asarray(dout, dtype=float)
        for layer in range(n_layers - 1, -1, -1):
            h_prev = cache[layer][0]
            if layer < n_layers - 1:
                delta = delta * cache[layer + 1][1]
            grads[2 * layer] = delta.T @ h_prev
            grads[2 * layer + 1] = delta.sum(axis=0)
            if layer > 0:
                delta = delta @ self.params[2 * layer]
        return grads


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "endpoint_bridge"
    batch_size: int = 128
    steps: int = 5000
    learning_rate: float = 1e-3
    lr_schedule: str = "constant"  # "constant" | "cosine"
    optimizer: str = "adam"  # "sgd" | "adam"
    t_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise DomainError("batch_size and steps must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise DomainError("lr_schedule must be constant or cosine")
        if self.optimizer not in ("sgd", "adam"):
            raise DomainError("optimizer must be sgd or adam")


@dataclass
class TrainResult:
    net: Mlp
    loss_curve: np.ndarray
    config: TrainConfig = field(repr=False, default=None)


class _Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


class _Sgd:
    def step(self, params, grads, lr):
        for p, g in zip(params, grads):
            p -= lr * g


def train(net: Mlp, config: TrainConfig, sde, source) -> TrainResult:
    """Run the sample-batch / regress / step loop for any loss kind.

    ``source`` is the coupling (bridge losses) or dataset (reversal losses);
    batch construction is delegated to :mod:`bridgemix.objectives`.
    """
    from .objectives import LossKind, loss_and_gradient, sample_batch

    kind = LossKind(config.loss)
    rng = np.random.default_rng(config.seed)
    opt = _Adam(net.params) if config.optimizer == "adam" else _Sgd()
    curve = np.empty(config.steps)
    for step in range(config.steps):
        batch = sample_batch(kind, sde, source, config.batch_size, rng, config.t_eps)
        loss, grads = loss_and_gradient(kind, batch, net)
        if not np.isfinite(loss):
            norm = float(np.sqrt(sum(np.sum(p * p) for p in net.params)))
            raise TrainingDiverged(
                f"non-finite loss at step {step} (param norm {norm:.3e})",
                step=step,
                param_norm=norm,
            )
        if config.lr_schedule == "cosine":
            lr = config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / config.steps))
        else:
            lr = config.learning_rate
        opt.step(net.params, grads, lr)
        curve[step] = loss
    return TrainResult(net=net, loss_curve=curve, config=config)


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------


def save_checkpoint(path, net: Mlp):
    spec = net.spec
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<IIIII",
                CHECKPOINT_VERSION,
                spec.dim,
                spec.dim,
                _ACTIVATIONS[spec.activation],
                spec.time_features,
            )
        )
        fh.write(struct.pack("<d", spec.tau))
        fh.write(struct.pack("<I", len(spec.hidden)))
        for w in spec.hidden:
            fh.write(struct.pack("<I", w))
        fh.write(struct.pack("<Q", net.n_params))
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> Mlp:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise DomainError(f"{path}: not a checkpoint file")
        version, dim, out_dim, act_code, n_freq = struct.unpack("<IIIII", fh.read(20))
        if version != CHECKPOINT_VERSION:
            raise DomainError(f"{path}: unsupported checkpoint version {version}")
        if out_dim != dim:
            raise DomainError(f"{path}: input/output dim mismatch")
        (tau,) = struct.unpack("<d", fh.read(8))
        (n_hidden,) = struct.unpack("<I", fh.read(4))
        hidden = struct.unpack(f"<{n_hidden}I", fh.read(4 * n_hidden)) if n_hidden else ()
        (count,) = struct.unpack("<Q", fh.read(8))
        flat = np.frombuffer(fh.read(8 * count), dtype="<f8")
    act = {v: k for k, v in _ACTIVATIONS.items()}[act_code]
    spec = NetSpec(dim=dim, hidden=hidden, activation=act, time_features=n_freq, tau=tau)
    net = Mlp(spec)
    if net.n_params != count:
        raise DomainError(f"{path}: parameter count mismatch")
    offset = 0
    for i, p in enumerate(net.params):
        net.params[i] = flat[offset : offset + p.size].reshape(p.shape).copy()
        offset += p.size
    return net
