"""Single-convolution-layer CNN over the 3x3 index map.

Architecture: three 2x2 kernels with sigmoid activation, bias-free 2x2 average
pooling of each 2x2 map down to one value, the three pooled values flattened
into ``z``, and one linear output neuron ``w . z + b``. Training is per-sample
SGD on ``0.5 * (p - a)**2`` in normalized units.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import netcore
from .data import (
    NormalizationSpec,
    YearRecord,
    assemble_feature_map,
    denormalize,
    normalize,
    TARGET,
)
from .errors import NumericError, ParseError, ShapeError, ValidationError
from .netcore import Activation, PoolSpec
from .textio import fmt_real, parse_activation, parse_reals, read_key_values, write_text

CKPT_FORMAT = "cnn-ckpt-v1"


@dataclass(frozen=True, eq=False)
class CnnParams:
    kernels: np.ndarray  # (n_kernels, c, c)
    conv_biases: np.ndarray  # (n_kernels,)
    dense_weights: np.ndarray  # (n_kernels * pooled area,)
    dense_bias: float
    conv_activation: Activation = Activation.SIGMOID
    dense_transfer: Activation = Activation.LINEAR
    pool: PoolSpec = field(default_factory=PoolSpec)

    def __post_init__(self):
        k = np.array(self.kernels, dtype=float)
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise ShapeError(f"kernels must have shape (n, c, c), got {k.shape}")
        cb = np.array(self.conv_biases, dtype=float).ravel()
        dw = np.array(self.dense_weights, dtype=float).ravel()
        if cb.shape != (k.shape[0],):
            raise ShapeError(f"expected {k.shape[0]} conv biases, got {cb.size}")
        if dw.size % k.shape[0]:
            raise ShapeError("dense weight count must be a multiple of the kernel count")
        for a in (k, cb, dw):
            a.flags.writeable = False
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "conv_biases", cb)
        object.__setattr__(self, "dense_weights", dw)
        object.__setattr__(self, "dense_bias", float(self.dense_bias))
        object.__setattr__(self, "conv_activation", Activation(self.conv_activation))
        object.__setattr__(self, "dense_transfer", Activation(self.dense_transfer))

    @property
    def n_kernels(self) -> int:
        return self.kernels.shape[0]

    def arrays(self):
        """(name, value) pairs of every trainable parameter, in vector order."""
        return [
            ("kernels", self.kernels),
            ("conv_biases", self.conv_biases),
            ("dense_weights", self.dense_weights),
            ("dense_bias", np.array([self.dense_bias])),
        ]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])

    def from_vector(self, vec) -> "CnnParams":
        """Copy of these params with trainable values taken from a flat vector."""
        vec = np.asarray(vec, dtype=float)
        out, pos = {}, 0
        for name, a in self.arrays():
            out[name] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != vec.size:
            raise ShapeError(f"expected a vector of length {pos}, got {vec.size}")
        out["dense_bias"] = float(out["dense_bias"][0])
        return replace(self, **out)

    def __eq__(self, other):
        if not isinstance(other, CnnParams):
            return NotImplemented
        return (
            self.conv_activation == other.conv_activation
            and self.dense_transfer == other.dense_transfer
            and self.pool == other.pool
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for (_, a), (_, b) in zip(self.arrays(), other.arrays())
            )
        )


def init_cnn(seed=0, scale=0.5, n_kernels=3, kernel_size=2, pooled_area=1,
             dense_transfer=Activation.LINEAR) -> CnnParams:
    """Seeded uniform(-scale, scale) initialization."""
    rng = np.random.default_rng(seed)
    return CnnParams(
        kernels=rng.uniform(-scale, scale, (n_kernels, kernel_size, kernel_size)),
        conv_biases=rng.uniform(-scale, scale, n_kernels),
        dense_weights=rng.uniform(-scale, scale, n_kernels * pooled_area),
        dense_bias=rng.uniform(-scale, scale),
        dense_transfer=dense_transfer,
    )


@dataclass(frozen=True, eq=False)
class ForwardCache:
    params: CnnParams
    input: np.ndarray
    conv_out: np.ndarray  # activated conv maps, (n_kernels, h, w)
    z: np.ndarray
    pre_output: float
    output: float


def cnn_forward(params: CnnParams, x) -> tuple[float, ForwardCache]:
    x = netcore.as_grid(x, "feature map")
    maps, pooled = [], []
    for k, b in zip(params.kernels, params.conv_biases):
        y = netcore.apply_activation(netcore.conv2d_valid(x, k, b), params.conv_activation)
        maps.append(y)
        pooled.append(netcore.pool(y, params.pool).ravel())
    z = np.concatenate(pooled)
    if z.shape != params.dense_weights.shape:
        raise ShapeError(
            f"flattened pooling output has {z.size} values, dense layer expects {params.dense_weights.size}"
        )
    s = float(params.dense_weights @ z + params.dense_bias)
    out = netcore.dense_forward(z, params.dense_weights, params.dense_bias, params.dense_transfer)
    return out, ForwardCache(params, x, np.array(maps), z, s, out)


def cnn_loss(prediction, target) -> float:
    return 0.5 * (prediction - target) ** 2


def cnn_backward(params: CnnParams, cache: ForwardCache, target) -> CnnParams:
    """Exact gradient of ``cnn_loss(output, target)``, packed as a CnnParams."""
    if cache.params is not params:
        raise ValidationError("forward cache was produced with different parameters")
    d_out = (cache.output - target) * float(params.dense_transfer.derivative(cache.pre_output))
    g_dense_w = d_out * cache.z
    d_z = d_out * params.dense_weights

    per_map = d_z.size // params.n_kernels
    g_kernels = np.empty_like(params.kernels)
    g_biases = np.empty(params.n_kernels)
    for j in range(params.n_kernels):
        y = cache.conv_out[j]
        pooled_shape = (y.shape[0] // params.pool.window, y.shape[1] // params.pool.window)
        d_pooled = d_z[j * per_map : (j + 1) * per_map].reshape(pooled_shape)
        d_y = netcore.pool_backward(y, d_pooled, params.pool)
        d_pre = d_y * params.conv_activation.derivative_from_output(y)
        _, g_kernels[j], g_biases[j] = netcore.conv2d_backward(cache.input, params.kernels[j], d_pre)
    return replace(
        params,
        kernels=g_kernels,
        conv_biases=g_biases,
        dense_weights=g_dense_w,
        dense_bias=d_out,
    )


def sgd_step(params: CnnParams, grads: CnnParams, learning_rate) -> CnnParams:
    """Return ``params - learning_rate * grads``."""
    updated = {}
    for (name, p), (_, g) in zip(params.arrays(), grads.arrays()):
        if p.shape != g.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}", name)
        updated[name] = p - learning_rate * g
    updated["dense_bias"] = float(updated["dense_bias"][0])
    return replace(params, **updated)


class SampleOrder(str, Enum):
    CHRONOLOGICAL = "chronological"
    SHUFFLED = "shuffled-per-epoch"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 100
    seed: int = 0
    init_scale: float = 0.5
    sample_order: SampleOrder = SampleOrder.CHRONOLOGICAL

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValidationError(f"epochs must be a non-negative integer, got {self.epochs}")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        object.__setattr__(self, "sample_order", SampleOrder(self.sample_order))


@dataclass(frozen=True)
class TrainingSample:
    input: np.ndarray
    target: float
    year: int | None = None


def make_samples(records: Sequence[YearRecord], spec: NormalizationSpec) -> list[TrainingSample]:
    """Training samples from every record with a known fleet size, target normalized."""
    return [
        TrainingSample(assemble_feature_map(r, spec), normalize(r.fleet_size, TARGET, spec), r.year)
        for r in records
        if r.has_target
    ]


class _FastNet:
    """Vectorized forward/backward on raw mutable arrays, used by the training loop.

    Numerically the same composition as ``cnn_forward``/``cnn_backward`` (the
    test suite pins the two together); it just avoids per-call validation and
    Python-level loops. Average pooling only.
    """

    def __init__(self, params: CnnParams):
        if params.pool.mode is not netcore.PoolMode.AVERAGE:
            raise ValidationError("training supports average pooling only")
        self.template = params
        self.k = params.kernels.copy()
        self.cb = params.conv_biases.copy()
        self.dw = params.dense_weights.copy()
        self.db = params.dense_bias
        self.w = params.pool.window
        self.act = params.conv_activation
        self.out_act = params.dense_transfer

    def params(self) -> CnnParams:
        return replace(self.template, kernels=self.k, conv_biases=self.cb,
                       dense_weights=self.dw, dense_bias=self.db)

    def windows(self, x):
        """Input patches as a (positions, c*c) matrix plus the conv output shape."""
        c = self.k.shape[1]
        win = np.lib.stride_tricks.sliding_window_view(x, (c, c))
        h, wd = win.shape[:2]
        return np.ascontiguousarray(win.reshape(h * wd, c * c)), (h, wd)

    def forward(self, patches):
        win, (h, wd) = patches
        n = self.k.shape[0]
        y = self.act(self.k.reshape(n, -1) @ win.T + self.cb[:, None]).reshape(n, h, wd)
        w = self.w
        z = y.reshape(n, h // w, w, wd // w, w).mean(axis=(2, 4)).ravel() + self.template.pool.bias
        s = self.dw @ z + self.db
        return float(self.out_act(s)), (y, z, s)

    def step(self, patches, target, lr):
        out, (y, z, s) = self.forward(patches)
        d_out = (out - target) * float(self.out_act.derivative(s))
        n, h, wd = y.shape
        w = self.w
        d_z = (d_out * self.dw).reshape(n, h // w, wd // w)
        d_y = np.repeat(np.repeat(d_z, w, axis=1), w, axis=2) / (w * w)
        d_pre = (d_y * self.act.derivative_from_output(y)).reshape(n, h * wd)
        self.k -= lr * (d_pre @ patches[0]).reshape(self.k.shape)
        self.cb -= lr * d_pre.sum(axis=1)
        self.dw -= lr * (d_out * z)
        self.db -= lr * d_out

    def mse(self, windows, targets):
        outs = np.array([self.forward(w)[0] for w in windows])
        return float(np.mean(np.square(outs - targets)))

    def check_finite(self, epoch, mse):
        for name, a in (("kernels", self.k), ("conv_biases", self.cb),
                        ("dense_weights", self.dw), ("dense_bias", np.array([self.db])),
                        ("mse", np.array([mse]))):
            if not np.all(np.isfinite(a)):
                raise NumericError(f"{name} became non-finite at epoch {epoch}", name)


def epoch_mse(params: CnnParams, samples: Sequence[TrainingSample]) -> float:
    """Mean of squared residuals over all samples (normalized units)."""
    errs = [cnn_forward(params, s.input)[0] - s.target for s in samples]
    return float(np.mean(np.square(errs)))


def train_cnn(samples: Sequence[TrainingSample], config: TrainConfig = TrainConfig(),
              initial: CnnParams | None = None, callback=None) -> tuple[CnnParams, np.ndarray]:
    """Per-sample SGD. Returns the final params and the per-epoch MSE trace,
    each entry evaluated with the parameters at the end of that epoch.

    ``callback(epoch, params)`` is called after every epoch when given.
    """
    if not samples:
        raise ValidationError("no training samples")
    rng = np.random.default_rng(config.seed)
    params = initial if initial is not None else init_cnn(rng, config.init_scale)
    net = _FastNet(params)
    windows = [net.windows(netcore.as_grid(s.input, "feature map")) for s in samples]
    targets = np.array([float(s.target) for s in samples])
    trace = np.empty(config.epochs)
    order = np.arange(len(samples))
    for epoch in range(config.epochs):
        if config.sample_order is SampleOrder.SHUFFLED:
            order = rng.permutation(len(samples))
        # divergence is reported once per epoch by check_finite, not as float warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for i in order:
                net.step(windows[i], targets[i], config.learning_rate)
            trace[epoch] = net.mse(windows, targets)
        net.check_finite(epoch + 1, trace[epoch])
        if callback is not None:
            callback(epoch, net.params())
    return net.params(), trace


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def outputs_to_trains(outputs, spec: NormalizationSpec) -> list[int]:
    return [round_half_away(denormalize(o, TARGET, spec)) for o in outputs]


def cnn_predict(params: CnnParams, records: Sequence[YearRecord],
                spec: NormalizationSpec) -> list[tuple[int, int]]:
    """(year, trains) per record: forward pass, denormalize, round half away from zero."""
    outs = [cnn_forward(params, assemble_feature_map(r, spec))[0] for r in records]
    return list(zip([r.year for r in records], outputs_to_trains(outs, spec)))


# -- checkpoint I/O ---------------------------------------------------------

def dumps_checkpoint(params: CnnParams) -> str:
    lines = [f"format={CKPT_FORMAT}"]
    for j, k in enumerate(params.kernels):
        for r, row in enumerate(k):
            lines.append(f"kernel.{j}.row.{r}= " + " ".join(fmt_real(v) for v in row))
    for j, b in enumerate(params.conv_biases):
        lines.append(f"conv_bias.{j}= {fmt_real(b)}")
    lines.append("dense_w= " + " ".join(fmt_real(v) for v in params.dense_weights))
    lines.append(f"dense_b= {fmt_real(params.dense_bias)}")
    lines.append(f"conv_act={params.conv_activation.value}")
    lines.append(f"dense_act={params.dense_transfer.value}")
    return "\n".join(lines) + "\n"


def save_checkpoint(params: CnnParams, sink) -> None:
    """Write to a path or a text file object."""
    write_text(sink, dumps_checkpoint(params))


def loads_checkpoint(text: str) -> CnnParams:
    entries = read_key_values(text, CKPT_FORMAT)
    n = sum(1 for k in entries if k.startswith("conv_bias."))
    if n == 0:
        raise ParseError("checkpoint declares no kernels")
    size = sum(1 for k in entries if k.startswith("kernel.0.row."))
    kernels = np.array(
        [[parse_reals(entries, f"kernel.{j}.row.{r}", size) for r in range(size)] for j in range(n)]
    )
    conv_biases = np.array([parse_reals(entries, f"conv_bias.{j}", 1)[0] for j in range(n)])
    dw_text, dw_line = entries.get("dense_w", ("", None))
    dense_w = parse_reals(entries, "dense_w", max(len(dw_text.split()), 1))
    if dense_w.size % n:
        raise ParseError(f"dense_w has {dense_w.size} values for {n} kernels", dw_line)
    known = {"format", "dense_w", "dense_b", "conv_act", "dense_act"}
    known |= {f"conv_bias.{j}" for j in range(n)}
    known |= {f"kernel.{j}.row.{r}" for j in range(n) for r in range(size)}
    for key, (_, lineno) in entries.items():
        if key not in known:
            raise ParseError(f"unexpected entry {key!r}", lineno)
    return CnnParams(
        kernels=kernels,
        conv_biases=conv_biases,
        dense_weights=dense_w,
        dense_bias=parse_reals(entries, "dense_b", 1)[0],
        conv_activation=parse_activation(entries, "conv_act"),
        dense_transfer=parse_activation(entries, "dense_act"),
    )


def load_checkpoint(source) -> CnnParams:
    """Read from a path, a text file object, or the checkpoint text itself."""
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
        with open(source, encoding="utf-8") as fh:
            return loads_checkpoint(fh.read())
    if isinstance(source, str):
        return loads_checkpoint(source)
    if isinstance(source, (bytes, bytearray)):
        return loads_checkpoint(bytes(source).decode("utf-8"))
    return loads_checkpoint(source.read())


def table4_params() -> CnnParams:
    """The trained parameters published for the reference network, as bundled."""
    from importlib import resources

    text = (resources.files("emufleet") / "resources" / "table4.ckpt").read_text(encoding="utf-8")
    return loads_checkpoint(text)
