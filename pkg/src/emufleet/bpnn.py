"""Fully connected 9-8-1 baseline: sigmoid hidden layer, linear output.

Trained by full-batch gradient descent by default: each epoch takes one step
along the average of the per-sample gradients of ``0.5 * (p - a)**2``.
``mode="per-sample"`` switches to the CNN's per-sample SGD for ablations. The
recorded trace is always the plain mean squared error.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .cnn import SampleOrder, TrainConfig, outputs_to_trains
from .data import TARGET, NormalizationSpec, YearRecord, feature_vector, normalize
from .errors import NumericError, ParseError, ShapeError, ValidationError
from .netcore import Activation
from .textio import fmt_real, parse_activation, parse_reals, read_key_values, write_text

CKPT_FORMAT = "mlp-ckpt-v1"
N_INPUT = 9
N_HIDDEN = 8


@dataclass(frozen=True, eq=False)
class MlpParams:
    w_hidden: np.ndarray  # (hidden, inputs)
    b_hidden: np.ndarray  # (hidden,)
    w_out: np.ndarray  # (1, hidden)
    b_out: float
    hidden_activation: Activation = Activation.SIGMOID
    out_transfer: Activation = Activation.LINEAR

    def __post_init__(self):
        wh = np.array(self.w_hidden, dtype=float)
        bh = np.array(self.b_hidden, dtype=float).ravel()
        wo = np.array(self.w_out, dtype=float).reshape(1, -1)
        if wh.ndim != 2 or bh.shape != (wh.shape[0],) or wo.shape != (1, wh.shape[0]):
            raise ShapeError(
                f"inconsistent layer shapes: w_hidden {wh.shape}, b_hidden {bh.shape}, w_out {wo.shape}"
            )
        for a in (wh, bh, wo):
            a.flags.writeable = False
        object.__setattr__(self, "w_hidden", wh)
        object.__setattr__(self, "b_hidden", bh)
        object.__setattr__(self, "w_out", wo)
        object.__setattr__(self, "b_out", float(self.b_out))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        object.__setattr__(self, "out_transfer", Activation(self.out_transfer))

    def arrays(self):
        return [
            ("w_hidden", self.w_hidden),
            ("b_hidden", self.b_hidden),
            ("w_out", self.w_out),
            ("b_out", np.array([self.b_out])),
        ]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.arrays()])

    def from_vector(self, vec) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        out, pos = {}, 0
        for name, a in self.arrays():
            out[name] = vec[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != vec.size:
            raise ShapeError(f"expected a vector of length {pos}, got {vec.size}")
        out["b_out"] = float(out["b_out"][0])
        return replace(self, **out)

    def __eq__(self, other):
        if not isinstance(other, MlpParams):
            return NotImplemented
        return (
            self.hidden_activation == other.hidden_activation
            and self.out_transfer == other.out_transfer
            and all(
                a.shape == b.shape and np.array_equal(a, b)
                for (_, a), (_, b) in zip(self.arrays(), other.arrays())
            )
        )


def init_mlp(seed=0, scale=0.5, n_input=N_INPUT, n_hidden=N_HIDDEN) -> MlpParams:
    rng = np.random.default_rng(seed)
    return MlpParams(
        w_hidden=rng.uniform(-scale, scale, (n_hidden, n_input)),
        b_hidden=rng.uniform(-scale, scale, n_hidden),
        w_out=rng.uniform(-scale, scale, (1, n_hidden)),
        b_out=rng.uniform(-scale, scale),
    )


@dataclass(frozen=True, eq=False)
class MlpCache:
    params: MlpParams
    x: np.ndarray  # (batch, inputs)
    hidden: np.ndarray  # (batch, hidden)
    pre_output: np.ndarray  # (batch,)
    output: np.ndarray  # (batch,)


def _as_batch(params, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != params.w_hidden.shape[1]:
        raise ShapeError(f"expected input length {params.w_hidden.shape[1]}, got shape {x.shape}")
    return x2, single


def mlp_forward(params: MlpParams, x):
    """Forward pass on one 9-vector (returns a float) or a batch of rows (returns an array)."""
    x2, single = _as_batch(params, x)
    h = params.hidden_activation(x2 @ params.w_hidden.T + params.b_hidden)
    s = h @ params.w_out[0] + params.b_out
    out = params.out_transfer(s)
    cache = MlpCache(params, x2, h, s, out)
    return (float(out[0]) if single else out), cache


REDUCTIONS = ("mean-half", "mse", "half-sse")


def batch_loss(params: MlpParams, inputs, targets, reduction="mean-half") -> float:
    """``mean-half``: mean of 0.5*(p-a)**2; ``mse``: mean of (p-a)**2; ``half-sse``: 0.5*sum."""
    out, _ = mlp_forward(params, np.atleast_2d(inputs))
    sq = (out - np.asarray(targets, dtype=float).reshape(-1)) ** 2
    if reduction == "mean-half":
        return float(0.5 * sq.mean())
    if reduction == "mse":
        return float(sq.mean())
    if reduction == "half-sse":
        return float(0.5 * sq.sum())
    raise ValueError(f"unknown reduction {reduction!r}")


def mlp_backward(params: MlpParams, cache: MlpCache, targets, reduction="mean-half") -> MlpParams:
    """Gradient of ``batch_loss(..., reduction)`` using the cached forward pass."""
    if cache.params is not params:
        raise ValidationError("forward cache was produced with different parameters")
    a = np.asarray(targets, dtype=float).reshape(-1)
    if a.shape != cache.output.shape:
        raise ShapeError(f"{a.size} targets for {cache.output.size} outputs")
    resid = cache.output - a
    if reduction == "mean-half":
        d_out = resid / resid.size
    elif reduction == "mse":
        d_out = 2.0 * resid / resid.size
    elif reduction == "half-sse":
        d_out = resid
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    d_s = d_out * params.out_transfer.derivative(cache.pre_output)
    g_wo = (d_s @ cache.hidden).reshape(1, -1)
    g_bo = float(d_s.sum())
    d_h = np.outer(d_s, params.w_out[0]) * params.hidden_activation.derivative_from_output(cache.hidden)
    return replace(
        params,
        w_hidden=d_h.T @ cache.x,
        b_hidden=d_h.sum(axis=0),
        w_out=g_wo,
        b_out=g_bo,
    )


def batch_mse(params: MlpParams, inputs, targets) -> float:
    return batch_loss(params, inputs, targets, "mse")


def gd_step(params: MlpParams, grads: MlpParams, learning_rate) -> MlpParams:
    updated = {}
    for (name, p), (_, g) in zip(params.arrays(), grads.arrays()):
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}", name)
        updated[name] = p - learning_rate * g
    updated["b_out"] = float(updated["b_out"][0])
    return replace(params, **updated)


def train_bpnn(samples: Sequence[tuple], config: TrainConfig = TrainConfig(), mode="batch",
               initial: MlpParams | None = None, callback=None,
               reduction="mean-half") -> tuple[MlpParams, np.ndarray]:
    """Train on ``(9-vector, target)`` pairs. Returns final params and per-epoch MSE.

    ``reduction`` picks the batch-mode objective (see ``batch_loss``).
    """
    if not samples:
        raise ValidationError("no training samples")
    if mode not in ("batch", "per-sample"):
        raise ValidationError(f"unknown training mode {mode!r}")
    x = np.array([np.asarray(s[0], dtype=float).ravel() for s in samples])
    a = np.array([float(s[1]) for s in samples])
    rng = np.random.default_rng(config.seed)
    params = initial if initial is not None else init_mlp(rng, config.init_scale, n_input=x.shape[1])
    trace = np.empty(config.epochs)
    order = np.arange(len(samples))
    for epoch in range(config.epochs):
        # overflow surfaces as a NumericError below rather than as float warnings
        with np.errstate(over="ignore", invalid="ignore"):
            if mode == "batch":
                _, cache = mlp_forward(params, x)
                params = gd_step(params, mlp_backward(params, cache, a, reduction), config.learning_rate)
            else:
                if config.sample_order is SampleOrder.SHUFFLED:
                    order = rng.permutation(len(samples))
                for i in order:
                    _, cache = mlp_forward(params, x[i : i + 1])
                    grads = mlp_backward(params, cache, a[i : i + 1], reduction="half-sse")
                    params = gd_step(params, grads, config.learning_rate)
            trace[epoch] = batch_mse(params, x, a)
        if not np.isfinite(trace[epoch]):
            raise NumericError(f"training diverged at epoch {epoch + 1}", "mse")
        if callback is not None:
            callback(epoch, params)
    return params, trace


def make_mlp_samples(records: Sequence[YearRecord], spec: NormalizationSpec) -> list[tuple]:
    return [(feature_vector(r, spec), normalize(r.fleet_size, TARGET, spec)) for r in records if r.has_target]


def mlp_predict(params: MlpParams, records: Sequence[YearRecord],
                spec: NormalizationSpec) -> list[tuple[int, int]]:
    if not records:
        return []
    out, _ = mlp_forward(params, np.array([feature_vector(r, spec) for r in records]))
    return list(zip([r.year for r in records], outputs_to_trains(out, spec)))


def dumps_checkpoint(params: MlpParams) -> str:
    lines = [f"format={CKPT_FORMAT}"]
    for r, row in enumerate(params.w_hidden):
        lines.append(f"w_hidden.row.{r}= " + " ".join(fmt_real(v) for v in row))
    lines.append("b_hidden= " + " ".join(fmt_real(v) for v in params.b_hidden))
    lines.append("w_out= " + " ".join(fmt_real(v) for v in params.w_out[0]))
    lines.append(f"b_out= {fmt_real(params.b_out)}")
    lines.append(f"hidden_act={params.hidden_activation.value}")
    lines.append(f"out_act={params.out_transfer.value}")
    return "\n".join(lines) + "\n"


def loads_checkpoint(text: str) -> MlpParams:
    entries = read_key_values(text, CKPT_FORMAT)
    n_hidden = sum(1 for k in entries if k.startswith("w_hidden.row."))
    if n_hidden == 0:
        raise ParseError("checkpoint declares no hidden units")
    first, _ = entries.get("w_hidden.row.0", ("", None))
    n_input = len(first.split())
    w_hidden = np.array([parse_reals(entries, f"w_hidden.row.{r}", n_input) for r in range(n_hidden)])
    known = {"format", "b_hidden", "w_out", "b_out", "hidden_act", "out_act"}
    known |= {f"w_hidden.row.{r}" for r in range(n_hidden)}
    for key, (_, lineno) in entries.items():
        if key not in known:
            raise ParseError(f"unexpected entry {key!r}", lineno)
    return MlpParams(
        w_hidden=w_hidden,
        b_hidden=parse_reals(entries, "b_hidden", n_hidden),
        w_out=parse_reals(entries, "w_out", n_hidden).reshape(1, -1),
        b_out=parse_reals(entries, "b_out", 1)[0],
        hidden_activation=parse_activation(entries, "hidden_act"),
        out_transfer=parse_activation(entries, "out_act"),
    )


def save_checkpoint(params: MlpParams, sink) -> None:
    write_text(sink, dumps_checkpoint(params))


def load_checkpoint(source) -> MlpParams:
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
        with open(source, encoding="utf-8") as fh:
            return loads_checkpoint(fh.read())
    if isinstance(source, str):
        return loads_checkpoint(source)
    if isinstance(source, (bytes, bytearray)):
        return loads_checkpoint(bytes(source).decode("utf-8"))
    return loads_checkpoint(source.read())
