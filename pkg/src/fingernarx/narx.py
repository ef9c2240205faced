"""NARX estimator: a two-hidden-layer GELU network on delay-embedded taps.

The network maps ``delays * (state_dim + exo_dim)`` normalized taps to the
next normalized state::

    in -> affine -> GELU -> affine -> GELU -> affine -> out

Training is open loop (true states at every tap). Evaluation can feed the
network's own outputs back as state taps (self loop).

Parameters live in one flat float64 vector; the per-layer weight matrices
``W`` (``fan_in x fan_out``, applied as ``x @ W + b``) and biases are views
into it, which keeps the Adam update a single vector operation.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erfc

from . import _backend
from .data import (
    DEFAULT_DELAYS,
    STATE_CHANNELS,
    STATE_DIM,
    DelayPairs,
    Normalizer,
    SensorMode,
    TimeSeriesDataset,
    assemble_delay_pairs,
    atomic_write_text,
    fit_normalizer,
)
from .errors import DatasetError, ModelFormatError, ShapeError

FORMAT_VERSION = 1
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# hidden sizes per sensor mode
DEFAULT_HIDDEN = {
    SensorMode.MA: (50, 50),
    SensorMode.MB: (75, 75),
    SensorMode.MC: (100, 100),
}


def gelu(x):
    """Exact GELU, ``x * Phi(x)``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * x * erfc(-x * _INV_SQRT2)


def gelu_grad(x):
    """``d/dx gelu(x) = Phi(x) + x * phi(x)``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * erfc(-x * _INV_SQRT2) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class NarxConfig:
    exo_dim: int
    hidden: tuple[int, int] = (50, 50)
    state_dim: int = STATE_DIM
    delays: int = DEFAULT_DELAYS
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 64
    seed: int = 0
    final_lr_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError(f"need two hidden layers of size >= 1, got {self.hidden}")
        if self.exo_dim < 1 or self.state_dim < 1 or self.delays < 1:
            raise ValueError("dimensions and delays must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("invalid training hyperparameters")
        if not 0.0 < self.final_lr_fraction <= 1.0:
            raise ValueError("final_lr_fraction must lie in (0, 1]")

    def learning_rate_at(self, epoch: int) -> float:
        """Cosine decay from ``learning_rate`` to ``final_lr_fraction`` of it at the last epoch."""
        f = self.final_lr_fraction
        if f == 1.0 or self.epochs < 2:
            return self.learning_rate
        return self.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + math.cos(math.pi * epoch / (self.epochs - 1))))

    @property
    def input_size(self) -> int:
        return self.delays * (self.state_dim + self.exo_dim)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden, self.state_dim)

    @classmethod
    def for_mode(cls, mode: SensorMode | str, **overrides) -> "NarxConfig":
        mode = SensorMode(mode)
        overrides.setdefault("hidden", DEFAULT_HIDDEN[mode])
        return cls(exo_dim=mode.exo_dim, **overrides)


class Parameters:
    """Flat parameter vector with per-layer ``(W, b)`` views."""

    def __init__(self, layer_sizes: Sequence[int], flat: np.ndarray | None = None):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.shapes = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.shapes += [(fan_in, fan_out), (fan_out,)]
        size = sum(int(np.prod(s)) for s in self.shapes)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ShapeError(f"flat parameter vector must have length {size}, got {flat.shape}")
        self.flat = flat
        self.arrays = []
        offset = 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            self.arrays.append(flat[offset : offset + n].reshape(shape))
            offset += n

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.arrays[2 * k], self.arrays[2 * k + 1]) for k in range(len(self.arrays) // 2)]

    def copy(self) -> "Parameters":
        return Parameters(self.layer_sizes, self.flat.copy())

    def zeros_like(self) -> "Parameters":
        return Parameters(self.layer_sizes)

    @classmethod
    def glorot(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "Parameters":
        params = cls(layer_sizes)
        for w, _ in params.layers:
            limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
        return params


@dataclass(frozen=True)
class NarxModel:
    config: NarxConfig
    params: Parameters
    state_norm: Normalizer | None = None
    exo_norm: Normalizer | None = None
    mode: SensorMode | None = None

    def __post_init__(self):
        if self.params.layer_sizes != self.config.layer_sizes:
            raise ShapeError(f"parameter shapes {self.params.layer_sizes} do not match config {self.config.layer_sizes}")
        if not np.all(np.isfinite(self.params.flat)):
            raise ValueError("model parameters must be finite")

    @classmethod
    def initialize(cls, config: NarxConfig, **kwargs) -> "NarxModel":
        rng = np.random.default_rng(config.seed)
        return cls(config, Parameters.glorot(config.layer_sizes, rng), **kwargs)

    def normalize_states(self, r: np.ndarray) -> np.ndarray:
        return r if self.state_norm is None else self.state_norm.forward(r)

    def denormalize_states(self, r: np.ndarray) -> np.ndarray:
        return r if self.state_norm is None else self.state_norm.inverse(r)

    def normalize_exo(self, u: np.ndarray) -> np.ndarray:
        return u if self.exo_norm is None else self.exo_norm.forward(u)


def _forward_cache(params: Parameters, x: np.ndarray):
    (w1, b1), (w2, b2), (w3, b3) = params.layers
    a1 = x @ w1 + b1
    h1 = gelu(a1)
    a2 = h1 @ w2 + b2
    h2 = gelu(a2)
    return a1, h1, a2, h2, h2 @ w3 + b3


def forward(model: NarxModel | Parameters, x: np.ndarray) -> np.ndarray:
    """Network output for one tap vector ``(d,)`` or a batch ``(n, d)``; normalized units."""
    params = model.params if isinstance(model, NarxModel) else model
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.layer_sizes[0] or x.ndim > 2:
        raise ShapeError(f"expected input of length {params.layer_sizes[0]}, got shape {x.shape}")
    return _forward_cache(params, x)[-1]


def loss_and_gradients(
    model: NarxModel | Parameters, inputs: np.ndarray, targets: np.ndarray
) -> tuple[float, Parameters]:
    """Mean squared error over all batch entries and outputs, with exact gradients."""
    params = model.params if isinstance(model, NarxModel) else model
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != params.layer_sizes[0]:
        raise ShapeError(f"inputs must be (n, {params.layer_sizes[0]}), got {inputs.shape}")
    if targets.shape != (len(inputs), params.layer_sizes[-1]):
        raise ShapeError(f"targets must be ({len(inputs)}, {params.layer_sizes[-1]}), got {targets.shape}")
    if len(inputs) == 0:
        raise ValueError("empty batch")
    (w1, _), (w2, _), (w3, _) = params.layers
    a1, h1, a2, h2, y = _forward_cache(params, inputs)
    err = y - targets
    loss = float(np.mean(err * err))
    grads = params.zeros_like()
    (gw1, gb1), (gw2, gb2), (gw3, gb3) = grads.layers
    d3 = err * (2.0 / err.size)
    gw3[...] = h2.T @ d3
    gb3[...] = d3.sum(axis=0)
    d2 = (d3 @ w3.T) * gelu_grad(a2)
    gw2[...] = h1.T @ d2
    gb2[...] = d2.sum(axis=0)
    d1 = (d2 @ w2.T) * gelu_grad(a1)
    gw1[...] = inputs.T @ d1
    gb1[...] = d1.sum(axis=0)
    return loss, grads


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; advances ``state`` in place and returns new params."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    state.step += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def fit_pairs(
    params: Parameters, pairs: DelayPairs, cfg: NarxConfig
) -> tuple[Parameters, list[float]]:
    """Mini-batch Adam on prepared pairs; returns trained parameters and per-epoch loss."""
    params = params.copy()
    n = len(pairs)
    if n == 0:
        raise DatasetError("no training pairs")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    state = AdamState.zeros(params.flat.size)
    history = []
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_gradients(params, pairs.inputs[idx], pairs.targets[idx])
            params.flat[...] = adam_step(params.flat, grads.flat, state, lr)
            total += loss * len(idx)
        history.append(total / n)
    return params, history


def train_open_loop(
    train: TimeSeriesDataset,
    cfg: NarxConfig,
    exo_mode: SensorMode | str,
) -> tuple[NarxModel, list[float]]:
    """Fit normalizers on ``train`` and train the network with teacher forcing."""
    mode = SensorMode(exo_mode)
    if mode.exo_dim != cfg.exo_dim:
        raise ShapeError(f"mode {mode.value} has {mode.exo_dim} exogenous channels, config expects {cfg.exo_dim}")
    if len(train) < cfg.delays + 1:
        raise DatasetError(f"training set of {len(train)} frames is too short for {cfg.delays} taps")
    state_norm = fit_normalizer(train, STATE_CHANNELS)
    exo_norm = fit_normalizer(train, mode.exo_channels)
    pairs = assemble_delay_pairs(train, mode, cfg.delays, state_norm, exo_norm)
    init = NarxModel.initialize(cfg, state_norm=state_norm, exo_norm=exo_norm, mode=mode)
    params, history = fit_pairs(init.params, pairs, cfg)
    return replace(init, params=params), history


def _windows(model: NarxModel, state_window, exo_window) -> tuple[np.ndarray, np.ndarray]:
    cfg = model.config
    state_window = np.asarray(state_window, dtype=float)
    exo_window = np.asarray(exo_window, dtype=float).reshape(-1, cfg.exo_dim) if np.size(exo_window) else np.zeros((0, cfg.exo_dim))
    if state_window.shape != (cfg.delays, cfg.state_dim):
        raise ShapeError(f"state window must be ({cfg.delays}, {cfg.state_dim}), got {state_window.shape}")
    return state_window, exo_window


def assemble_taps(model: NarxModel, state_window, exo_window) -> np.ndarray:
    """Normalized tap vector from chronological windows (oldest row first)."""
    cfg = model.config
    state_window, exo_window = _windows(model, state_window, exo_window)
    if exo_window.shape != (cfg.delays, cfg.exo_dim):
        raise ShapeError(f"exo window must be ({cfg.delays}, {cfg.exo_dim}), got {exo_window.shape}")
    s = model.normalize_states(state_window)[::-1]
    u = model.normalize_exo(exo_window)[::-1]
    return np.concatenate([s.ravel(), u.ravel()])


def predict_next(model: NarxModel, state_window, exo_window) -> np.ndarray:
    """Next state in mm from the last ``delays`` states and exogenous vectors (oldest first)."""
    return model.denormalize_states(forward(model, assemble_taps(model, state_window, exo_window)))


def _run(model: NarxModel, state_window, exo_window, exo_sequence, teacher=None) -> np.ndarray:
    cfg = model.config
    state_window, exo_window = _windows(model, state_window, exo_window)
    exo_sequence = np.asarray(exo_sequence, dtype=float).reshape(-1, cfg.exo_dim)
    if exo_window.shape != (cfg.delays - 1, cfg.exo_dim):
        raise ShapeError(f"exo history must be ({cfg.delays - 1}, {cfg.exo_dim}), got {exo_window.shape}")
    if len(exo_sequence) < 1:
        raise ShapeError("exogenous sequence must contain at least one step")
    (w1, b1), (w2, b2), (w3, b3) = model.params.layers
    if teacher is not None:
        teacher = np.ascontiguousarray(model.normalize_states(np.asarray(teacher, dtype=float)))
    out = _backend.rollout(
        w1, b1, w2, b2, w3, b3,
        np.ascontiguousarray(model.normalize_states(state_window)),
        np.ascontiguousarray(model.normalize_exo(exo_window)),
        np.ascontiguousarray(model.normalize_exo(exo_sequence)),
        teacher,
    )
    return model.denormalize_states(out)


def rollout_self_loop(model: NarxModel, state_window, exo_window, exo_sequence) -> np.ndarray:
    """Free-running prediction, ``(len(exo_sequence), state_dim)`` in mm.

    ``state_window`` holds the ``delays`` most recent true states and
    ``exo_window`` the ``delays - 1`` exogenous vectors before the first
    element of ``exo_sequence`` (both oldest first). Step ``t`` consumes
    ``exo_sequence[t]`` and predicts the state one sample later; predictions
    are fed back as state taps.
    """
    return _run(model, state_window, exo_window, exo_sequence)


def rollout_teacher_forced(model: NarxModel, state_window, exo_window, exo_sequence, true_states) -> np.ndarray:
    """Same arithmetic as :func:`rollout_self_loop` with true states fed back instead."""
    return _run(model, state_window, exo_window, exo_sequence, teacher=true_states)


def _mode_of(model: NarxModel) -> SensorMode:
    if model.mode is None:
        raise ValueError("model has no sensor mode; cannot select exogenous channels from a dataset")
    return model.mode


def predict_dataset(model: NarxModel, ds: TimeSeriesDataset, self_loop: bool = True) -> np.ndarray:
    """Predictions for frames ``delays .. n-1`` of ``ds`` (warm-up frames excluded)."""
    d = model.config.delays
    if len(ds) < d + 1:
        raise DatasetError(f"dataset of {len(ds)} frames is too short for {d} taps")
    r = ds.positions
    u = ds.exo(_mode_of(model))
    args = (r[:d], u[: d - 1], u[d - 1 : -1])
    if self_loop:
        return rollout_self_loop(model, *args)
    return rollout_teacher_forced(model, *args, r[d:])


def _encode_array(a: np.ndarray):
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: NarxModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": {**asdict(model.config), "hidden": list(model.config.hidden)},
        "mode": None if model.mode is None else model.mode.value,
        "state_norm": None if model.state_norm is None else model.state_norm.to_dict(),
        "exo_norm": None if model.exo_norm is None else model.exo_norm.to_dict(),
        "layers": [{"weight": _encode_array(w), "bias": _encode_array(b)} for w, b in model.params.layers],
    }


def model_from_dict(d: dict) -> NarxModel:
    try:
        if d.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(f"$.format_version: expected {FORMAT_VERSION}, got {d.get('format_version')!r}")
        cfg = NarxConfig(**{**d["config"], "hidden": tuple(d["config"]["hidden"])})
        params = Parameters(cfg.layer_sizes)
        layers = d["layers"]
        if len(layers) != 3:
            raise ModelFormatError(f"$.layers: expected 3 layers, got {len(layers)}")
        for k, ((w, b), entry) in enumerate(zip(params.layers, layers)):
            wa = np.array(entry["weight"], dtype=float)
            ba = np.array(entry["bias"], dtype=float)
            if wa.shape != w.shape or ba.shape != b.shape:
                raise ModelFormatError(f"$.layers[{k}]: expected shapes {w.shape}/{b.shape}, got {wa.shape}/{ba.shape}")
            w[...] = wa
            b[...] = ba
        return NarxModel(
            cfg,
            params,
            None if d["state_norm"] is None else Normalizer.from_dict(d["state_norm"]),
            None if d["exo_norm"] is None else Normalizer.from_dict(d["exo_norm"]),
            None if d["mode"] is None else SensorMode(d["mode"]),
        )
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"$: invalid model structure ({type(exc).__name__}: {exc})") from None


def dumps_model(model: NarxModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def loads_model(text: str, source: str = "<string>") -> NarxModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise ModelFormatError(f"{source}:1:1: top level must be an object")
    try:
        return model_from_dict(d)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{source}: {exc}") from None


def save_model(model: NarxModel, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_model(model))


def load_model(path: str | os.PathLike) -> NarxModel:
    return loads_model(Path(path).read_text(), str(path))
