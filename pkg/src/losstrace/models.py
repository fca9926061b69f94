"""Window-based reconstruction and prediction models for TSAD.

A reconstruction model maps a flattened window to itself through a
bottleneck; a prediction model maps the first w-h steps of a window to the
last h steps. Both expose per-sample training losses (the quantity the
loss-trace filter consumes) and per-timestep anomaly scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .data import MultivariateSeries, Normalizer, WindowSet, make_windows
from .errors import ConfigError, ShapeError, TrainingError

RECONSTRUCTION = "reconstruction"
PREDICTION = "prediction"
MODEL_KINDS = (RECONSTRUCTION, PREDICTION)

CHECKPOINT_FORMAT = "losstrace-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    patience: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class TsadModel:
    kind: str
    net: nn.DenseNet
    window: int
    channels: int
    horizon: int = 0  # prediction models only

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        w, d, h = self.window, self.channels, self.horizon
        if self.kind == RECONSTRUCTION:
            if self.net.input_size != w * d or self.net.output_size != w * d:
                raise ConfigError(
                    f"reconstruction net must map {w * d} -> {w * d}, got "
                    f"{self.net.input_size} -> {self.net.output_size}"
                )
        else:
            if not 1 <= h < w:
                raise ConfigError(f"prediction horizon must satisfy "
                                  f"1 <= h < w, got h={h} w={w}")
            if self.net.input_size != (w - h) * d or self.net.output_size != h * d:
                raise ConfigError(
                    f"prediction net must map {(w - h) * d} -> {h * d}, got "
                    f"{self.net.input_size} -> {self.net.output_size}"
                )


def build_model(
    kind: str,
    window: int,
    channels: int,
    horizon: int = 1,
    hidden_sizes: tuple[int, ...] = (32,),
    seed: int = 0,
) -> TsadModel:
    """Construct a fresh model of the given kind.

    Reconstruction models require a bottleneck: every hidden size must stay
    strictly below the flattened window size w*d.
    """
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    if window < 1 or channels < 1:
        raise ConfigError("window and channels must be positive")
    if not hidden_sizes:
        raise ConfigError("need at least one hidden layer size")
    if kind == RECONSTRUCTION:
        flat = window * channels
        if min(hidden_sizes) >= flat:
            raise ConfigError(
                f"reconstruction bottleneck {min(hidden_sizes)} must be "
                f"smaller than the flattened window size {flat}"
            )
        sizes = [flat, *hidden_sizes, flat]
        h = 0
    else:
        if not 1 <= horizon < window:
            raise ConfigError(
                f"prediction horizon must satisfy 1 <= h < w, got "
                f"h={horizon} w={window}"
            )
        sizes = [(window - horizon) * channels, *hidden_sizes, horizon * channels]
        h = horizon
    net = nn.init_network(sizes, seed=seed)
    return TsadModel(kind, net, window, channels, h)


def _window_io(model: TsadModel, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a (n, w, d) window batch into flattened (inputs, targets)."""
    n = batch.shape[0]
    if model.kind == RECONSTRUCTION:
        flat = batch.reshape(n, -1)
        return flat, flat
    split = model.window - model.horizon
    return batch[:, :split, :].reshape(n, -1), batch[:, split:, :].reshape(n, -1)


def sample_loss(model: TsadModel, window: np.ndarray) -> float:
    """Per-sample loss of one w x d window (reconstruction or prediction MSE)."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.window, model.channels):
        raise ShapeError(
            f"window shape {window.shape} != "
            f"({model.window}, {model.channels})"
        )
    x, y = _window_io(model, window[None, :, :])
    return nn.mse_per_sample(nn.forward(model.net, x[0]), y[0])


def sample_losses(model: TsadModel, windows: WindowSet | np.ndarray) -> np.ndarray:
    """Vector of per-sample losses for every window (batched evaluation)."""
    batch = windows.data if isinstance(windows, WindowSet) else np.asarray(windows)
    if batch.ndim != 3 or batch.shape[1:] != (model.window, model.channels):
        raise ShapeError(
            f"window batch shape {batch.shape} != "
            f"(n, {model.window}, {model.channels})"
        )
    x, y = _window_io(model, batch)
    pred = nn.forward_batch(model.net, x)
    diff = pred - y
    return np.mean(diff * diff, axis=1)


def train_epoch(
    model: TsadModel,
    state: nn.OptimizerState,
    windows: WindowSet,
    config: TrainConfig,
    epoch: int,
    mask: np.ndarray | list[int] | None = None,
) -> None:
    """One shuffled pass of minibatch Adam steps over the masked windows.

    Only windows listed in mask participate (None means all). The shuffle is
    a function of (config.seed, epoch) and of the mask size only, so training
    with mask M is parameter-identical to training on a dataset physically
    reduced to M.
    """
    if mask is None:
        order = np.arange(len(windows), dtype=np.int64)
    else:
        order = np.asarray(sorted(mask), dtype=np.int64)
        if order.size == 0:
            raise TrainingError("empty training mask")
        if order[0] < 0 or order[-1] >= len(windows):
            raise TrainingError(f"mask indices out of range 0..{len(windows) - 1}")
    rng = np.random.default_rng([config.seed, epoch])
    order = order[rng.permutation(order.size)]
    for start in range(0, order.size, config.batch_size):
        batch_idx = order[start : start + config.batch_size]
        x, y = _window_io(model, windows.data[batch_idx])
        grads = nn.backward_batch(model.net, x, y)
        nn.optimizer_step(model.net, grads, state)


@dataclass
class FitResult:
    epochs_run: int
    best_epoch: int
    val_history: list[float]


def fit(
    model: TsadModel,
    windows: WindowSet,
    config: TrainConfig,
    mask: np.ndarray | list[int] | None = None,
    val_windows: WindowSet | None = None,
) -> FitResult:
    """Train for up to config.epochs with optional early stopping.

    With a validation set, stops once the mean validation loss has not
    improved for config.patience consecutive epochs and restores the best
    parameters seen.
    """
    best_val = np.inf
    best_epoch = -1
    best_net = None
    history: list[float] = []
    state = nn.init_optimizer(model.net, config.learning_rate)
    epochs_run = 0
    for epoch in range(config.epochs):
        train_epoch(model, state, windows, config, epoch, mask=mask)
        epochs_run = epoch + 1
        if val_windows is None:
            continue
        val = float(np.mean(sample_losses(model, val_windows)))
        history.append(val)
        if val < best_val:
            best_val = val
            best_epoch = epoch
            best_net = model.net.copy()
        elif epoch - best_epoch >= config.patience:
            break
    if best_net is not None:
        model.net = best_net
    return FitResult(epochs_run, best_epoch, history)


def anomaly_scores(
    model: TsadModel, series: MultivariateSeries, stride: int = 1
) -> np.ndarray:
    """Per-timestep anomaly scores over a series.

    The model loss is computed for the window at every origin; a timestep's
    score is the maximum loss over all windows covering it. Timesteps covered
    by no window (possible when stride > 1) get the minimum computed score.
    """
    w = model.window
    if series.channels != model.channels:
        raise ShapeError(
            f"series has {series.channels} channels, model expects "
            f"{model.channels}"
        )
    if series.length < w:
        raise ShapeError(
            f"series length {series.length} shorter than window {w}"
        )
    windows = make_windows(series, w, stride)
    losses = sample_losses(model, windows)
    scores = np.full(series.length, -np.inf)
    if stride == 1:
        # sliding max over the w windows covering each timestep
        n = losses.shape[0]
        for shift in range(w):
            lo, hi = shift, shift + n
            np.maximum(scores[lo:hi], losses, out=scores[lo:hi])
    else:
        for j, origin in enumerate(windows.origins):
            seg = scores[origin : origin + w]
            np.maximum(seg, losses[j], out=seg)
    covered = np.isfinite(scores)
    if not covered.all():
        scores[~covered] = losses.min()
    return scores


def save_checkpoint(model: TsadModel, path: str,
                    normalizer: Normalizer | None = None,
                    channel_names: list[str] | None = None) -> None:
    """Serialize architecture + parameters (and optionally the fitted
    normalizer) for bit-exact reload."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "window": model.window,
        "channels": model.channels,
        "horizon": model.horizon,
        "seed": model.net.seed,
        "activations": [layer.activation for layer in model.net.layers],
        "channel_names": channel_names,
        "has_normalizer": normalizer is not None,
    }
    arrays: dict[str, np.ndarray] = {"meta": np.array(json.dumps(meta))}
    for i, layer in enumerate(model.net.layers):
        arrays[f"w{i}"] = layer.weights
        arrays[f"b{i}"] = layer.bias
    if normalizer is not None:
        arrays["norm_mean"] = normalizer.mean
        arrays["norm_std"] = normalizer.std
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(
    path: str,
) -> tuple[TsadModel, Normalizer | None, list[str] | None]:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ConfigError(f"{path}: not a losstrace checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(
                f"{path}: unsupported checkpoint version {meta.get('version')}"
            )
        layers = [
            nn.DenseLayer(archive[f"w{i}"], archive[f"b{i}"], act)
            for i, act in enumerate(meta["activations"])
        ]
        norm = None
        if meta["has_normalizer"]:
            norm = Normalizer(archive["norm_mean"], archive["norm_std"])
    net = nn.DenseNet(layers, seed=meta["seed"])
    model = TsadModel(
        meta["kind"], net, meta["window"], meta["channels"], meta["horizon"]
    )
    return model, norm, meta["channel_names"]
