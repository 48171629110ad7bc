"""Fully connected autoencoder trained with mini-batch Adam.

Hidden layers are affine -> batch norm -> ReLU; the latent layer is affine with
identity activation and the reconstruction layer is affine -> sigmoid (inputs
are expected in [0, 1]). Backpropagation is implemented directly on numpy
arrays so every parameter gradient can be verified against central finite
differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .dataio import ExpressionMatrix
from .errors import ConfigError, DataValidationError, NumericalError

_BN_EPS = 1e-5
_CHECKPOINT_FORMAT = "ae-checkpoint/1"


@dataclass(frozen=True)
class AeArchitecture:
    """Layer sizes for the encoder and decoder, latent width included."""

    encoder_layers: tuple[int, ...]
    decoder_layers: tuple[int, ...]
    latent_dim: int

    def __post_init__(self):
        object.__setattr__(self, "encoder_layers", tuple(int(s) for s in self.encoder_layers))
        object.__setattr__(self, "decoder_layers", tuple(int(s) for s in self.decoder_layers))
        enc, dec = self.encoder_layers, self.decoder_layers
        if len(enc) < 2 or len(dec) < 2:
            raise ConfigError("encoder and decoder need at least two layer sizes each")
        if any(s < 1 for s in enc + dec):
            raise ConfigError("all layer sizes must be >= 1")
        if enc[-1] != self.latent_dim or dec[0] != self.latent_dim:
            raise ConfigError("latent_dim must equal the encoder output and decoder input size")
        if dec[-1] != enc[0]:
            raise ConfigError("decoder output size must equal the input dimension")

    @classmethod
    def default(cls, d: int, hidden: tuple[int, ...] = (200, 100), latent_dim: int = 50) -> "AeArchitecture":
        return cls(
            encoder_layers=(d, *hidden, latent_dim),
            decoder_layers=(latent_dim, *reversed(hidden), d),
            latent_dim=latent_dim,
        )

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0]


@dataclass(frozen=True)
class AeHyperparams:
    learning_rate: float = 1e-3
    beta_l2: float = 1e-4
    epochs: int = 200
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.beta_l2 < 0:
            raise ConfigError("beta_l2 must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch norm needs per-batch statistics)")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ConfigError("adam betas must lie in (0, 1)")


@dataclass
class BatchNormState:
    gamma: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.9


@dataclass
class DenseLayer:
    weights: np.ndarray  # (n_out, n_in)
    bias: np.ndarray  # (n_out,)
    activation: str  # "relu" | "identity" | "sigmoid"
    batch_norm: BatchNormState | None = None


@dataclass
class AeModel:
    arch: AeArchitecture
    encoder: list[DenseLayer]
    decoder: list[DenseLayer]
    loss_history: list[float] = field(default_factory=list)
    hyperparams: AeHyperparams | None = None  # set by train()

    def layers(self) -> Iterator[DenseLayer]:
        yield from self.encoder
        yield from self.decoder

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in a fixed order (weights, biases, BN scale/shift)."""
        out = []
        for idx, layer in enumerate(self.layers()):
            out.append((f"layer{idx}.weights", layer.weights))
            out.append((f"layer{idx}.bias", layer.bias))
            if layer.batch_norm is not None:
                out.append((f"layer{idx}.gamma", layer.batch_norm.gamma))
                out.append((f"layer{idx}.shift", layer.batch_norm.shift))
        return out

    def weight_matrices(self) -> list[np.ndarray]:
        return [layer.weights for layer in self.layers()]


def _build_stack(sizes: tuple[int, ...], final_activation: str, rng: np.random.Generator) -> list[DenseLayer]:
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-scale, scale, size=(fan_out, fan_in))
        last = i == len(sizes) - 2
        layers.append(
            DenseLayer(
                weights=weights,
                bias=np.zeros(fan_out),
                activation=final_activation if last else "relu",
                batch_norm=None
                if last
                else BatchNormState(
                    gamma=np.ones(fan_out),
                    shift=np.zeros(fan_out),
                    running_mean=np.zeros(fan_out),
                    running_var=np.ones(fan_out),
                ),
            )
        )
    return layers


def init_model(arch: AeArchitecture, seed: int) -> AeModel:
    """Glorot-uniform weights, zero biases, identity batch-norm state."""
    rng = np.random.default_rng(seed)
    return AeModel(
        arch=arch,
        encoder=_build_stack(arch.encoder_layers, "identity", rng),
        decoder=_build_stack(arch.decoder_layers, "sigmoid", rng),
    )


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    return pre


def _layer_forward(layer: DenseLayer, h_in: np.ndarray, training: bool) -> dict:
    affine = h_in @ layer.weights.T + layer.bias
    bn = layer.batch_norm
    cache: dict = {"h_in": h_in, "affine": affine}
    if bn is not None:
        if training:
            mu = affine.mean(axis=0)
            var = affine.var(axis=0)
        else:
            mu = bn.running_mean
            var = bn.running_var
        inv_std = 1.0 / np.sqrt(var + _BN_EPS)
        xhat = (affine - mu) * inv_std
        pre = bn.gamma * xhat + bn.shift
        cache.update(xhat=xhat, inv_std=inv_std, batch_mean=mu, batch_var=var)
    else:
        pre = affine
    out = _activate(pre, layer.activation)
    cache.update(pre=pre, out=out)
    return cache


def _forward_cached(model: AeModel, batch: np.ndarray, training: bool) -> tuple[list[dict], np.ndarray, np.ndarray]:
    h = batch
    caches = []
    z = None
    for i, layer in enumerate(model.layers()):
        cache = _layer_forward(layer, h, training)
        caches.append(cache)
        h = cache["out"]
        if i == len(model.encoder) - 1:
            z = h
    return caches, z, h


def forward(model: AeModel, batch: np.ndarray, mode: str = "inference") -> tuple[np.ndarray, np.ndarray]:
    """Full pass returning (latent, reconstruction).

    Train mode normalizes with per-batch statistics and updates the running
    statistics; inference mode uses the stored running statistics.
    """
    if mode not in ("train", "inference"):
        raise ConfigError(f"mode must be 'train' or 'inference', got {mode!r}")
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != model.arch.input_dim:
        raise DataValidationError(
            f"batch shape {batch.shape} incompatible with input dimension {model.arch.input_dim}"
        )
    training = mode == "train"
    if training and batch.shape[0] < 2:
        raise DataValidationError("train-mode forward needs at least 2 rows")
    caches, z, recon = _forward_cached(model, batch, training)
    if training:
        _update_running_stats(model, caches, batch.shape[0])
    return z, recon


def _update_running_stats(model: AeModel, caches: list[dict], m: int) -> None:
    for layer, cache in zip(model.layers(), caches):
        bn = layer.batch_norm
        if bn is None:
            continue
        unbiased = cache["batch_var"] * (m / (m - 1)) if m > 1 else cache["batch_var"]
        bn.running_mean = bn.momentum * bn.running_mean + (1 - bn.momentum) * cache["batch_mean"]
        bn.running_var = bn.momentum * bn.running_var + (1 - bn.momentum) * unbiased


def encode(model: AeModel, X: ExpressionMatrix) -> "LatentRepresentation":
    """Inference-mode pass through the encoder only."""
    values = X.values
    if values.shape[1] != model.arch.input_dim:
        raise DataValidationError(
            f"matrix has {values.shape[1]} features, model expects {model.arch.input_dim}"
        )
    h = values
    for layer in model.encoder:
        h = _layer_forward(layer, h, training=False)["out"]
    return LatentRepresentation(z_values=h, sample_ids=X.sample_ids)


@dataclass(frozen=True)
class LatentRepresentation:
    z_values: np.ndarray
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        if self.z_values.shape[0] != len(self.sample_ids):
            raise DataValidationError("latent rows must align one-to-one with sample ids")


def loss_mse(x: np.ndarray, x_reconstructed: np.ndarray) -> float:
    """Mean over samples of the squared Euclidean reconstruction error."""
    x = np.asarray(x, dtype=np.float64)
    r = np.asarray(x_reconstructed, dtype=np.float64)
    if x.shape != r.shape:
        raise DataValidationError(f"shape mismatch: {x.shape} vs {r.shape}")
    diff = x - r
    return float((diff * diff).sum() / x.shape[0])


def weight_penalty(model: AeModel) -> float:
    """Sum of squared weight entries over encoder and decoder (biases excluded)."""
    return float(sum((w * w).sum() for w in model.weight_matrices()))


def loss_regularized(model: AeModel, x: np.ndarray, x_reconstructed: np.ndarray, beta_l2: float) -> float:
    if beta_l2 < 0:
        raise ConfigError("beta_l2 must be >= 0")
    return loss_mse(x, x_reconstructed) + beta_l2 * weight_penalty(model)


def _training_loss(model: AeModel, batch: np.ndarray, beta_l2: float) -> float:
    _, _, recon = _forward_cached(model, batch, training=True)
    return loss_mse(batch, recon) + beta_l2 * weight_penalty(model)


def parameter_gradients(model: AeModel, batch: np.ndarray, beta_l2: float) -> list[np.ndarray]:
    """Analytic gradients of the regularized loss, aligned with ``model.parameters()``."""
    batch = np.asarray(batch, dtype=np.float64)
    caches, _, recon = _forward_cached(model, batch, training=True)
    m = batch.shape[0]
    grads: dict[int, list[np.ndarray]] = {}
    d_out = 2.0 * (recon - batch) / m
    layers = list(model.layers())
    for idx in range(len(layers) - 1, -1, -1):
        layer, cache = layers[idx], caches[idx]
        if layer.activation == "relu":
            d_pre = d_out * (cache["pre"] > 0)
        elif layer.activation == "sigmoid":
            d_pre = d_out * cache["out"] * (1.0 - cache["out"])
        else:
            d_pre = d_out
        bn = layer.batch_norm
        layer_grads: list[np.ndarray] = []
        if bn is not None:
            xhat, inv_std = cache["xhat"], cache["inv_std"]
            d_gamma = (d_pre * xhat).sum(axis=0)
            d_shift = d_pre.sum(axis=0)
            d_xhat = d_pre * bn.gamma
            d_affine = (inv_std / m) * (
                m * d_xhat - d_xhat.sum(axis=0) - xhat * (d_xhat * xhat).sum(axis=0)
            )
        else:
            d_gamma = d_shift = None
            d_affine = d_pre
        d_weights = d_affine.T @ cache["h_in"] + 2.0 * beta_l2 * layer.weights
        d_bias = d_affine.sum(axis=0)
        layer_grads.extend([d_weights, d_bias])
        if bn is not None:
            layer_grads.extend([d_gamma, d_shift])
        grads[idx] = layer_grads
        d_out = d_affine @ layer.weights
    flat: list[np.ndarray] = []
    for idx in range(len(layers)):
        flat.extend(grads[idx])
    return flat


def numerical_gradients(model: AeModel, batch: np.ndarray, beta_l2: float, step: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of the regularized training loss."""
    batch = np.asarray(batch, dtype=np.float64)
    out = []
    for _, array in model.parameters():
        grad = np.empty_like(array)
        flat = array.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = _training_loss(model, batch, beta_l2)
            flat[i] = orig - step
            lo = _training_loss(model, batch, beta_l2)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        out.append(grad)
    return out


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """max over entries of |a - n| / max(|a|, |n|, 1)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def gradient_check(model: AeModel, batch: np.ndarray, tolerance: float, beta_l2: float = 0.0) -> bool:
    """True iff every analytic gradient matches central finite differences."""
    analytic = parameter_gradients(model, batch, beta_l2)
    numeric = numerical_gradients(model, batch, beta_l2)
    return max_relative_error(analytic, numeric) <= tolerance


def _batch_slices(n: int, batch_size: int, order: np.ndarray) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    # batch norm needs >= 2 rows; a trailing singleton joins the previous batch
    if len(batches) > 1 and batches[-1].size == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(X: ExpressionMatrix, arch: AeArchitecture, hp: AeHyperparams) -> AeModel:
    """Mini-batch Adam over shuffled batches for ``hp.epochs`` passes.

    Deterministic given ``hp.seed`` (initialization and shuffling both derive
    from it); records the mean regularized loss per epoch.
    """
    if arch.input_dim != X.d:
        raise ConfigError(f"architecture input size {arch.input_dim} != matrix width {X.d}")
    if X.n < hp.batch_size:
        raise DataValidationError(f"need n >= batch_size, got n={X.n}, batch_size={hp.batch_size}")
    model = init_model(arch, hp.seed)
    shuffle_rng = np.random.default_rng([hp.seed, 1])
    params = [array for _, array in model.parameters()]
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0
    values = X.values
    for epoch in range(hp.epochs):
        order = shuffle_rng.permutation(X.n)
        epoch_loss = 0.0
        for batch_no, rows in enumerate(_batch_slices(X.n, hp.batch_size, order)):
            batch = values[rows]
            caches, _, recon = _forward_cached(model, batch, training=True)
            batch_loss = loss_mse(batch, recon) + hp.beta_l2 * weight_penalty(model)
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}"
                )
            epoch_loss += batch_loss * batch.shape[0]
            grads = parameter_gradients(model, batch, hp.beta_l2)
            step += 1
            bias1 = 1.0 - hp.adam_beta1**step
            bias2 = 1.0 - hp.adam_beta2**step
            for p, g, m_state, v_state in zip(params, grads, adam_m, adam_v):
                m_state *= hp.adam_beta1
                m_state += (1 - hp.adam_beta1) * g
                v_state *= hp.adam_beta2
                v_state += (1 - hp.adam_beta2) * g * g
                p -= hp.learning_rate * (m_state / bias1) / (np.sqrt(v_state / bias2) + hp.adam_epsilon)
            _update_running_stats(model, caches, batch.shape[0])
        model.loss_history.append(epoch_loss / X.n)
    model.hyperparams = hp
    return model


def save_model(model: AeModel, path: str | Path) -> None:
    """Versioned JSON checkpoint; decimal text round-trips floats exactly."""
    def layer_dict(layer: DenseLayer) -> dict:
        out = {
            "weights": layer.weights.tolist(),
            "bias": layer.bias.tolist(),
            "activation": layer.activation,
        }
        if layer.batch_norm is not None:
            bn = layer.batch_norm
            out["batch_norm"] = {
                "gamma": bn.gamma.tolist(),
                "shift": bn.shift.tolist(),
                "running_mean": bn.running_mean.tolist(),
                "running_var": bn.running_var.tolist(),
                "momentum": bn.momentum,
            }
        return out

    doc = {
        "format": _CHECKPOINT_FORMAT,
        "architecture": {
            "encoder_layers": list(model.arch.encoder_layers),
            "decoder_layers": list(model.arch.decoder_layers),
            "latent_dim": model.arch.latent_dim,
        },
        "hyperparams": None if model.hyperparams is None else vars(model.hyperparams),
        "encoder": [layer_dict(l) for l in model.encoder],
        "decoder": [layer_dict(l) for l in model.decoder],
        "loss_history": model.loss_history,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> AeModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != _CHECKPOINT_FORMAT:
        raise DataValidationError(f"unsupported checkpoint format: {doc.get('format')!r}")

    def layer_from(dct: dict) -> DenseLayer:
        bn = None
        if "batch_norm" in dct:
            b = dct["batch_norm"]
            bn = BatchNormState(
                gamma=np.array(b["gamma"]),
                shift=np.array(b["shift"]),
                running_mean=np.array(b["running_mean"]),
                running_var=np.array(b["running_var"]),
                momentum=b["momentum"],
            )
        return DenseLayer(
            weights=np.array(dct["weights"]),
            bias=np.array(dct["bias"]),
            activation=dct["activation"],
            batch_norm=bn,
        )

    arch = AeArchitecture(
        encoder_layers=tuple(doc["architecture"]["encoder_layers"]),
        decoder_layers=tuple(doc["architecture"]["decoder_layers"]),
        latent_dim=doc["architecture"]["latent_dim"],
    )
    hp = doc.get("hyperparams")
    return AeModel(
        arch=arch,
        encoder=[layer_from(l) for l in doc["encoder"]],
        decoder=[layer_from(l) for l in doc["decoder"]],
        loss_history=list(doc["loss_history"]),
        hyperparams=None if hp is None else AeHyperparams(**hp),
    )
