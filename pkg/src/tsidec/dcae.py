"""Deep convolutional autoencoder: construction, encode/decode and reconstruction pretraining."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    Conv2D,
    ConvTranspose2D,
    Dense,
    Fit2D,
    Flatten,
    InvalidShapeError,
    MaxPool2D,
    OptimizerState,
    ReLU,
    Reshape,
    Sequential,
    Upsample2D,
    adam_step,
    conv_output_size,
    deconv_output_size,
    mse_loss,
    pool_output_size,
)

log = logging.getLogger(__name__)

DEFAULT_FILTERS = (16, 32, 32, 64)
DEFAULT_DENSE = (1028, 512)


class EmptyDatasetError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


def encoder_trace(rows: int, cols: int) -> list[tuple[str, int, int]]:
    """Spatial sizes after each encoder stage, raising on the first stage that collapses."""
    trace = []
    h, w = rows, cols
    stages = [
        ("conv1", lambda s: conv_output_size(s, 3, 1, 2)),
        ("maxpool1", lambda s: pool_output_size(s) if s >= 2 else 0),
        ("conv2", lambda s: conv_output_size(s, 5, 1, 0)),
        ("maxpool2", lambda s: pool_output_size(s) if s >= 2 else 0),
        ("conv3", lambda s: conv_output_size(s, 3, 1, 1)),
        ("conv4", lambda s: conv_output_size(s, 3, 1, 1)),
    ]
    for name, fn in stages:
        h, w = fn(h), fn(w)
        if h < 1 or w < 1:
            raise InvalidShapeError(f"input {rows}x{cols} too small: layer {name} produces {h}x{w}")
        trace.append((name, h, w))
    return trace


def _final_padding(pre: int, target: int) -> tuple[int, bool]:
    """Padding for the last 3x3 transposed conv so its output hits ``target``.

    Returns ``(padding, exact)``; when no integer padding works the closest
    non-negative one is returned and a crop/pad layer finishes the job.
    """
    base = deconv_output_size(pre, 3, 1, 0)
    diff = base - target
    if diff >= 0 and diff % 2 == 0:
        return diff // 2, True
    return max(diff // 2, 0), False


@dataclass
class DcaeModel:
    encoder: Sequential
    decoder: Sequential
    input_shape: tuple
    latent_dim: int
    flatten_dim: int
    filters: tuple = DEFAULT_FILTERS
    dense_widths: tuple = DEFAULT_DENSE
    params: np.ndarray = field(repr=False, default=None)
    grads: np.ndarray = field(repr=False, default=None)

    @property
    def n_params(self):
        return self.params.size

    @property
    def n_encoder_params(self):
        return self.encoder.n_params

    def config(self):
        return {
            "input_shape": list(self.input_shape),
            "latent_dim": self.latent_dim,
            "filters": list(self.filters),
            "dense_widths": list(self.dense_widths),
        }

    def copy(self) -> "DcaeModel":
        clone = _assemble(self.input_shape[0], self.input_shape[1], self.latent_dim, self.filters, self.dense_widths)
        clone.params[...] = self.params
        return clone

    def param_blocks(self):
        yield from (("encoder." + n, p, g) for n, p, g in self.encoder.param_blocks())
        yield from (("decoder." + n, p, g) for n, p, g in self.decoder.param_blocks())

    # grad_check protocol: treat the whole autoencoder as one chain
    def forward(self, x):
        return self.decoder.forward(self.encoder.forward(x))

    def backward(self, g, input_grad=True):
        return self.encoder.backward(self.decoder.backward(g), input_grad)

    def pattern(self):
        return self.encoder.pattern() + self.decoder.pattern()


def _assemble(rows, cols, latent_dim, filters, dense_widths) -> DcaeModel:
    trace = encoder_trace(rows, cols)
    f1, f2, f3, f4 = filters
    _, h4, w4 = trace[-1]
    flatten_dim = f4 * h4 * w4
    d1, d2 = dense_widths

    encoder = Sequential(
        [
            Conv2D(f1, 3, 1, 2, name="conv1"), ReLU(),
            MaxPool2D(name="maxpool1"),
            Conv2D(f2, 5, 1, 0, name="conv2"), ReLU(),
            MaxPool2D(name="maxpool2"),
            Conv2D(f3, 3, 1, 1, name="conv3"), ReLU(),
            Conv2D(f4, 3, 1, 1, name="conv4"), ReLU(),
            Flatten(),
            Dense(flatten_dim, name="fc1_en"), ReLU(),
            Dense(d1, name="fc2_en"), ReLU(),
            Dense(d2, name="fc3_en"), ReLU(),
            Dense(latent_dim, name="fc_latent"), ReLU(),
        ],
        (1, rows, cols),
    )

    # pre-image of the last layer: upsample(deconv2(upsample(h4)))
    pre_h = deconv_output_size(2 * h4, 5, 1, 0) * 2
    pre_w = deconv_output_size(2 * w4, 5, 1, 0) * 2
    p_h, exact_h = _final_padding(pre_h, rows)
    p_w, exact_w = _final_padding(pre_w, cols)
    decoder_layers = [
        Dense(d2, name="fc3_de"), ReLU(),
        Dense(d1, name="fc2_de"), ReLU(),
        Dense(flatten_dim, name="fc1_de"), ReLU(),
        Reshape((f4, h4, w4)),
        ConvTranspose2D(f3, 3, 1, 1, name="deconv4"), ReLU(),
        ConvTranspose2D(f2, 3, 1, 1, name="deconv3"), ReLU(),
        Upsample2D(),
        ConvTranspose2D(f1, 5, 1, 0, name="deconv2"), ReLU(),
        Upsample2D(),
        ConvTranspose2D(1, 3, 1, (p_h, p_w), name="deconv1"),
    ]
    if not (exact_h and exact_w):
        decoder_layers.append(Fit2D((rows, cols)))
    decoder = Sequential(decoder_layers, (latent_dim,))
    if decoder.out_shape != (1, rows, cols):
        raise InvalidShapeError(f"decoder produces {decoder.out_shape}, expected {(1, rows, cols)}")

    n_enc, n_dec = encoder.n_params, decoder.n_params
    params = np.zeros(n_enc + n_dec)
    grads = np.zeros(n_enc + n_dec)
    encoder.bind(params[:n_enc], grads[:n_enc])
    decoder.bind(params[n_enc:], grads[n_enc:])
    return DcaeModel(encoder, decoder, (rows, cols), latent_dim, flatten_dim,
                     tuple(filters), tuple(dense_widths), params, grads)


def build_dcae(input_rows: int, input_cols: int, latent_dim: int = 128, seed: int = 0,
               filters=DEFAULT_FILTERS, dense_widths=DEFAULT_DENSE) -> DcaeModel:
    """Build the encoder/decoder pair for ``input_rows x input_cols`` matrices.

    ``filters`` and ``dense_widths`` default to the published architecture and
    exist so that small variants can be gradient-checked exhaustively.
    """
    model = _assemble(input_rows, input_cols, latent_dim, tuple(filters), tuple(dense_widths))
    rng = np.random.default_rng(seed)
    model.encoder.init_params(rng)
    model.decoder.init_params(rng)
    return model


def _check_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4 or x.shape[1:] != (1, *model.input_shape):
        raise InvalidShapeError(f"batch shape {x.shape} does not match model input {model.input_shape}")
    return x


def encode(model: DcaeModel, x, batch_size: int = 256) -> np.ndarray:
    """Latent codes ``(n, latent_dim)`` for a batch of matrices."""
    x = _check_batch(model, x)
    out = [model.encoder.forward(x[i:i + batch_size]) for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros((0, model.latent_dim))


def decode(model: DcaeModel, z, batch_size: int = 256) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.latent_dim:
        raise InvalidShapeError(f"latent batch shape {z.shape} does not match latent_dim {model.latent_dim}")
    out = [model.decoder.forward(z[i:i + batch_size]) for i in range(0, z.shape[0], batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 1, *model.input_shape))


def reconstruction_loss(model: DcaeModel, x, batch_size: int = 256) -> float:
    """Mean over samples of ``||x - decode(encode(x))||^2``."""
    x = _check_batch(model, x)
    total = 0.0
    for i in range(0, x.shape[0], batch_size):
        xb = x[i:i + batch_size]
        total += np.sum((model.forward(xb) - xb) ** 2)
    return float(total / x.shape[0])


def pretrain(model: DcaeModel, x, epochs: int = 200, lr: float = 0.001, batch_size: int = 32,
             seed: int = 0, optimizer: OptimizerState | None = None):
    """Reconstruction-only training with minibatch Adam.

    Returns ``(model, history)`` where ``history[e]`` is the sample-weighted
    mean minibatch loss of epoch ``e``.  The sample order is reshuffled every
    epoch from a generator seeded with ``seed``.
    """
    x = _check_batch(model, x)
    n = x.shape[0]
    if n == 0:
        raise EmptyDatasetError("cannot pretrain on an empty dataset")
    rng = np.random.default_rng(seed)
    state = optimizer or OptimizerState.like(model.params, lr=lr)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb = x[idx]
            x_hat = model.forward(xb)
            loss, g = mse_loss(xb, x_hat)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"reconstruction loss became non-finite in pretraining epoch {epoch}")
            model.backward(g, input_grad=False)
            adam_step(model.params, model.grads, state)
            total += loss * len(idx)
        history.append(total / n)
        if epoch % 10 == 0:
            log.debug("pretrain epoch %d loss %.6f", epoch, history[-1])
    return model, history
