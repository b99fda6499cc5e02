"""Differentiable layers, reconstruction loss and Adam for the convolutional autoencoder.

Every kernel works on float64 batches shaped ``(N, C, H, W)`` (or ``(N, F)``
for dense layers).  A single sample without the batch axis is accepted by the
functional kernels and returned in the same form.

Layers do not own their parameters: a :class:`Sequential` binds each layer's
weights and gradients to slices of one flat buffer, so the optimizer updates
the whole model in a single pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np



class InvalidShapeError(ValueError):
    pass


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _as_batch(x, ndim=4):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise InvalidShapeError(f"expected a {ndim - 1}-D sample or {ndim}-D batch, got shape {x.shape}")
    return x, False


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def deconv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def pool_output_size(size: int) -> int:
    return (size - 2) // 2 + 1


# ---------------------------------------------------------------------------
# functional kernels


@numba.njit(cache=True)
def _im2col_kernel(xp, kh, kw, s, ho, wo, cols):
    # cols[(ch, i, j), (b, y, x)]; the innermost copy walks one input row
    n, c = xp.shape[0], xp.shape[1]
    plane = ho * wo
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                r = (ch * kh + i) * kw + j
                for b in range(n):
                    for y in range(ho):
                        src = y * s + i
                        o = b * plane + y * wo
                        if s == 1:  # unit stride vectorizes
                            for x in range(wo):
                                cols[r, o + x] = xp[b, ch, src, x + j]
                        else:
                            for x in range(wo):
                                cols[r, o + x] = xp[b, ch, src, x * s + j]


@numba.njit(cache=True)
def _col2im_kernel(dcols, kh, kw, s, ho, wo, out):
    n, c = out.shape[0], out.shape[1]
    plane = ho * wo
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                r = (ch * kh + i) * kw + j
                for b in range(n):
                    for y in range(ho):
                        dst = y * s + i
                        o = b * plane + y * wo
                        if s == 1:
                            for x in range(wo):
                                out[b, ch, dst, x + j] += dcols[r, o + x]
                        else:
                            for x in range(wo):
                                out[b, ch, dst, x * s + j] += dcols[r, o + x]


def _im2col(xp, kh, kw, s):
    """Patches of the padded batch as columns: ``(C*kh*kw, N*Ho*Wo)``."""
    n, c, hp, wp = xp.shape
    ho, wo = (hp - kh) // s + 1, (wp - kw) // s + 1
    cols = np.empty((c * kh * kw, n * ho * wo))
    _im2col_kernel(np.ascontiguousarray(xp), kh, kw, s, ho, wo, cols)
    return cols, ho, wo


def _correlate(xp, w, s):
    """Valid cross-correlation of a padded batch; returns ``(y, cols)``."""
    c_out, _, kh, kw = w.shape
    cols, ho, wo = _im2col(xp, kh, kw, s)
    y = w.reshape(c_out, -1) @ cols
    y = np.ascontiguousarray(y.reshape(c_out, xp.shape[0], ho, wo).transpose(1, 0, 2, 3))
    return y, cols


def _channels_first(g):
    """``(N, C, H, W)`` -> ``(C, N*H*W)``, the column layout used by :func:`_im2col`."""
    return np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(g.shape[1], -1)


def _scatter_patches(dcols, shape, kh, kw, s, ho, wo):
    """Adjoint of :func:`_im2col`: accumulate patch columns back onto the image."""
    out = np.zeros(shape)
    _col2im_kernel(np.ascontiguousarray(dcols), kh, kw, s, ho, wo, out)
    return out


def conv2d_forward(x, w, b, stride=1, padding=0):
    """Cross-correlation of ``x`` (N, C_in, H, W) with ``w`` (C_out, C_in, kh, kw).

    Returns ``(y, cache)``; pass ``cache`` to :func:`conv2d_backward`.
    """
    x, single = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ph, pw = _pair(padding)
    s = int(stride)
    c_out, c_in, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise InvalidShapeError(f"input has {x.shape[1]} channels, weights expect {c_in}")
    if b.shape != (c_out,):
        raise InvalidShapeError(f"bias shape {b.shape} does not match {c_out} filters")
    hp, wp = x.shape[2] + 2 * ph, x.shape[3] + 2 * pw
    if hp < kh or wp < kw:
        raise InvalidShapeError(f"padded input {hp}x{wp} smaller than kernel {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    y, cols = _correlate(xp, w, s)
    y += b[None, :, None, None]
    cache = (xp.shape, cols, w, s, ph, pw, single)
    return (y[0] if single else y), cache


def conv2d_backward(upstream, cache, input_grad=True):
    """Gradients ``(grad_input, grad_weights, grad_bias)`` of a cross-correlation.

    With ``input_grad=False`` the (comparatively costly) input gradient is
    skipped and returned as ``None``.
    """
    xp_shape, cols, w, s, ph, pw, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None]
    c_out, c_in, kh, kw = w.shape
    ho, wo = (xp_shape[2] - kh) // s + 1, (xp_shape[3] - kw) // s + 1
    if g.shape != (xp_shape[0], c_out, ho, wo):
        raise InvalidShapeError(f"upstream shape {g.shape} does not match forward output")
    gm = _channels_first(g)
    dw = (gm @ cols.T).reshape(w.shape)
    db = g.sum(axis=(0, 2, 3))
    if not input_grad:
        return None, dw, db
    dxp = _scatter_patches(w.reshape(c_out, -1).T @ gm, xp_shape, kh, kw, s, ho, wo)
    dx = np.ascontiguousarray(dxp[:, :, ph:xp_shape[2] - ph, pw:xp_shape[3] - pw])
    return (dx[0] if single else dx), dw, db


def conv_transpose2d_forward(x, w, b, stride=1, padding=0):
    """Transposed convolution; ``w`` has shape (C_in, C_out, kh, kw).

    Spatial output size is ``(H - 1) * stride - 2 * padding + kh``.
    """
    x, single = _as_batch(x)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ph, pw = _pair(padding)
    s = int(stride)
    c_in, c_out, kh, kw = w.shape
    n, c, h, wd = x.shape
    if c != c_in:
        raise InvalidShapeError(f"input has {c} channels, weights expect {c_in}")
    ho, wo = deconv_output_size(h, kh, s, ph), deconv_output_size(wd, kw, s, pw)
    if ho < 1 or wo < 1:
        raise InvalidShapeError(f"transposed convolution output would be {ho}x{wo}")
    # a transposed conv is the adjoint of correlating with w read as (C_in <- C_out)
    full = _scatter_patches(w.reshape(c_in, -1).T @ _channels_first(x), (n, c_out, (h - 1) * s + kh, (wd - 1) * s + kw),
                            kh, kw, s, h, wd)
    y = full[:, :, ph:ph + ho, pw:pw + wo] + b[None, :, None, None]
    y = np.ascontiguousarray(y)
    cache = (x, w, s, ph, pw, single)
    return (y[0] if single else y), cache


def conv_transpose2d_backward(upstream, cache):
    x, w, s, ph, pw, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None]
    c_in, c_out, kh, kw = w.shape
    n, _, h, wd = x.shape
    expected = (n, c_out, deconv_output_size(h, kh, s, ph), deconv_output_size(wd, kw, s, pw))
    if g.shape != expected:
        raise InvalidShapeError(f"upstream shape {g.shape} does not match forward output {expected}")
    hf, wf = (h - 1) * s + kh, (wd - 1) * s + kw
    gf = np.zeros((n, c_out, hf, wf))
    gf[:, :, ph:ph + g.shape[2], pw:pw + g.shape[3]] = g
    # input gradient is a plain strided correlation of the padded upstream with w
    dx, gcols = _correlate(gf, w, s)
    dw = (_channels_first(x) @ gcols.T).reshape(c_in, c_out, kh, kw)
    db = g.sum(axis=(0, 2, 3))
    return (dx[0] if single else dx), dw, db


@numba.njit(cache=True)
def _maxpool_kernel(x, y, idx):
    n, c, ho, wo = y.shape
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[b, ch, 2 * i, 2 * j]
                    k = 0
                    v = x[b, ch, 2 * i, 2 * j + 1]
                    if v > best:  # strict: earlier positions win ties
                        best, k = v, 1
                    v = x[b, ch, 2 * i + 1, 2 * j]
                    if v > best:
                        best, k = v, 2
                    v = x[b, ch, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best, k = v, 3
                    y[b, ch, i, j] = best
                    idx[b, ch, i, j] = k


@numba.njit(cache=True)
def _unpool_kernel(g, idx, dx):
    n, c, ho, wo = g.shape
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    k = idx[b, ch, i, j]
                    dx[b, ch, 2 * i + k // 2, 2 * j + k % 2] = g[b, ch, i, j]


def maxpool2d_forward(x):
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped.

    Ties go to the first position in row-major order within each window.
    Returns ``(y, argmax, cache)`` where ``argmax`` in 0..3 indexes the window
    as (0,0), (0,1), (1,0), (1,1).
    """
    x, single = _as_batch(x)
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise InvalidShapeError(f"max pooling needs at least 2x2 input, got {h}x{w}")
    ho, wo = pool_output_size(h), pool_output_size(w)
    y = np.empty((n, c, ho, wo))
    idx = np.empty((n, c, ho, wo), dtype=np.int8)
    _maxpool_kernel(np.ascontiguousarray(x), y, idx)
    cache = (x.shape, idx, single)
    if single:
        return y[0], idx[0], cache
    return y, idx, cache


def maxpool2d_backward(upstream, cache):
    shape, idx, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None]
    if g.shape != idx.shape:
        raise InvalidShapeError(f"upstream shape {g.shape} does not match pooled output {idx.shape}")
    dx = np.zeros(shape)
    _unpool_kernel(np.ascontiguousarray(g), idx, dx)
    return dx[0] if single else dx


def upsample_nearest2x(x):
    x, single = _as_batch(x)
    y = x.repeat(2, axis=2).repeat(2, axis=3)
    return y[0] if single else y


def upsample_nearest2x_backward(upstream):
    g, single = _as_batch(upstream)
    dx = g[:, :, 0::2, 0::2] + g[:, :, 0::2, 1::2] + g[:, :, 1::2, 0::2] + g[:, :, 1::2, 1::2]
    return dx[0] if single else dx


def dense_forward(x, w, b):
    x, single = _as_batch(x, ndim=2)
    w = np.asarray(w, dtype=np.float64)
    if x.shape[1] != w.shape[1]:
        raise InvalidShapeError(f"input width {x.shape[1]} does not match weights {w.shape}")
    y = x @ w.T + b
    return (y[0] if single else y), (x, w, single)


def dense_backward(upstream, cache):
    x, w, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    if single:
        g = g[None]
    if g.shape != (x.shape[0], w.shape[0]):
        raise InvalidShapeError(f"upstream shape {g.shape} does not match forward output")
    dx = g @ w
    return (dx[0] if single else dx), g.T @ x, g.sum(axis=0)


def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0)


def relu_backward(upstream, x):
    # derivative at exactly 0 is 0
    return np.where(np.asarray(x) > 0.0, upstream, 0.0)


def mse_loss(x, x_hat):
    """Batch-mean squared reconstruction error and its gradient w.r.t. ``x_hat``.

    ``loss = (1/m) * sum_i ||x_i - x_hat_i||^2`` with ``m`` the batch size.
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise InvalidShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    m = x.shape[0] if x.ndim > 1 else 1
    diff = x_hat - x
    return float(np.sum(diff * diff)) / m, (2.0 / m) * diff


# ---------------------------------------------------------------------------
# layers


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: tuple = ()
    stride: int = 1
    padding: tuple = (0, 0)
    filters: int = 0
    shape: tuple = ()  # reshape / fit target

    def to_dict(self):
        return {
            "kind": self.kind,
            "kernel": list(self.kernel),
            "stride": self.stride,
            "padding": list(self.padding),
            "filters": self.filters,
            "shape": list(self.shape),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["kernel"]), d["stride"], tuple(d["padding"]), d["filters"], tuple(d["shape"]))


class Layer:
    kind = ""
    has_kink = False

    def __init__(self):
        self.params: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self.in_shape: tuple = ()
        self.out_shape: tuple = ()

    def build(self, in_shape):
        self.in_shape = tuple(in_shape)
        self.out_shape = self.compute_shape(self.in_shape)
        return self.out_shape

    def compute_shape(self, in_shape):
        return in_shape

    def param_shapes(self):
        return []

    def init_params(self, rng):
        pass

    def pattern(self):
        return None

    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind)

    def __repr__(self):
        return f"{type(self).__name__}({self.in_shape} -> {self.out_shape})"


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, filters, kernel, stride=1, padding=0, name=""):
        super().__init__()
        self.filters = filters
        self.kernel = _pair(kernel)
        self.stride = stride
        self.padding = _pair(padding)
        self.name = name

    def compute_shape(self, in_shape):
        c, h, w = in_shape
        kh, kw = self.kernel
        ho = conv_output_size(h, kh, self.stride, self.padding[0])
        wo = conv_output_size(w, kw, self.stride, self.padding[1])
        if ho < 1 or wo < 1:
            raise InvalidShapeError(f"layer {self.name or self.kind}: input {h}x{w} too small for kernel {kh}x{kw}")
        return (self.filters, ho, wo)

    def param_shapes(self):
        return [(self.filters, self.in_shape[0], *self.kernel), (self.filters,)]

    def init_params(self, rng):
        kh, kw = self.kernel
        fan_in, fan_out = self.in_shape[0] * kh * kw, self.filters * kh * kw
        self.params[0][...] = _glorot(rng, self.params[0].shape, fan_in, fan_out)
        self.params[1][...] = 0.0

    def forward(self, x):
        y, self._cache = conv2d_forward(x, self.params[0], self.params[1], self.stride, self.padding)
        return y

    def backward(self, g, input_grad=True):
        dx, dw, db = conv2d_backward(g, self._cache, input_grad)
        self.grads[0][...] = dw
        self.grads[1][...] = db
        return dx

    def spec(self):
        return LayerSpec(self.kind, self.kernel, self.stride, self.padding, self.filters)


class ConvTranspose2D(Conv2D):
    kind = "deconv"

    def compute_shape(self, in_shape):
        c, h, w = in_shape
        kh, kw = self.kernel
        ho = deconv_output_size(h, kh, self.stride, self.padding[0])
        wo = deconv_output_size(w, kw, self.stride, self.padding[1])
        if ho < 1 or wo < 1:
            raise InvalidShapeError(f"layer {self.name or self.kind}: output size {ho}x{wo} is not positive")
        return (self.filters, ho, wo)

    def param_shapes(self):
        return [(self.in_shape[0], self.filters, *self.kernel), (self.filters,)]

    def forward(self, x):
        y, self._cache = conv_transpose2d_forward(x, self.params[0], self.params[1], self.stride, self.padding)
        return y

    def backward(self, g):
        dx, dw, db = conv_transpose2d_backward(g, self._cache)
        self.grads[0][...] = dw
        self.grads[1][...] = db
        return dx


class MaxPool2D(Layer):
    kind = "maxpool"
    has_kink = True

    def __init__(self, name=""):
        super().__init__()
        self.name = name

    def compute_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise InvalidShapeError(f"layer {self.name or self.kind}: input {h}x{w} too small for 2x2 pooling")
        return (c, pool_output_size(h), pool_output_size(w))

    def forward(self, x):
        y, self._idx, self._cache = maxpool2d_forward(x)
        return y

    def backward(self, g):
        return maxpool2d_backward(g, self._cache)

    def pattern(self):
        return self._idx

    def spec(self):
        return LayerSpec(self.kind, (2, 2), 2, (0, 0))


class Upsample2D(Layer):
    kind = "upsample"

    def compute_shape(self, in_shape):
        c, h, w = in_shape
        return (c, 2 * h, 2 * w)

    def forward(self, x):
        return upsample_nearest2x(x)

    def backward(self, g):
        return upsample_nearest2x_backward(g)

    def spec(self):
        return LayerSpec(self.kind, (2, 2), 2, (0, 0))


class Dense(Layer):
    kind = "dense"

    def __init__(self, units, name=""):
        super().__init__()
        self.units = units
        self.name = name

    def compute_shape(self, in_shape):
        if len(in_shape) != 1:
            raise InvalidShapeError(f"layer {self.name or self.kind}: dense input must be flat, got {in_shape}")
        return (self.units,)

    def param_shapes(self):
        return [(self.units, self.in_shape[0]), (self.units,)]

    def init_params(self, rng):
        self.params[0][...] = _glorot(rng, self.params[0].shape, self.in_shape[0], self.units)
        self.params[1][...] = 0.0

    def forward(self, x):
        y, self._cache = dense_forward(x, self.params[0], self.params[1])
        return y

    def backward(self, g):
        x, w, _ = self._cache
        if g.shape != (x.shape[0], w.shape[0]):
            raise InvalidShapeError(f"upstream shape {g.shape} does not match forward output")
        # write straight into the flat gradient buffer; these are the largest blocks
        np.matmul(g.T, x, out=self.grads[0])
        np.sum(g, axis=0, out=self.grads[1])
        return g @ w

    def spec(self):
        return LayerSpec(self.kind, filters=self.units)


class ReLU(Layer):
    kind = "relu"
    has_kink = True

    def forward(self, x):
        self._x = x
        return relu_forward(x)

    def backward(self, g):
        return relu_backward(g, self._x)

    def pattern(self):
        return self._x > 0.0


class Flatten(Layer):
    kind = "flatten"

    def compute_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape((g.shape[0], *self.in_shape))


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def compute_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.shape)):
            raise InvalidShapeError(f"cannot reshape {in_shape} to {self.shape}")
        return self.shape

    def forward(self, x):
        return x.reshape((x.shape[0], *self.shape))

    def backward(self, g):
        return g.reshape((g.shape[0], *self.in_shape))

    def spec(self):
        return LayerSpec(self.kind, shape=self.shape)


class Fit2D(Layer):
    """Center-crop or edge-pad the spatial dimensions to a fixed target."""

    kind = "fit"

    def __init__(self, target):
        super().__init__()
        self.target = tuple(target)

    @staticmethod
    def _index(size, target):
        off = (size - target) // 2 if size >= target else -((target - size) // 2)
        return np.clip(np.arange(target) + off, 0, size - 1)

    def compute_shape(self, in_shape):
        c, h, w = in_shape
        self._ri = self._index(h, self.target[0])
        self._ci = self._index(w, self.target[1])
        return (c, *self.target)

    def forward(self, x):
        return x[:, :, self._ri][:, :, :, self._ci]

    def backward(self, g):
        n, c = g.shape[:2]
        _, h, w = self.in_shape
        tmp = np.zeros((n, c, self.target[0], w))
        np.add.at(tmp, (slice(None), slice(None), slice(None), self._ci), g)
        dx = np.zeros((n, c, h, w))
        np.add.at(dx, (slice(None), slice(None), self._ri), tmp)
        return dx

    def spec(self):
        return LayerSpec(self.kind, shape=self.target)


class Sequential:
    """Ordered layer chain with parameters held in flat buffers."""

    def __init__(self, layers, in_shape):
        self.layers = list(layers)
        self.in_shape = tuple(in_shape)
        shape = self.in_shape
        for layer in self.layers:
            shape = layer.build(shape)
        self.out_shape = shape
        self.n_params = sum(int(np.prod(s)) for layer in self.layers for s in layer.param_shapes())

    def bind(self, params: np.ndarray, grads: np.ndarray):
        """Point every layer's weights and gradients at slices of the given buffers."""
        if params.size != self.n_params or grads.size != self.n_params:
            raise InvalidShapeError(f"buffer size {params.size} != parameter count {self.n_params}")
        self.flat_params, self.flat_grads = params, grads
        off = 0
        for layer in self.layers:
            layer.params, layer.grads = [], []
            for shape in layer.param_shapes():
                size = int(np.prod(shape))
                layer.params.append(params[off:off + size].reshape(shape))
                layer.grads.append(grads[off:off + size].reshape(shape))
                off += size

    def init_params(self, rng):
        for layer in self.layers:
            layer.init_params(rng)

    def allocate(self, seed=None):
        """Give the chain its own buffers; initialize them when ``seed`` is given."""
        self.bind(np.zeros(self.n_params), np.zeros(self.n_params))
        if seed is not None:
            self.init_params(np.random.default_rng(seed))
        return self

    def param_blocks(self):
        """Yield ``(name, param_view, grad_view)`` for every parameter block."""
        for i, layer in enumerate(self.layers):
            for j, (p, g) in enumerate(zip(layer.params, layer.grads)):
                label = getattr(layer, "name", "") or f"{layer.kind}{i}"
                yield f"{label}.{'weight' if j == 0 else 'bias'}", p, g

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, g, input_grad=True):
        """Backpropagate ``g``; with ``input_grad=False`` a leading convolution
        skips its input gradient and ``None`` may be returned."""
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if i == 0 and not input_grad and isinstance(layer, Conv2D) and not isinstance(layer, ConvTranspose2D):
                return layer.backward(g, input_grad=False)
            g = layer.backward(g)
        return g

    def pattern(self):
        return [p for layer in self.layers if (p := layer.pattern()) is not None]

    def specs(self):
        return [layer.spec() for layer in self.layers]


# ---------------------------------------------------------------------------
# optimizer


@numba.njit(cache=True, error_model="numpy")  # no zero-division branch; lets the loop vectorize
def _adam_kernel(p, g, m, v, lr, beta1, beta2, eps, corr1, corr2):
    step = lr / corr1
    inv_corr2 = 1.0 / corr2
    for i in range(p.size):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (math.sqrt(vi * inv_corr2) + eps)


@dataclass
class OptimizerState:
    """First/second moment accumulators for one parameter array."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def like(cls, params, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(np.zeros(params.size), np.zeros(params.size), 0, lr, beta1, beta2, epsilon)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if params.shape != grads.shape or params.size != state.m.size:
        raise InvalidShapeError("parameter, gradient and state sizes differ")
    if not (params.flags.c_contiguous and grads.flags.c_contiguous):
        raise InvalidShapeError("adam_step needs contiguous arrays")
    state.step += 1
    corr1 = 1.0 - state.beta1 ** state.step
    corr2 = 1.0 - state.beta2 ** state.step
    _adam_kernel(params.reshape(-1), grads.reshape(-1), state.m, state.v,
                 state.lr, state.beta1, state.beta2, state.epsilon, corr1, corr2)
    return params, state


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    blocks: list = field(default_factory=list)  # (name, max_rel_error, n_checked, n_skipped)
    tolerance: float = 1e-4

    @property
    def max_error(self):
        return max((b[1] for b in self.blocks), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.tolerance

    def __str__(self):
        lines = [f"{name:28s} rel_err={err:.3e} checked={n} skipped={s}" for name, err, n, s in self.blocks]
        return "\n".join(lines)


def relative_error(analytic, numeric):
    """Block-scaled relative error: ``max|a - n| / max(max|a|, max|n|)``."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def _same_pattern(pa, pb):
    return all(np.array_equal(a, b) for a, b in zip(pa, pb))


def grad_check(network, x, tolerance=1e-4, h=1e-5, max_coords=None, seed=0, check_input=True):
    """Compare analytic gradients of ``network`` against central differences.

    The scalar objective is ``sum(network.forward(x) * R)`` for a fixed random
    ``R``.  For each parameter block (and the input when ``check_input``) up to
    ``max_coords`` coordinates are probed; a coordinate whose ``+h``/``-h``
    perturbation flips a ReLU mask or a pooling argmax is skipped, because the
    objective is not differentiable across that stencil.
    """
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    y = network.forward(x)
    r = rng.standard_normal(y.shape)
    base_pattern = [p.copy() for p in network.pattern()]
    dx = network.backward(r)
    analytic = {name: g.copy() for name, _, g in network.param_blocks()}

    def objective():
        out = network.forward(x)
        return float(np.sum(out * r)), network.pattern()

    report = GradCheckReport(tolerance=tolerance)
    targets = [(name, p) for name, p, _ in network.param_blocks()]
    if check_input:
        targets.append(("input", x))
        analytic["input"] = dx
    for name, arr in targets:
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a_vals, n_vals, skipped = [], [], 0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            fp, pat_p = objective()
            flat[c] = orig - h
            fm, pat_m = objective()
            flat[c] = orig
            if not (_same_pattern(pat_p, base_pattern) and _same_pattern(pat_m, base_pattern)):
                skipped += 1
                continue
            n_vals.append((fp - fm) / (2 * h))
            a_vals.append(analytic[name].reshape(-1)[c])
        err = relative_error(a_vals, n_vals) if a_vals else 0.0
        report.blocks.append((name, err, len(a_vals), skipped))
    network.forward(x)
    return report
