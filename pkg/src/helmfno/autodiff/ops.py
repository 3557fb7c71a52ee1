"""Differentiable operations needed by the three surrogate networks.

Layouts: images are ``[batch, channel, z, x]``; FFTs act on the last two
axes; complex weights are real arrays whose last axis holds (re, im).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .tensor import Tensor, as_tensor, make_node

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _real_like(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return g if np.iscomplexobj(ref) else g.real


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def back(g):
        return (_real_like(_unbroadcast(g, sa), a.data),
                _real_like(_unbroadcast(g, sb), b.data))

    return make_node(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def back(g):
        return (_real_like(_unbroadcast(g, sa), a.data),
                _real_like(_unbroadcast(-g, sb), b.data))

    return make_node(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def back(g):
        ga = _unbroadcast(g * np.conj(b.data), sa)
        gb = _unbroadcast(g * np.conj(a.data), sb)
        return _real_like(ga, a.data), _real_like(gb, b.data)

    return make_node(a.data * b.data, (a, b), back)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = a.data.dtype.type(c) if np.isrealobj(a.data) else c
    return make_node(a.data * c, (a,), lambda g: (g * np.conj(c),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    s = a.data.dtype.type(slope)
    out = np.where(pos, a.data, a.data * s)
    return make_node(out, (a,), lambda g: (np.where(pos, g, g * s),))


def gelu(a) -> Tensor:
    """Exact (erf) GELU."""
    a = as_tensor(a)
    x = a.data
    dt = x.dtype.type if x.dtype.kind == "f" else np.float64
    # numpy scalars of the input's precision avoid silent float64 promotion
    cdf = dt(0.5) * (dt(1.0) + erf(x / dt(_SQRT2)))
    out = (x * cdf).astype(x.dtype, copy=False)

    def back(g):
        pdf = dt(_INV_SQRT2PI) * np.exp(dt(-0.5) * x * x)
        return ((g * (cdf + x * pdf)).astype(x.dtype, copy=False),)

    return make_node(out, (a,), back)


def identity(a) -> Tensor:
    return as_tensor(a)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    shape = a.shape

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(np.asarray(a.data.sum(axis=axis)), (a,), back)


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    shape = a.shape
    return make_node(np.asarray(a.data.mean()), (a,),
                     lambda g: (np.full(shape, g / n, dtype=a.data.dtype),))


def index(a, idx) -> Tensor:
    a = as_tensor(a)

    def back(g):
        out = np.zeros_like(a.data)
        out[idx] += g
        return (out,)

    return make_node(a.data[idx], (a,), back)


def real(a) -> Tensor:
    a = as_tensor(a)
    return make_node(a.data.real.copy(), (a,), lambda g: (g.astype(a.data.dtype),))


def imag(a) -> Tensor:
    a = as_tensor(a)
    return make_node(a.data.imag.copy(), (a,), lambda g: (1j * g,))


# -- linear maps -----------------------------------------------------------

def channel_mix(h, W, bias=None) -> Tensor:
    """Pointwise linear map over the channel axis (axis 1): a 1x1 convolution.

    ``W`` is ``[width_in, width_out]``; ``bias`` is ``[width_out]``.
    """
    h, W = as_tensor(h), as_tensor(W)
    if h.shape[1] != W.shape[0]:
        raise ValueError(f"channel_mix: input has {h.shape[1]} channels, W expects {W.shape[0]}")
    B, spatial = h.shape[0], h.shape[2:]
    x = h.data.reshape(B, h.shape[1], -1)
    y = np.matmul(W.data.T, x)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data[None, :, None]
    out = y.reshape((B, W.shape[1]) + spatial)

    def back(g):
        g2 = g.reshape(B, W.shape[1], -1)
        gh = np.matmul(W.data, g2).reshape(h.shape)
        gW = np.einsum("bip,bop->io", x, g2, optimize=True)
        gb = g2.sum(axis=(0, 2)) if bias is not None else None
        return (gh, gW, gb) if bias is not None else (gh, gW)

    parents = (h, W, bias) if bias is not None else (h, W)
    return make_node(out, parents, back)


def conv_out_size(n: int, k: int, stride: int, padding: int) -> int:
    size = (n + 2 * padding - k) // stride + 1
    if size <= 0:
        raise ValueError(f"conv2d: input {n} with k={k}, stride={stride}, pad={padding} is empty")
    return size


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, ``w`` is ``[c_out, c_in, k, k]``."""
    x, w = as_tensor(x), as_tensor(w)
    B, C, H, W_ = x.shape
    O, Ci, k, k2 = w.shape
    if Ci != C or k != k2:
        raise ValueError(f"conv2d: weight {w.shape} incompatible with input {x.shape}")
    Ho = conv_out_size(H, k, stride, padding)
    Wo = conv_out_size(W_, k, stride, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * k * k, Ho * Wo)
    wm = w.data.reshape(O, C * k * k)
    y = np.matmul(wm, cols)
    if b is not None:
        b = as_tensor(b)
        y = y + b.data[None, :, None]
    out = y.reshape(B, O, Ho, Wo)

    def back(g):
        g2 = g.reshape(B, O, Ho * Wo)
        gw = np.einsum("bop,bqp->oq", g2, cols, optimize=True).reshape(w.shape)
        gcols = np.matmul(wm.T, g2).reshape(B, C, k, k, Ho, Wo)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, padding:padding + H, padding:padding + W_]
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, w, b) if b is not None else (x, w)
    return make_node(out, parents, back)


class BatchNormState:
    """Running statistics of one batch-norm layer (not trainable)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm2d(x, gamma, beta, state: BatchNormState, training: bool = True) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0, 2, 3)
    shp = (1, -1, 1, 1)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        n = x.data.size // x.shape[1]
        m = state.momentum
        state.mean = ((1 - m) * state.mean + m * mu).astype(state.mean.dtype)
        unbiased = var * n / max(n - 1, 1)
        state.var = ((1 - m) * state.var + m * unbiased).astype(state.var.dtype)
    else:
        mu, var = state.mean, state.var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mu.reshape(shp)) * inv.reshape(shp)
    out = (gamma.data.reshape(shp) * xhat + beta.data.reshape(shp)).astype(x.data.dtype, copy=False)

    def back(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shp)
        if training:
            n = x.data.size // x.shape[1]
            gx = (inv.reshape(shp) / n) * (
                n * dxhat - dxhat.sum(axis=axes).reshape(shp)
                - xhat * (dxhat * xhat).sum(axis=axes).reshape(shp))
        else:
            gx = dxhat * inv.reshape(shp)
        return gx.astype(x.data.dtype, copy=False), gg, gb

    return make_node(out, (x, gamma, beta), back)


def upsample_nearest(x, scale: int) -> Tensor:
    x = as_tensor(x)
    s = int(scale)
    out = x.data.repeat(s, axis=2).repeat(s, axis=3)
    B, C, H, W = x.shape

    def back(g):
        return (g.reshape(B, C, H, s, W, s).sum(axis=(3, 5)),)

    return make_node(out, (x,), back)


def crop_center(x, out_h: int, out_w: int) -> Tensor:
    x = as_tensor(x)
    H, W = x.shape[-2:]
    if out_h > H or out_w > W:
        raise ValueError(f"crop {out_h}x{out_w} larger than input {H}x{W}")
    top = (H - out_h) // 2
    left = (W - out_w) // 2
    return index(x, (..., slice(top, top + out_h), slice(left, left + out_w)))


# -- spectral --------------------------------------------------------------

def rfft2(x) -> Tensor:
    """Real-to-complex 2-D FFT over the last two axes (unnormalized)."""
    x = as_tensor(x)
    H, W = x.shape[-2:]
    out = np.fft.rfft2(x.data)

    def back(g):
        # adjoint of the half-spectrum transform
        return (np.fft.ifft2(g, s=(H, W)).real * (H * W),)

    return make_node(out, (x,), back)


def irfft2(X, shape: tuple[int, int]) -> Tensor:
    """Inverse of ``rfft2`` for a real field of spatial ``shape``."""
    X = as_tensor(X)
    H, W = shape
    out = np.fft.irfft2(X.data, s=(H, W))
    Wr = X.shape[-1]
    weight = np.full(Wr, 2.0)
    weight[0] = 1.0
    if W % 2 == 0:
        weight[-1] = 1.0

    def back(g):
        return (np.fft.rfft2(g) * (weight / (H * W)).astype(g.dtype),)

    return make_node(out, (X,), back)


def _retained_rows(H: int, m1: int) -> np.ndarray:
    return np.concatenate([np.arange(m1), np.arange(H - m1, H)])


_DFT_CACHE: dict = {}


def _dft_mats(H: int, W: int, m1: int, m2: int, dtype):
    """Partial DFT matrices for the retained modes (forward and inverse)."""
    key = (H, W, m1, m2, np.dtype(dtype).str)
    mats = _DFT_CACHE.get(key)
    if mats is None:
        kz = _retained_rows(H, m1)
        kx = np.arange(m2)
        Fz = np.exp(-2j * np.pi * np.outer(kz, np.arange(H)) / H)  # [2m1, H]
        Fx = np.exp(-2j * np.pi * np.outer(np.arange(W), kx) / W)  # [W, m2]
        c = np.full(m2, 2.0)
        c[0] = 1.0
        if W % 2 == 0 and m2 == W // 2 + 1:
            c[-1] = 1.0
        Gz = np.conj(Fz).T / H  # [H, 2m1]
        Gx = (c[:, None] * np.conj(Fx).T) / W  # [m2, W]
        mats = tuple(a.astype(dtype) for a in (Fz, Fx, Gz, Gx))
        _DFT_CACHE[key] = mats
    return mats


def _cdtype(x: np.ndarray):
    return np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128


def dft_modes(x, m1: int, m2: int) -> Tensor:
    """Retained-mode spectrum of a real field, ``[..., 2*m1, m2]``.

    Rows hold the ``m1`` lowest non-negative then the ``m1`` most negative
    z-wavenumbers; equals the matching rows/columns of ``rfft2``.
    """
    x = as_tensor(x)
    H, W = x.shape[-2:]
    if m1 > (H + 1) // 2 or m2 > W // 2 + 1:
        raise ValueError(f"{m1}x{m2} modes exceed a {H}x{W} field")
    Fz, Fx, _, _ = _dft_mats(H, W, m1, m2, _cdtype(x.data))
    out = Fz @ (x.data @ Fx)

    def back(g):
        return ((np.conj(Fz).T @ g @ np.conj(Fx).T).real.astype(x.data.dtype, copy=False),)

    return make_node(out, (x,), back)


def idft_modes(X, shape: tuple[int, int]) -> Tensor:
    """Real field whose ``rfft2`` is ``X`` on the retained modes and 0 elsewhere."""
    X = as_tensor(X)
    H, W = shape
    m1, m2 = X.shape[-2] // 2, X.shape[-1]
    _, _, Gz, Gx = _dft_mats(H, W, m1, m2, X.data.dtype)
    out = (Gz @ X.data @ Gx).real

    def back(g):
        return (np.conj(Gz).T @ g.astype(X.data.dtype) @ np.conj(Gx).T,)

    return make_node(out, (X,), back)


def complex_weight(p: np.ndarray) -> np.ndarray:
    return p[..., 0] + 1j * p[..., 1]


def mode_multiply(X, R_pos, R_neg=None) -> Tensor:
    """Contract the lowest spectral modes with complex channel weights.

    ``X`` is ``[B, C_in, H, W//2+1]`` complex. ``R_pos`` / ``R_neg`` are real
    ``[m_z, m_x, C_in, C_out, 2]`` weights for the non-negative and negative
    rows of the full (z) axis; every other mode of the output is zero.
    """
    X, R_pos = as_tensor(X), as_tensor(R_pos)
    R_neg = None if R_neg is None else as_tensor(R_neg)
    B, Ci, H, Wr = X.shape
    blocks = [(R_pos, slice(0, R_pos.shape[0]))]
    if R_neg is not None:
        blocks.append((R_neg, slice(H - R_neg.shape[0], H)))
    m1, m2, ci, co, two = R_pos.shape
    if ci != Ci or two != 2:
        raise ValueError(f"mode weights {R_pos.shape} incompatible with spectrum {X.shape}")
    if m1 > (H + 1) // 2 or m2 > Wr:
        raise ValueError(f"{m1}x{m2} modes exceed spectrum extent {H}x{Wr}")
    out = np.zeros((B, co, H, Wr), dtype=X.data.dtype)
    saved = []
    for R, rows in blocks:
        Xb = X.data[:, :, rows, :m2]  # [B, Ci, m1, m2]
        Xt = Xb.transpose(2, 3, 0, 1).reshape(m1 * m2, B, Ci)
        Wc = complex_weight(R.data).astype(X.data.dtype).reshape(m1 * m2, Ci, co)
        Yt = np.matmul(Xt, Wc)  # [m, B, Co]
        out[:, :, rows, :m2] += Yt.reshape(m1, m2, B, co).transpose(2, 3, 0, 1)
        saved.append((Xt, Wc, rows))

    def back(g):
        gX = np.zeros_like(X.data)
        gR = []
        for Xt, Wc, rows in saved:
            gt = g[:, :, rows, :m2].transpose(2, 3, 0, 1).reshape(m1 * m2, B, co)
            gX[:, :, rows, :m2] += np.matmul(gt, np.conj(Wc).transpose(0, 2, 1)) \
                .reshape(m1, m2, B, Ci).transpose(2, 3, 0, 1)
            gW = np.matmul(np.conj(Xt).transpose(0, 2, 1), gt).reshape(m1, m2, Ci, co)
            gR.append(np.stack([gW.real, gW.imag], axis=-1))
        return (gX, *gR)

    parents = (X,) + tuple(R for R, _ in blocks)
    return make_node(out, parents, back)


# -- losses ----------------------------------------------------------------

def mse(pred, label) -> Tensor:
    pred, label = as_tensor(pred), as_tensor(label)
    if pred.shape != label.shape:
        raise ValueError(f"mse: shape mismatch {pred.shape} vs {label.shape}")
    d = pred.data - label.data
    n = d.size

    def back(g):
        gd = (2.0 / n) * g * d
        return gd, -gd

    return make_node(np.asarray(np.mean(d * d)), (pred, label), back)


def l2norm(diff) -> Tensor:
    """Per-sample Euclidean norm (over all non-batch axes) averaged over the batch."""
    diff = as_tensor(diff)
    B = diff.shape[0]
    flat = diff.data.reshape(B, -1)
    norms = np.sqrt(np.sum(flat * flat, axis=1))

    def back(g):
        safe = np.where(norms > 0, norms, 1.0)
        gd = (g / B) * flat / safe[:, None]
        gd[norms == 0] = 0
        return (gd.reshape(diff.shape).astype(diff.data.dtype, copy=False),)

    return make_node(np.asarray(norms.mean()), (diff,), back)
