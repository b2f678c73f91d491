"""Differentiable operations on :class:`~mapnav.numerics.tensor.Tensor`.

Every op returns a new tensor and registers a backward closure that
accumulates gradients into its inputs. Shapes follow numpy broadcasting for
elementwise ops; structured ops (matmul, conv2d, ...) validate shapes
explicitly and raise :class:`ShapeError` / :class:`ConfigError`.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, NumericError, ShapeError, UsageError
from .tensor import Tensor, accumulate, make_op, unbroadcast

_EPS = 1e-12


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def factory(out):
        def bw():
            accumulate(a, unbroadcast(out.grad, a.shape))
            accumulate(b, unbroadcast(out.grad, b.shape))

        return bw

    return make_op(data, (a, b), factory)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def factory(out):
        def bw():
            accumulate(a, unbroadcast(out.grad, a.shape))
            accumulate(b, unbroadcast(-out.grad, b.shape))

        return bw

    return make_op(data, (a, b), factory)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def factory(out):
        def bw():
            accumulate(a, unbroadcast(out.grad * b.data, a.shape))
            accumulate(b, unbroadcast(out.grad * a.data, b.shape))

        return bw

    return make_op(data, (a, b), factory)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def factory(out):
        def bw():
            accumulate(a, out.grad * c)

        return bw

    return make_op(data, (a,), factory)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def factory(out):
        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            accumulate(a, np.broadcast_to(g, a.shape).copy())

        return bw

    return make_op(data, (a,), factory)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    elif isinstance(axis, int):
        count = a.shape[axis]
    else:
        count = int(np.prod([a.shape[ax] for ax in axis]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def factory(out):
        def bw():
            accumulate(a, out.grad.reshape(a.shape))

        return bw

    return make_op(data, (a,), factory)


def transpose(a: Tensor, axes=None) -> Tensor:
    data = a.data.transpose(axes)
    inv = None if axes is None else np.argsort(axes)

    def factory(out):
        def bw():
            accumulate(a, out.grad.transpose(inv))

        return bw

    return make_op(data, (a,), factory)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def factory(out):
        def bw():
            offset = 0
            for t, s in zip(tensors, sizes):
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(offset, offset + s)
                accumulate(t, out.grad[tuple(sl)])
                offset += s

        return bw

    return make_op(data, tuple(tensors), factory)


def take(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Select one slice along an axis (removing that axis)."""
    data = np.take(a.data, index, axis=axis)

    def factory(out):
        def bw():
            g = np.zeros_like(a.data)
            sl = [slice(None)] * a.ndim
            sl[axis] = index
            g[tuple(sl)] = out.grad
            accumulate(a, g)

        return bw

    return make_op(data, (a,), factory)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.stack([t.data for t in tensors], axis=axis)

    def factory(out):
        def bw():
            for i, t in enumerate(tensors):
                accumulate(t, np.take(out.grad, i, axis=axis))

        return bw

    return make_op(data, tuple(tensors), factory)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def factory(out):
        def bw():
            accumulate(a, out.grad @ b.data.T)
            accumulate(b, a.data.T @ out.grad)

        return bw

    return make_op(data, (a, b), factory)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``b`` broadcast over rows."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = a.data * mask

    def factory(out):
        def bw():
            accumulate(a, out.grad * mask)

        return bw

    return make_op(data, (a,), factory)


def leaky_relu(a: Tensor, alpha: float = 0.01) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, alpha * a.data)

    def factory(out):
        def bw():
            accumulate(a, out.grad * np.where(mask, 1.0, alpha))

        return bw

    return make_op(data, (a,), factory)


def sigmoid(a: Tensor) -> Tensor:
    s = np.empty_like(a.data)
    pos = a.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    s[~pos] = ez / (1.0 + ez)

    def factory(out):
        def bw():
            accumulate(a, out.grad * s * (1.0 - s))

        return bw

    return make_op(s, (a,), factory)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if np.isnan(a.data).any():
        raise NumericError("softmax: NaN in input")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def factory(out):
        def bw():
            g = out.grad
            dot = (g * y).sum(axis=axis, keepdims=True)
            accumulate(a, y * (g - dot))

        return bw

    return make_op(y, (a,), factory)


def softmax_rows(logits: Tensor) -> Tensor:
    """Row-wise softmax of a 2D matrix (max-subtracted for stability)."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_rows expects 2D input, got {logits.shape}")
    return softmax(logits, axis=1)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = gain.data * xhat + bias.data

    def factory(out):
        def bw():
            g = out.grad
            gxh = g * gain.data
            accumulate(
                x,
                inv
                * (
                    gxh
                    - gxh.mean(axis=-1, keepdims=True)
                    - xhat * (gxh * xhat).mean(axis=-1, keepdims=True)
                ),
            )
            lead = tuple(range(x.ndim - 1))
            accumulate(gain, (g * xhat).sum(axis=lead))
            accumulate(bias, g.sum(axis=lead))

        return bw

    return make_op(data, (x, gain, bias), factory)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise UsageError(
            f"embedding_lookup: token id out of range [0, {table.shape[0]})"
        )
    data = table.data[ids]

    def factory(out):
        def bw():
            g = np.zeros_like(table.data)
            np.add.at(g, ids, out.grad)
            accumulate(table, g)

        return bw

    return make_op(data, (table,), factory)


# ---------------------------------------------------------------------------
# convolution and resampling


def _promote_nchw(x: Tensor):
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (C,H,W) or (B,C,H,W), got {x.shape}")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation convolution; input (C,H,W) or (B,C,H,W)."""
    x4, squeeze = _promote_nchw(x)
    if w.ndim != 4:
        raise ShapeError(f"conv2d: kernels must be 4D, got {w.shape}")
    co, ci, kh, kw = w.shape
    bsz, cin, h, ww = x4.shape
    if ci != cin:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {ci}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"conv2d: kernel dims must be odd, got {kh}x{kw}")
    if (h + 2 * padding - kh) % stride != 0 or (ww + 2 * padding - kw) % stride != 0:
        raise ConfigError(
            f"conv2d: non-integral output size for input {h}x{ww}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (ww + 2 * padding - kw) // stride + 1

    xp = np.pad(x4.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (B,C,ho,wo,kh,kw)
    cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(
        bsz, ci * kh * kw, ho * wo
    )
    w2 = w.data.reshape(co, ci * kh * kw)
    out_data = np.matmul(w2, cols).reshape(bsz, co, ho, wo)
    if b is not None:
        out_data = out_data + b.data.reshape(1, co, 1, 1)

    parents = (x, w) if b is None else (x, w, b)

    def factory(out):
        def bw():
            g = out.grad.reshape(bsz, co, ho * wo)
            accumulate(w, np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape))
            if b is not None:
                accumulate(b, out.grad.sum(axis=(0, 2, 3)))
            gcols = np.matmul(w2.T, g).reshape(bsz, ci, kh, kw, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                        :, :, i, j
                    ]
            gx = gxp[:, :, padding : padding + h, padding : padding + ww]
            accumulate(x, gx.reshape(x.shape))

        return bw

    out = make_op(out_data, parents, factory)
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


def upsample_nearest2(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x spatial upsample of (...,H,W)."""
    data = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)

    def factory(out):
        def bw():
            g = out.grad
            h2, w2 = g.shape[-2], g.shape[-1]
            g = g.reshape(g.shape[:-2] + (h2 // 2, 2, w2 // 2, 2)).sum(axis=(-3, -1))
            accumulate(x, g)

        return bw

    return make_op(data, (x,), factory)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: int = 1) -> Tensor:
    """Upsampling decoder step: nearest 2x upsample followed by conv2d."""
    return conv2d(upsample_nearest2(x), w, b, stride=1, padding=padding)


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    if factor == 1:
        return x
    h, w = x.shape[-2], x.shape[-1]
    if h % factor or w % factor:
        raise ConfigError(f"avg_pool2d: {h}x{w} not divisible by {factor}")
    shp = x.shape[:-2] + (h // factor, factor, w // factor, factor)
    data = x.data.reshape(shp).mean(axis=(-3, -1))

    def factory(out):
        def bw():
            g = out.grad / (factor * factor)
            g = np.repeat(np.repeat(g, factor, axis=-2), factor, axis=-1)
            accumulate(x, g)

        return bw

    return make_op(data, (x,), factory)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resampling of the last two axes (align-corners convention)."""
    h, w = x.shape[-2], x.shape[-1]

    def grid(n_in, n_out):
        if n_out == 1:
            src = np.zeros(1)
        else:
            src = np.linspace(0.0, n_in - 1.0, n_out)
        i0 = np.floor(src).astype(np.int64)
        i0 = np.clip(i0, 0, n_in - 2) if n_in > 1 else i0
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = src - i0
        return i0, i1, frac

    r0, r1, fr = grid(h, out_h)
    c0, c1, fc = grid(w, out_w)
    fr = fr.reshape(-1, 1)
    fc = fc.reshape(1, -1)
    w00 = (1 - fr) * (1 - fc)
    w01 = (1 - fr) * fc
    w10 = fr * (1 - fc)
    w11 = fr * fc

    d = x.data
    data = (
        d[..., r0[:, None], c0[None, :]] * w00
        + d[..., r0[:, None], c1[None, :]] * w01
        + d[..., r1[:, None], c0[None, :]] * w10
        + d[..., r1[:, None], c1[None, :]] * w11
    )

    def factory(out):
        def bw():
            g = out.grad
            # fresh C-order buffer: reshape below must be a view (writes via
            # np.add.at would otherwise land in a silent copy when x.data is
            # non-contiguous, e.g. a stack of transposed views)
            gx = np.zeros(x.shape)
            flat = gx.reshape(-1, h, w)
            gflat = np.ascontiguousarray(g).reshape(-1, out_h, out_w)
            for k in range(flat.shape[0]):
                np.add.at(flat[k], (r0[:, None], c0[None, :]), gflat[k] * w00)
                np.add.at(flat[k], (r0[:, None], c1[None, :]), gflat[k] * w01)
                np.add.at(flat[k], (r1[:, None], c0[None, :]), gflat[k] * w10)
                np.add.at(flat[k], (r1[:, None], c1[None, :]), gflat[k] * w11)
            accumulate(x, gx)

        return bw

    return make_op(data, (x,), factory)


# ---------------------------------------------------------------------------
# losses


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    from .tensor import check_same_shape

    check_same_shape(pred, target, "mse_loss")
    diff = pred.data - target.data
    data = np.array((diff * diff).mean())

    def factory(out):
        def bw():
            accumulate(pred, out.grad * 2.0 * diff / diff.size)
            accumulate(target, out.grad * -2.0 * diff / diff.size)

        return bw

    return make_op(data, (pred, target), factory)


def binary_cross_entropy(pred: Tensor, target, positive_only: bool = False) -> Tensor:
    """Mean BCE of probabilities against {0,1} targets (targets constant).

    ``positive_only`` drops the negative-class term, i.e. mean(-t*log(p)).
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"binary_cross_entropy: shapes {pred.shape} vs {t.shape}")
    p = np.clip(pred.data, _EPS, 1.0 - _EPS)
    if positive_only:
        data = np.array((-t * np.log(p)).mean())
    else:
        data = np.array((-(t * np.log(p) + (1 - t) * np.log(1 - p))).mean())

    def factory(out):
        def bw():
            if positive_only:
                g = -t / p
            else:
                g = (p - t) / (p * (1 - p))
            accumulate(pred, out.grad * g / p.size)

        return bw

    return make_op(data, (pred,), factory)


def pixelwise_cross_entropy(pred: Tensor, target) -> Tensor:
    """Mean over pixels of -sum_c q*log(q_hat); channel axis is -3.

    ``pred`` holds per-cell probability simplices, ``target`` one-hot labels.
    """
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"pixelwise_cross_entropy: shapes {pred.shape} vs {t.shape}")
    if pred.ndim < 3:
        raise ShapeError("pixelwise_cross_entropy expects (...,C,H,W)")
    n_pix = pred.size // pred.shape[-3]
    p = np.clip(pred.data, _EPS, None)
    data = np.array(-(t * np.log(p)).sum() / n_pix)

    def factory(out):
        def bw():
            accumulate(pred, out.grad * (-t / p) / n_pix)

        return bw

    return make_op(data, (pred,), factory)


# ---------------------------------------------------------------------------
# initialization


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def ones_param(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)
