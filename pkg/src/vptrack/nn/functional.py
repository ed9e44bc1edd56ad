"""Spatial ops for the autodiff engine: convolution, pooling, normalization.

conv2d lowers to a stride-trick im2col plus one BLAS matmul; depthwise runs
through einsum with no per-group Python loop. conv_transpose2d is composed as
zero-insertion dilation followed by a flipped-weight conv2d, so its gradient
falls out of the existing ops instead of needing hand-written adjoints.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, make_op, _accumulate


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _windows(x: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # (N, C, OH, OW, KH, KW) view, no copy
    return sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]


def _conv2d_data(x: np.ndarray, w: np.ndarray, stride, padding, groups: int) -> np.ndarray:
    """Cross-correlation on plain arrays; the backward pass reuses this."""
    N, C, H, W = x.shape
    O, Cg, KH, KW = w.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    OH = (H + 2 * ph - KH) // sh + 1
    OW = (W + 2 * pw - KW) // sw + 1
    win = _windows(x, KH, KW, sh, sw)
    if groups == 1:
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * OH * OW, C * KH * KW)
        out = cols @ w.reshape(O, -1).T
        return np.ascontiguousarray(out.reshape(N, OH, OW, O).transpose(0, 3, 1, 2))
    if groups == C and O == C and Cg == 1:
        return np.einsum("nchwkl,ckl->nchw", win, w[:, 0], optimize=True)
    # general grouped conv: fall back to per-group matmul
    Og = O // groups
    Cin_g = C // groups
    out = np.empty((N, O, OH, OW), dtype=x.dtype)
    for g in range(groups):
        out[:, g * Og:(g + 1) * Og] = _conv2d_data(
            x[:, g * Cin_g:(g + 1) * Cin_g], w[g * Og:(g + 1) * Og], (sh, sw), 0, 1
        )
    return out


def _dilate_data(x: np.ndarray, sh: int, sw: int) -> np.ndarray:
    if sh == 1 and sw == 1:
        return x
    N, C, H, W = x.shape
    out = np.zeros((N, C, (H - 1) * sh + 1, (W - 1) * sw + 1), dtype=x.dtype)
    out[:, :, ::sh, ::sw] = x
    return out


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
           stride=1, padding=0, groups: int = 1) -> Tensor:
    """2D cross-correlation. x: (N,C,H,W), w: (O,C/groups,KH,KW)."""
    N, C, H, W = x.data.shape
    O, Cg, KH, KW = w.data.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if Cg * groups != C:
        raise ValueError(f"channel/group mismatch: C={C}, groups={groups}, w expects {Cg * groups}")
    if H + 2 * ph < KH or W + 2 * pw < KW:
        raise ValueError(f"input {H}x{W} too small for kernel {KH}x{KW} at padding {ph},{pw}")
    data = _conv2d_data(x.data, w.data, (sh, sw), (ph, pw), groups)
    if bias is not None:
        data = data + bias.data.reshape(1, O, 1, 1)

    depthwise = groups == C and O == C and Cg == 1

    def backward(g):
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        # weight gradient: correlate input windows with the output gradient
        if x.requires_grad or w.requires_grad:
            xp = x.data
            if ph or pw:
                xp = np.pad(xp, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        if w.requires_grad:
            win = _windows(xp, KH, KW, sh, sw)
            OH, OW = g.shape[2], g.shape[3]
            if groups == 1:
                cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(N * OH * OW, C * KH * KW)
                gflat = g.transpose(0, 2, 3, 1).reshape(N * OH * OW, O)
                _accumulate(w, (gflat.T @ cols).reshape(w.data.shape))
            elif depthwise:
                _accumulate(w, np.einsum("nchwkl,nchw->ckl", win, g, optimize=True)[:, None])
            else:
                Og, Cin_g = O // groups, C // groups
                gw = np.empty_like(w.data)
                for gi in range(groups):
                    wing = _windows(xp[:, gi * Cin_g:(gi + 1) * Cin_g], KH, KW, sh, sw)
                    gg = g[:, gi * Og:(gi + 1) * Og]
                    gw[gi * Og:(gi + 1) * Og] = np.einsum(
                        "nchwkl,nohw->ockl", wing, gg, optimize=True)
                _accumulate(w, gw)
        if x.requires_grad:
            # input gradient: dilate the output gradient and convolve with the
            # flipped, channel-swapped kernel at full (K-1) padding. That
            # yields the gradient of the stride-covered span of the padded
            # input; extend with zeros to the padded extent, then crop the
            # padding off. Handles strides that leave trailing pixels uncovered.
            gd = _dilate_data(g, sh, sw)
            if depthwise:
                wt = w.data[:, :, ::-1, ::-1]
                gxt = _conv2d_data(gd, wt, 1, (KH - 1, KW - 1), groups)
            elif groups == 1:
                wt = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
                gxt = _conv2d_data(gd, wt, 1, (KH - 1, KW - 1), 1)
            else:
                Og, Cin_g = O // groups, C // groups
                parts = []
                for gi in range(groups):
                    wt = np.ascontiguousarray(
                        w.data[gi * Og:(gi + 1) * Og].transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
                    parts.append(_conv2d_data(gd[:, gi * Og:(gi + 1) * Og], wt,
                                              1, (KH - 1, KW - 1), 1))
                gxt = np.concatenate(parts, axis=1)
            eh = ph + H - gxt.shape[2]
            ew = pw + W - gxt.shape[3]
            if eh > 0 or ew > 0:
                gxt = np.pad(gxt, ((0, 0), (0, 0), (0, max(eh, 0)), (0, max(ew, 0))))
            _accumulate(x, np.ascontiguousarray(gxt[:, :, ph:ph + H, pw:pw + W]))

    return make_op(data, (x, w) + (() if bias is None else (bias,)), backward)


def dilate2d(x: Tensor, stride) -> Tensor:
    """Insert stride-1 zeros between pixels (transpose-conv building block)."""
    sh, sw = _pair(stride)
    data = _dilate_data(x.data, sh, sw)

    def backward(g):
        _accumulate(x, np.ascontiguousarray(g[:, :, ::sh, ::sw]))

    return make_op(data, (x,), backward)


def flip_swap(w: Tensor) -> Tensor:
    """(Cin,Cout,K,K) transpose-conv weight -> flipped (Cout,Cin,K,K) conv weight."""
    data = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])

    def backward(g):
        _accumulate(w, np.ascontiguousarray(g.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]))

    return make_op(data, (w,), backward)


def conv_transpose2d(x: Tensor, w: Tensor, bias: Tensor | None = None,
                     stride=2, padding=1) -> Tensor:
    """Transposed conv; w: (Cin, Cout, KH, KW). Output (H-1)*s + K - 2p."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    KH, KW = w.data.shape[2], w.data.shape[3]
    if KH - 1 - ph < 0 or KW - 1 - pw < 0:
        raise ValueError("padding may not exceed kernel-1")
    xd = dilate2d(x, (sh, sw))
    return conv2d(xd, flip_swap(w), bias, stride=1, padding=(KH - 1 - ph, KW - 1 - pw))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5,
               update_stats: bool = True) -> Tensor:
    """Per-channel batch norm over (N,H,W). Running stats use the biased
    batch variance and are updated in place when training."""
    C = x.data.shape[1]
    gshape = (1, C, 1, 1)
    axes = (0, 2, 3)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            running_mean[:] = (1.0 - momentum) * running_mean + momentum * mu
            running_var[:] = (1.0 - momentum) * running_var + momentum * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(gshape)) * inv_std.reshape(gshape)
    data = gamma.data.reshape(gshape) * xhat + beta.data.reshape(gshape)

    def backward(g):
        _accumulate(beta, g.sum(axis=axes))
        _accumulate(gamma, (g * xhat).sum(axis=axes))
        if not x.requires_grad:
            return
        gs = gamma.data.reshape(gshape) * inv_std.reshape(gshape)
        if training:
            m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
            g_mean = g.mean(axis=axes).reshape(gshape)
            gx_mean = (g * xhat).sum(axis=axes).reshape(gshape) / m
            _accumulate(x, gs * (g - g_mean - xhat * gx_mean))
        else:
            _accumulate(x, gs * g)

    return make_op(data, (x, gamma, beta), backward)


def max_pool2d(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Max pooling. stride=1 keeps the spatial size by -inf padding on the
    trailing edge (the 13x13 detector pool); stride=kernel halves it."""
    N, C, H, W = x.data.shape
    if stride == 1:
        pad = kernel - 1
        xp = np.pad(x.data, ((0, 0), (0, 0), (0, pad), (0, pad)),
                    constant_values=-np.inf)
        OH, OW = H, W
    else:
        if H % stride or W % stride:
            raise ValueError(f"pool stride {stride} does not divide input {H}x{W}")
        xp = x.data
        OH, OW = (H - kernel) // stride + 1, (W - kernel) // stride + 1
    win = _windows(xp, kernel, kernel, stride, stride)
    flat = win.reshape(N, C, OH, OW, kernel * kernel)
    idx = flat.argmax(axis=-1)
    data = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros((N, C, xp.shape[2], xp.shape[3]), dtype=g.dtype)
        n, c, oh, ow = np.indices(idx.shape, sparse=True)
        np.add.at(gx, (n, c, oh * stride + idx // kernel, ow * stride + idx % kernel), g)
        _accumulate(x, gx[:, :, :H, :W])

    return make_op(data, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    N, C, H, W = x.data.shape
    data = x.data.mean(axis=(2, 3), keepdims=True)

    def backward(g):
        _accumulate(x, np.broadcast_to(g / (H * W), x.data.shape).astype(g.dtype))

    return make_op(data, (x,), backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    N, C, H, W = x.data.shape
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        _accumulate(x, g.reshape(N, C, H, 2, W, 2).sum(axis=(3, 5)))

    return make_op(data, (x,), backward)
