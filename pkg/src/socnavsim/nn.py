"""Minimal numpy neural-network layers with hand-written backprop.

Layers are functional: forward returns (output, cache) and backward
takes (grad_out, cache) so one layer instance can serve several passes
per update without cache aliasing.  float32 for training speed; tests
rebuild the same layers in float64 for finite-difference checks.
"""

from __future__ import annotations

import math

import numpy as np


class Dense:
    def __init__(self, in_dim, out_dim, rng, dtype=np.float32, init_scale=None):
        if init_scale is None:
            init_scale = math.sqrt(2.0 / in_dim)
        self.W = rng.normal(0.0, init_scale, (in_dim, out_dim)).astype(dtype)
        self.b = np.zeros(out_dim, dtype=dtype)

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, dy, cache, need_input_grad=True):
        x = cache
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        dx = dy @ self.W.T if need_input_grad else None
        return dx, grads

    def params(self):
        return {"W": self.W, "b": self.b}


class Conv2d:
    """Valid-padding 2-D convolution via im2col and one GEMM.

    Channels-last layout (N, H, W, C): the GEMM result is already the
    output, no transposes anywhere.  Kernel extents wider than the input
    are clamped at construction so one architecture spec serves any beam
    count.
    """

    def __init__(self, in_ch, out_ch, kernel, stride, in_hw, rng, dtype=np.float32):
        kh = min(kernel[0], in_hw[0])
        kw = min(kernel[1], in_hw[1])
        self.kernel = (kh, kw)
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.in_hw = in_hw
        self.out_hw = (
            (in_hw[0] - kh) // stride[0] + 1,
            (in_hw[1] - kw) // stride[1] + 1,
        )
        fan_in = in_ch * kh * kw
        self.W = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, out_ch)).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype)

    def im2col(self, x):
        """Patch matrix (N*OH*OW, C*kh*kw); shareable between networks
        built from the same spec since it depends only on the input.
        Patch order keeps kw innermost, giving memcpy-friendly gathers."""
        n = x.shape[0]
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow = self.out_hw
        win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
        win = win[:, ::sh, ::sw]  # (N, OH, OW, C, kh, kw)
        return np.ascontiguousarray(win).reshape(n * oh * ow, self.in_ch * kh * kw)

    def forward(self, x, cols=None):
        n = x.shape[0]
        oh, ow = self.out_hw
        if cols is None:
            cols = self.im2col(x)
        y = cols @ self.W + self.b
        return y.reshape(n, oh, ow, self.out_ch), (cols, x.shape)

    def backward(self, dy, cache, need_input_grad=True):
        cols, x_shape = cache
        n = dy.shape[0]
        kh, kw = self.kernel
        sh, sw = self.stride
        oh, ow = self.out_hw
        dy_rows = dy.reshape(n * oh * ow, self.out_ch)
        grads = {"W": cols.T @ dy_rows, "b": dy_rows.sum(axis=0)}
        if not need_input_grad:
            return None, grads
        dcols = dy_rows @ self.W.T
        dcols = dcols.reshape(n, oh, ow, self.in_ch, kh, kw)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for i in range(kh):
            for j in range(kw):
                dx[:, i : i + oh * sh : sh, j : j + ow * sw : sw, :] += dcols[:, :, :, :, i, j]
        return dx, grads

    def params(self):
        return {"W": self.W, "b": self.b}


class MaxPoolW:
    """Max pooling along the width axis (N, H, W, C), window = stride.

    Running pairwise max keeps the winner index as it goes, which beats
    a strided argmax reduce on this machine; ties go to the lowest
    offset, matching a plain argmax.
    """

    def __init__(self, width):
        self.width = width

    def out_width(self, w):
        return max(1, w // self.width) if w >= self.width else 1

    def forward(self, x):
        n, h, w, c = x.shape
        pw = min(self.width, w)
        ow = w // pw
        v = x[:, :, : ow * pw, :].reshape(n, h, ow, pw, c)
        y = v[:, :, :, 0, :].copy()
        idx = np.zeros(y.shape, dtype=np.int8)
        for k in range(1, pw):
            vk = v[:, :, :, k, :]
            better = vk > y
            np.copyto(y, vk, where=better)
            np.copyto(idx, np.int8(k), where=better)
        return y, (idx, x.shape, pw, ow)

    def backward(self, dy, cache, need_input_grad=True):
        idx, x_shape, pw, ow = cache
        n, h, w, c = x_shape
        dv = np.zeros((n, h, ow, pw, c), dtype=dy.dtype)
        np.put_along_axis(dv, idx[:, :, :, None, :].astype(np.intp), dy[:, :, :, None, :], axis=3)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        dx[:, :, : ow * pw, :] = dv.reshape(n, h, ow * pw, c)
        return dx, {}

    def params(self):
        return {}


class ReLU:
    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, dy, cache, need_input_grad=True):
        return dy * (cache > 0), {}

    def params(self):
        return {}


class Tanh:
    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, dy, cache, need_input_grad=True):
        return dy * (1.0 - cache * cache), {}

    def params(self):
        return {}


class Adam:
    """Standard Adam over a flat dict of named parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            p = self.params[k]
            g = g.astype(p.dtype, copy=False)
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_dict(self):
        out = {"t": np.array(self.t)}
        for k in self.params:
            out[f"m.{k}"] = self.m[k]
            out[f"v.{k}"] = self.v[k]
        return out

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = state[f"m.{k}"].copy()
            self.v[k] = state[f"v.{k}"].copy()


def numeric_gradient(f, x, h=1e-5):
    """Central finite differences of a scalar function, for tests."""
    g = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g
