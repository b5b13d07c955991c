"""Channel-independent patch transformer encoder with a flatten-linear forecasting head."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..autodiff import Tensor, add, gelu, layer_norm, matmul, mul, reshape, softmax, transpose
from ..errors import ModelError
from .base import NeuralForecaster

INSTANCE_EPS = 1e-5


def patch_count(input_len: int, patch_len: int, patch_stride: int) -> int:
    """Number of patches; a tail shorter than ``patch_len`` is dropped."""
    if patch_len > input_len:
        raise ModelError(f"patch_len {patch_len} exceeds input_len {input_len}")
    if patch_len < 1 or patch_stride < 1:
        raise ModelError("patch_len and patch_stride must be positive")
    return (input_len - patch_len) // patch_stride + 1


class PatchTST(NeuralForecaster):
    """Every channel is an independent sample through shared weights, so the
    parameter count does not depend on the number of channels."""

    kind = "patchtst"

    def __init__(self, input_len: int = 96, horizon: int = 96, n_channels: int = 1, seed: int = 0,
                 patch_len: int = 16, patch_stride: int = 8, d_model: int = 64, n_layers: int = 2,
                 n_heads: int = 4, d_ff: int = 128):
        super().__init__(input_len, horizon, n_channels, seed)
        if d_model % n_heads:
            raise ModelError(f"d_model {d_model} is not divisible by n_heads {n_heads}")
        self.n_patches = patch_count(input_len, patch_len, patch_stride)
        self.patch_len, self.patch_stride = patch_len, patch_stride
        self.d_model, self.n_layers, self.n_heads, self.d_ff = d_model, n_layers, n_heads, d_ff
        d = d_model
        self.embed_w = self._param("embed.weight", (patch_len, d), fan_in=patch_len)
        self.embed_b = self._param("embed.bias", (d,), fan_in=patch_len)
        self.pos = self._param("pos", (self.n_patches, d), init="normal")
        self.layers = []
        for i in range(n_layers):
            p = f"layer{i}."
            # The key projection has no bias: softmax is shift-invariant per row,
            # so a key bias would never receive gradient.
            self.layers.append({
                "ln1_g": self._param(p + "norm1.gamma", (d,), init="ones"),
                "ln1_b": self._param(p + "norm1.beta", (d,), init="zeros"),
                "wq": self._param(p + "q.weight", (d, d), fan_in=d),
                "bq": self._param(p + "q.bias", (d,), fan_in=d),
                "wk": self._param(p + "k.weight", (d, d), fan_in=d),
                "wv": self._param(p + "v.weight", (d, d), fan_in=d),
                "bv": self._param(p + "v.bias", (d,), fan_in=d),
                "wo": self._param(p + "out.weight", (d, d), fan_in=d),
                "bo": self._param(p + "out.bias", (d,), fan_in=d),
                "ln2_g": self._param(p + "norm2.gamma", (d,), init="ones"),
                "ln2_b": self._param(p + "norm2.beta", (d,), init="zeros"),
                "w1": self._param(p + "ff1.weight", (d, d_ff), fan_in=d),
                "b1": self._param(p + "ff1.bias", (d_ff,), fan_in=d),
                "w2": self._param(p + "ff2.weight", (d_ff, d), fan_in=d_ff),
                "b2": self._param(p + "ff2.bias", (d,), fan_in=d_ff),
            })
        self.final_g = self._param("final_norm.gamma", (d,), init="ones")
        self.final_b = self._param("final_norm.beta", (d,), init="zeros")
        flat = self.n_patches * d
        self.head_w = self._param("head.weight", (flat, horizon), fan_in=flat)
        self.head_b = self._param("head.bias", (horizon,), fan_in=flat)

    def architecture(self):
        return {**super().architecture(), "patch_len": self.patch_len, "patch_stride": self.patch_stride,
                "d_model": self.d_model, "n_layers": self.n_layers, "n_heads": self.n_heads,
                "d_ff": self.d_ff}

    def _attention(self, h: Tensor, lay: dict) -> Tensor:
        N, P, d = h.shape
        nh, dh = self.n_heads, d // self.n_heads

        def heads(t: Tensor) -> Tensor:
            return transpose(reshape(t, (N, P, nh, dh)), (0, 2, 1, 3))  # [N, nh, P, dh]

        q = heads(add(matmul(h, lay["wq"]), lay["bq"]))
        k = heads(matmul(h, lay["wk"]))
        v = heads(add(matmul(h, lay["wv"]), lay["bv"]))
        scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        ctx = matmul(softmax(scores), v)
        ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (N, P, d))
        return add(matmul(ctx, lay["wo"]), lay["bo"])

    def forward(self, x) -> Tensor:
        x = self._check_input(x)
        B, L, C = x.shape
        # reduce along a contiguous last axis so each channel's statistics do not
        # depend on its position (keeps the channel-permutation equivariance exact)
        xc = np.ascontiguousarray(np.swapaxes(x, 1, 2))  # [B, C, L]
        mu = xc.mean(axis=2, keepdims=True)
        sd = np.sqrt(((xc - mu) ** 2).mean(axis=2, keepdims=True) + INSTANCE_EPS)
        xn = (xc - mu) / sd
        patches = sliding_window_view(xn, self.patch_len, axis=2)[:, :, ::self.patch_stride]
        patches = np.ascontiguousarray(patches.reshape(B * C, self.n_patches, self.patch_len))

        h = add(add(matmul(Tensor(patches), self.embed_w), self.embed_b), self.pos)
        for lay in self.layers:
            h = add(h, self._attention(layer_norm(h, lay["ln1_g"], lay["ln1_b"]), lay))
            z = gelu(add(matmul(layer_norm(h, lay["ln2_g"], lay["ln2_b"]), lay["w1"]), lay["b1"]))
            h = add(h, add(matmul(z, lay["w2"]), lay["b2"]))
        h = layer_norm(h, self.final_g, self.final_b)
        out = add(matmul(reshape(h, (B * C, self.n_patches * self.d_model)), self.head_w), self.head_b)
        out = transpose(reshape(out, (B, C, self.horizon)), (0, 2, 1))  # [B, H, C]
        shape = out.shape
        sd, mu = np.swapaxes(sd, 1, 2), np.swapaxes(mu, 1, 2)  # [B, 1, C]
        return add(mul(out, Tensor(np.broadcast_to(sd, shape))), Tensor(np.broadcast_to(mu, shape)))
