"""All-MLP mixer: alternating time-mixing and feature-mixing blocks, then a temporal projection."""

from __future__ import annotations

from ..autodiff import Tensor, add, layer_norm, matmul, relu, reshape, transpose
from ..errors import ModelError
from .base import NeuralForecaster


class TSMixer(NeuralForecaster):
    """Pre-norm residual mixer over a ``[B, L, C]`` context.

    Normalisation runs over the flattened ``L * C`` features of each sample.
    Time mixing is one ``L -> L`` dense layer shared across channels; feature
    mixing is a two-layer ``C -> hidden -> C`` MLP shared across time steps.
    """

    kind = "tsmixer"

    def __init__(self, input_len: int = 96, horizon: int = 96, n_channels: int = 1, seed: int = 0,
                 n_blocks: int = 2, hidden: int = 64):
        super().__init__(input_len, horizon, n_channels, seed)
        self.n_blocks = n_blocks
        self.hidden = hidden
        L, C = input_len, n_channels
        self.blocks = []
        for i in range(n_blocks):
            p = f"block{i}."
            self.blocks.append({
                "t_gamma": self._param(p + "time_norm.gamma", (L * C,), init="ones"),
                "t_beta": self._param(p + "time_norm.beta", (L * C,), init="zeros"),
                "t_w": self._param(p + "time.weight", (L, L), fan_in=L),
                "t_b": self._param(p + "time.bias", (L,), fan_in=L),
                "f_gamma": self._param(p + "feat_norm.gamma", (L * C,), init="ones"),
                "f_beta": self._param(p + "feat_norm.beta", (L * C,), init="zeros"),
                "f_w1": self._param(p + "feat1.weight", (C, hidden), fan_in=C),
                "f_b1": self._param(p + "feat1.bias", (hidden,), fan_in=C),
                "f_w2": self._param(p + "feat2.weight", (hidden, C), fan_in=hidden),
                "f_b2": self._param(p + "feat2.bias", (C,), fan_in=hidden),
            })
        self.head_w = self._param("head.weight", (L, horizon), fan_in=L)
        self.head_b = self._param("head.bias", (horizon,), fan_in=L)

    def architecture(self):
        return {**super().architecture(), "n_blocks": self.n_blocks, "hidden": self.hidden}

    def _check_input(self, x):
        x = super()._check_input(x)
        if x.shape[2] != self.n_channels:
            raise ModelError(f"tsmixer built for {self.n_channels} channels, got {x.shape[2]}")
        return x

    def _norm(self, h: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
        B, L, C = h.shape
        return reshape(layer_norm(reshape(h, (B, L * C)), gamma, beta), (B, L, C))

    def forward(self, x) -> Tensor:
        h = Tensor(self._check_input(x))
        for blk in self.blocks:
            z = transpose(self._norm(h, blk["t_gamma"], blk["t_beta"]), (0, 2, 1))  # [B, C, L]
            z = relu(add(matmul(z, blk["t_w"]), blk["t_b"]))
            h = add(h, transpose(z, (0, 2, 1)))
            z = self._norm(h, blk["f_gamma"], blk["f_beta"])
            z = relu(add(matmul(z, blk["f_w1"]), blk["f_b1"]))
            h = add(h, add(matmul(z, blk["f_w2"]), blk["f_b2"]))
        out = add(matmul(transpose(h, (0, 2, 1)), self.head_w), self.head_b)  # [B, C, H]
        return transpose(out, (0, 2, 1))
