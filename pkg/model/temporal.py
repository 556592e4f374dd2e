"""
Gated temporal convolution over (batch, node, time, channel) tensors.
"""

from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


class GatedTemporalConv(nn.Module):
    """One gated sub-layer: out = (1 - g) * E + g * (W2 * E + b2), g = sigmoid(W1 * E + b1).

    Convolutions are causal along time (left padding, length preserved). When
    the channel width changes, the residual branch goes through a 1x1 projection.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        self.gate = nn.Conv1d(in_channels, out_channels, kernel_size)
        self.value = nn.Conv1d(in_channels, out_channels, kernel_size)
        self.residual: Optional[nn.Conv1d] = None
        if in_channels != out_channels:
            self.residual = nn.Conv1d(in_channels, out_channels, 1, bias=False)

    def forward(self, E: torch.Tensor) -> torch.Tensor:
        B, N, T, C = E.shape
        x = E.reshape(B * N, T, C).transpose(1, 2)  # (B*N, C, T)
        padded = F.pad(x, (self.kernel_size - 1, 0))
        g = torch.sigmoid(self.gate(padded))
        candidate = self.value(padded)
        residual = x if self.residual is None else self.residual(x)
        out = (1 - g) * residual + g * candidate
        return out.transpose(1, 2).reshape(B, N, T, -1)


class GTCBlock(nn.Module):
    """Two stacked gated sub-layers."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        self.first = GatedTemporalConv(in_channels, out_channels, kernel_size)
        self.second = GatedTemporalConv(out_channels, out_channels, kernel_size)

    def forward(self, E: torch.Tensor) -> torch.Tensor:
        return self.second(self.first(E))
