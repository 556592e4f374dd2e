"""
Decoder streams (encoder output + embedded externals through one GTC block)
and the prediction head that adds fresh urban-feature embeddings.
"""

from typing import Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.errors import DimensionMismatchError
from model.temporal import GTCBlock


class DecoderStream(nn.Module):
    """GTC([E, W^M X^M, W^C X^C]): width 3d in, d out."""

    def __init__(self, embed_dim: int, met_dim: int, cal_dim: int, kernel_size: int = 3):
        super().__init__()
        self.met = nn.Linear(met_dim, embed_dim)
        self.cal = nn.Linear(cal_dim, embed_dim)
        self.gtc = GTCBlock(3 * embed_dim, embed_dim, kernel_size)

    def forward(self, E: torch.Tensor, met: torch.Tensor, cal: torch.Tensor) -> torch.Tensor:
        for axis, name, ext in (("time", "meteorology", met), ("time", "calendar", cal)):
            if ext.shape[:3] != E.shape[:3]:
                raise DimensionMismatchError(f"{axis} ({name})", tuple(E.shape[:3]), tuple(ext.shape[:3]))
        return self.gtc(torch.cat([E, self.met(met), self.cal(cal)], dim=-1))


class PredictionHead(nn.Module):
    """FC(ReLU(FC([streams flattened over time, W^P X^P, W^R X^R]))) -> (B, N, tau)."""

    def __init__(
        self,
        n_streams: int,
        input_steps: int,
        embed_dim: int,
        horizon: int,
        hidden: int = 64,
        urban_dims: Optional[Dict[str, int]] = None,
    ):
        super().__init__()
        urban_dims = urban_dims or {}
        self.urban = nn.ModuleDict({view: nn.Linear(dim, embed_dim) for view, dim in urban_dims.items()})
        width = n_streams * input_steps * embed_dim + len(self.urban) * embed_dim
        self.fc1 = nn.Linear(width, hidden)
        self.fc2 = nn.Linear(hidden, horizon)

    def forward(self, streams: List[torch.Tensor], urban: Dict[str, torch.Tensor]) -> torch.Tensor:
        B, N = streams[0].shape[:2]
        parts = [torch.cat(streams, dim=-1).reshape(B, N, -1)]
        for view, embed in self.urban.items():
            parts.append(embed(urban[view]).unsqueeze(0).expand(B, -1, -1))
        return self.fc2(F.relu(self.fc1(torch.cat(parts, dim=-1))))
