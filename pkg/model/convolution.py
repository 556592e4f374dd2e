"""
Per-view graph and hypergraph convolutions, applied to every time slice.

E: (B, N, T, d). Structures are batch-major: Â (B, N, N), H (B, N, I).
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


def pseudo_inverse(degree: torch.Tensor, power: float = 1.0) -> torch.Tensor:
    """degree^-power with 0 -> 0."""
    safe = torch.where(degree > 0, degree, torch.ones_like(degree))
    return torch.where(degree > 0, safe.pow(-power), torch.zeros_like(degree))


class GraphConv(nn.Module):
    """ReLU(Â E W3)."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.weight = nn.Linear(in_dim, out_dim, bias=False)

    def forward(self, E: torch.Tensor, A_norm: torch.Tensor) -> torch.Tensor:
        propagated = torch.einsum("bnm,bmtd->bntd", A_norm, E)
        return F.relu(self.weight(propagated))


class HypergraphConv(nn.Module):
    """Two-stage incidence message passing.

    M = ReLU(De^-1 Hᵀ E), out = ReLU(Dv^-1/2 H M W4), where Dv / De are the
    row / column sums of H.
    """

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.weight = nn.Linear(in_dim, out_dim, bias=False)

    def forward(self, E: torch.Tensor, H: torch.Tensor) -> torch.Tensor:
        De_inv = pseudo_inverse(H.sum(dim=-2))  # (B, I)
        Dv_inv_sqrt = pseudo_inverse(H.sum(dim=-1), 0.5)  # (B, N)

        edges = torch.einsum("bni,bntd->bitd", H, E)
        edges = F.relu(De_inv[:, :, None, None] * edges)
        nodes = torch.einsum("bni,bitd->bntd", H, edges)
        nodes = Dv_inv_sqrt[:, :, None, None] * nodes
        return F.relu(self.weight(nodes))
