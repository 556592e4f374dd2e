"""
Attention fusion over a short token sequence (views or layers).

Each (batch, node, time) position contributes one sequence whose tokens are the
per-view (or per-layer) vectors; a single transformer encoder block runs over
it and the tokens are mean-pooled.
"""

from typing import List, Optional

import torch
import torch.nn as nn


class TokenTransformer(nn.Module):
    def __init__(self, embed_dim: int, heads: int = 8, ffn_dim: Optional[int] = None, dropout: float = 0.0, use_attention: bool = True):
        super().__init__()
        self.use_attention = use_attention
        self.last_attention: Optional[torch.Tensor] = None
        if not use_attention:
            return
        ffn_dim = ffn_dim or 2 * embed_dim
        self.attn = nn.MultiheadAttention(embed_dim, heads, dropout=dropout, batch_first=True)
        self.norm1 = nn.LayerNorm(embed_dim)
        self.ffn = nn.Sequential(nn.Linear(embed_dim, ffn_dim), nn.ReLU(), nn.Dropout(dropout), nn.Linear(ffn_dim, embed_dim))
        self.norm2 = nn.LayerNorm(embed_dim)
        self.dropout = nn.Dropout(dropout)

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        """(P, S, d) -> (P, S, d); stores head-averaged attention weights (P, S, S)."""
        attended, weights = self.attn(tokens, tokens, tokens, need_weights=True, average_attn_weights=True)
        self.last_attention = weights.detach()
        x = self.norm1(tokens + self.dropout(attended))
        return self.norm2(x + self.dropout(self.ffn(x)))

    def forward(self, inputs: List[torch.Tensor]) -> torch.Tensor:
        stacked = torch.stack(inputs, dim=-2)  # (..., S, d)
        if not self.use_attention:
            return stacked.mean(dim=-2)
        lead = stacked.shape[:-2]
        S, d = stacked.shape[-2:]
        encoded = self.encode(stacked.reshape(-1, S, d))
        return encoded.mean(dim=1).reshape(*lead, d)
