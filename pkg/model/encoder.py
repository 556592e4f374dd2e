"""
Sandwich encoder: GTC -> per-view graph / hypergraph convolution -> view
fusion -> GTC, stacked, then fused across layers. The graph path and the
hypergraph path share no parameters.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import torch
import torch.nn as nn

from model.convolution import GraphConv, HypergraphConv
from model.fusion import TokenTransformer
from model.graphs import ViewStructures
from model.temporal import GTCBlock


@dataclass
class LayerState:
    """Per-view outputs of one encoder layer, both paths, shape (B, N, T, d)."""

    graph_views: Dict[str, torch.Tensor] = field(default_factory=dict)
    hyper_views: Dict[str, torch.Tensor] = field(default_factory=dict)
    graph_fused: Optional[torch.Tensor] = None
    hyper_fused: Optional[torch.Tensor] = None


@dataclass
class EncoderOutput:
    graph: torch.Tensor
    hyper: Optional[torch.Tensor]
    states: List[LayerState]


def embed_accidents(X: torch.Tensor, e: torch.Tensor) -> torch.Tensor:
    """E[..., n, t, :] = X[..., n, t] * e."""
    return X.unsqueeze(-1) * e


class _PathLayer(nn.Module):
    """One sandwich layer of a single path."""

    def __init__(self, views: Sequence[str], embed_dim: int, heads: int, kernel_size: int, hyper: bool, use_attention: bool, dropout: float):
        super().__init__()
        conv = HypergraphConv if hyper else GraphConv
        self.hyper = hyper
        self.gtc_in = GTCBlock(embed_dim, embed_dim, kernel_size)
        self.convs = nn.ModuleDict({view: conv(embed_dim, embed_dim) for view in views})
        self.fuse = TokenTransformer(embed_dim, heads, dropout=dropout, use_attention=use_attention)
        self.gtc_out = GTCBlock(embed_dim, embed_dim, kernel_size)

    def forward(self, E: torch.Tensor, structures: ViewStructures):
        E = self.gtc_in(E)
        per_view = {}
        for view, conv in self.convs.items():
            structure = structures.hyper[view].H if self.hyper else structures.normalized[view]
            per_view[view] = conv(E, structure)
        fused = self.fuse(list(per_view.values()))
        return self.gtc_out(fused), per_view


class SpatioTemporalEncoder(nn.Module):
    def __init__(
        self,
        views: Sequence[str],
        embed_dim: int = 32,
        heads: int = 8,
        layers: int = 2,
        kernel_size: int = 3,
        use_hypergraph: bool = True,
        use_attention: bool = True,
        dropout: float = 0.0,
    ):
        super().__init__()
        self.views = tuple(views)
        self.use_hypergraph = use_hypergraph
        self.e = nn.Parameter(torch.empty(embed_dim))
        nn.init.uniform_(self.e, -1.0, 1.0)

        self.graph_layers = nn.ModuleList(
            _PathLayer(self.views, embed_dim, heads, kernel_size, False, use_attention, dropout) for _ in range(layers)
        )
        self.graph_layer_fusion = TokenTransformer(embed_dim, heads, dropout=dropout, use_attention=use_attention)
        if use_hypergraph:
            self.hyper_layers = nn.ModuleList(
                _PathLayer(self.views, embed_dim, heads, kernel_size, True, use_attention, dropout) for _ in range(layers)
            )
            self.hyper_layer_fusion = TokenTransformer(embed_dim, heads, dropout=dropout, use_attention=use_attention)

    def forward(self, X: torch.Tensor, structures: ViewStructures) -> EncoderOutput:
        """X: (B, N, T) transformed risk window."""
        E = embed_accidents(X, self.e)
        states = [LayerState() for _ in self.graph_layers]

        g = E
        graph_outputs = []
        for layer, state in zip(self.graph_layers, states):
            g, state.graph_views = layer(g, structures)
            state.graph_fused = g
            graph_outputs.append(g)
        graph = self.graph_layer_fusion(graph_outputs)

        hyper = None
        if self.use_hypergraph:
            h = E
            hyper_outputs = []
            for layer, state in zip(self.hyper_layers, states):
                h, state.hyper_views = layer(h, structures)
                state.hyper_fused = h
                hyper_outputs.append(h)
            hyper = self.hyper_layer_fusion(hyper_outputs)
        return EncoderOutput(graph=graph, hyper=hyper, states=states)
