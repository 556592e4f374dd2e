"""
End-to-end risk network: view structures -> encoder -> decoder streams -> head.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, Field

from core.config import ExperimentConfig
from core.errors import DimensionMismatchError
from model.decoder import DecoderStream, PredictionHead
from model.encoder import LayerState, SpatioTemporalEncoder
from model.graphs import MultiViewGraphLearner, ViewStructures, check_structures

logger = logging.getLogger(__name__)


class ModelDims(BaseModel):
    """Data-dependent sizes a checkpoint must agree with."""

    n_regions: int = Field(..., ge=1)
    input_steps: int = Field(..., ge=1)
    horizon: int = Field(..., ge=1)
    met_dim: int = Field(..., ge=0)
    cal_dim: int = Field(..., ge=0)
    poi_dim: int = Field(..., ge=1)
    road_dim: int = Field(..., ge=1)


@dataclass
class ForwardOutput:
    prediction: torch.Tensor  # (B, N, tau)
    states: List[LayerState]
    structures: ViewStructures


class RiskHypergraphNet(nn.Module):
    def __init__(self, config: ExperimentConfig, dims: ModelDims, adjacency: np.ndarray, poi: np.ndarray, road: np.ndarray):
        super().__init__()
        self.config = config
        self.dims = dims
        views = config.views
        d = config.embed_dim

        self.register_buffer("poi_features", torch.as_tensor(poi, dtype=torch.get_default_dtype()), persistent=False)
        self.register_buffer("road_features", torch.as_tensor(road, dtype=torch.get_default_dtype()), persistent=False)

        self.learner = MultiViewGraphLearner(
            adjacency=torch.as_tensor(adjacency),
            embed_dim=d,
            n_hyperedges=config.n_hyperedges(dims.n_regions),
            views=views,
            k=config.k,
            k_members=config.k_members,
            poi_dim=dims.poi_dim,
            road_dim=dims.road_dim,
            temporal_kernel=config.temporal_kernel,
            use_hypergraph=config.use_hypergraph,
            dynamic_temporal=config.dynamic_temporal_view,
            topk_axis=config.topk_axis,
            input_steps=dims.input_steps,
        )
        self.encoder = SpatioTemporalEncoder(
            views,
            embed_dim=d,
            heads=config.heads,
            layers=config.layers,
            kernel_size=config.temporal_kernel,
            use_hypergraph=config.use_hypergraph,
            use_attention=config.use_attention_fusion,
            dropout=config.dropout,
        )
        self.graph_decoder = DecoderStream(d, dims.met_dim, dims.cal_dim, config.temporal_kernel)
        self.hyper_decoder: Optional[DecoderStream] = None
        if config.use_hypergraph:
            self.hyper_decoder = DecoderStream(d, dims.met_dim, dims.cal_dim, config.temporal_kernel)

        urban_dims: Dict[str, int] = {}
        if config.use_poi:
            urban_dims["P"] = dims.poi_dim
        if config.use_road:
            urban_dims["R"] = dims.road_dim
        self.head = PredictionHead(
            n_streams=2 if config.use_hypergraph else 1,
            input_steps=dims.input_steps,
            embed_dim=d,
            horizon=dims.horizon,
            hidden=config.head_hidden,
            urban_dims=urban_dims,
        )
        logger.debug("model built: %d parameters", sum(p.numel() for p in self.parameters()))

    @property
    def urban(self) -> Dict[str, torch.Tensor]:
        return {"P": self.poi_features, "R": self.road_features}

    def structures(self, history: torch.Tensor) -> ViewStructures:
        return self.learner(history, self.urban)

    def forward(self, X: torch.Tensor, met: torch.Tensor, cal: torch.Tensor, check: bool = False) -> ForwardOutput:
        """X: (B, N, T); met / cal: (B, N, T, d_M) / (B, N, T, d_C)."""
        if X.shape[1] != self.dims.n_regions:
            raise DimensionMismatchError("region", self.dims.n_regions, X.shape[1])
        if X.shape[2] != self.dims.input_steps:
            raise DimensionMismatchError("time", self.dims.input_steps, X.shape[2])

        structures = self.structures(X)
        if check:
            check_structures(structures, self.config.k, self.config.k_members)
        encoded = self.encoder(X, structures)

        streams = [self.graph_decoder(encoded.graph, met, cal)]
        if self.hyper_decoder is not None:
            streams.append(self.hyper_decoder(encoded.hyper, met, cal))
        prediction = self.head(streams, self.urban)
        return ForwardOutput(prediction=prediction, states=encoded.states, structures=structures)
