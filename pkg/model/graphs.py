"""
Adaptive multi-view graph and hypergraph construction.

Views: S (accident-spatial), T (accident-temporal), P (POI), R (road).
Pairwise graphs are ReLU(Tanh(U Uᵀ)) kept to the top-k entries per row
(view S is the fixed adjacency); hypergraph incidences are ReLU(Tanh(U K))
kept to the top-k_members regions per hyperedge.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.errors import ConfigError, StructureViolationError

logger = logging.getLogger(__name__)

VIEWS = ("S", "T", "P", "R")


@dataclass
class AdaptiveGraph:
    view: str
    A: torch.Tensor  # (N, N) or (B, N, N)
    k: int
    tie_fraction: float = 0.0


@dataclass
class HyperIncidence:
    view: str
    H: torch.Tensor  # (N, I) or (B, N, I)
    k_members: int
    axis: str = "column"
    empty_edges: int = 0


# ------------------------- Sparsification -------------------------

def topk_mask(values: torch.Tensor, k: int, dim: int = -1) -> Tuple[torch.Tensor, float]:
    """Keep the k largest entries along ``dim``; ties go to the lower index.

    Returns the masked tensor and the fraction of slices with a tie at the
    cut-off. The mask is a constant: dropped entries get zero gradient.
    """
    size = values.shape[dim]
    if k >= size:
        return values, 0.0
    ordered, order = torch.sort(values.detach(), dim=dim, descending=True, stable=True)
    keep = torch.zeros_like(values, dtype=torch.bool)
    keep.scatter_(dim, order.narrow(dim, 0, k), True)

    kth = ordered.narrow(dim, k - 1, 1)
    after = ordered.narrow(dim, k, 1)
    ties = (kth == after) & (kth > 0)
    tie_fraction = float(ties.float().mean()) if ties.numel() else 0.0
    return values * keep.to(values.dtype), tie_fraction


def affinity(left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
    return F.relu(torch.tanh(left @ right))


def build_pairwise_graph(U: torch.Tensor, k: int, view: str = "T") -> AdaptiveGraph:
    A = affinity(U, U.transpose(-1, -2))
    k = min(k, A.shape[-1])
    A, tie_fraction = topk_mask(A, k, dim=-1)
    return AdaptiveGraph(view=view, A=A, k=k, tie_fraction=tie_fraction)


def build_hypergraph(
    U: torch.Tensor, K: torch.Tensor, k_members: int, view: str = "S", axis: str = "column"
) -> HyperIncidence:
    H = affinity(U, K)
    if axis == "column":
        k_members = min(k_members, H.shape[-2])
        H, _ = topk_mask(H, k_members, dim=-2)
    else:
        k_members = min(k_members, H.shape[-1])
        H, _ = topk_mask(H, k_members, dim=-1)
    empty = int((H.detach().sum(dim=-2) == 0).sum())
    return HyperIncidence(view=view, H=H, k_members=k_members, axis=axis, empty_edges=empty)


def spatial_view_graph(adjacency: Union[np.ndarray, torch.Tensor]) -> AdaptiveGraph:
    A = torch.as_tensor(adjacency, dtype=torch.get_default_dtype())
    return AdaptiveGraph(view="S", A=A, k=A.shape[-1])


def normalize_pairwise(A: torch.Tensor) -> torch.Tensor:
    """D^-1/2 (A + I) D^-1/2 with D the row degree of A + I."""
    eye = torch.eye(A.shape[-1], dtype=A.dtype, device=A.device)
    A_hat = A + eye
    d_inv_sqrt = A_hat.sum(dim=-1).pow(-0.5)
    return d_inv_sqrt.unsqueeze(-1) * A_hat * d_inv_sqrt.unsqueeze(-2)


# ------------------------- View embeddings -------------------------

def _uniform_fan_in(tensor: torch.Tensor, fan_in: int) -> None:
    bound = 1.0 / math.sqrt(max(1, fan_in))
    nn.init.uniform_(tensor, -bound, bound)


class StaticViewEmbedding(nn.Module):
    """Two affine layers with ReLU between: (N, d_in) -> (N, d)."""

    def __init__(self, in_features: int, embed_dim: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(in_features, embed_dim), nn.ReLU(), nn.Linear(embed_dim, embed_dim))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features)


class TemporalViewEmbedding(nn.Module):
    """Two causal 1-D convolutions over an accident history, time-mean pooled, then affine.

    (N, T) or (B, N, T) -> (N, d) or (B, N, d).
    """

    def __init__(self, embed_dim: int, kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        self.conv1 = nn.Conv1d(1, embed_dim, kernel_size)
        self.conv2 = nn.Conv1d(embed_dim, embed_dim, kernel_size)
        self.proj = nn.Linear(embed_dim, embed_dim)

    def forward(self, history: torch.Tensor) -> torch.Tensor:
        steps = history.shape[-1]
        if steps < self.kernel_size:
            raise ConfigError(f"history of {steps} step(s) is shorter than the temporal kernel ({self.kernel_size})")
        lead = history.shape[:-1]
        x = history.reshape(-1, 1, steps)
        pad = self.kernel_size - 1
        x = F.relu(self.conv1(F.pad(x, (pad, 0))))
        x = F.relu(self.conv2(F.pad(x, (pad, 0))))
        pooled = x.mean(dim=-1)
        return self.proj(pooled).reshape(*lead, -1)


# ------------------------- Multi-view learner -------------------------

@dataclass
class ViewStructures:
    """Per-view normalized pairwise graphs and incidences, batch-major."""

    pairwise: Dict[str, AdaptiveGraph] = field(default_factory=dict)
    normalized: Dict[str, torch.Tensor] = field(default_factory=dict)
    hyper: Dict[str, HyperIncidence] = field(default_factory=dict)

    @property
    def views(self) -> Tuple[str, ...]:
        return tuple(self.normalized)


class MultiViewGraphLearner(nn.Module):
    """Owns U^S and K^s and the feature encoders that produce U^T, U^P, U^R."""

    def __init__(
        self,
        adjacency: torch.Tensor,
        embed_dim: int,
        n_hyperedges: int,
        views: Sequence[str] = VIEWS,
        k: int = 40,
        k_members: int = 40,
        poi_dim: int = 0,
        road_dim: int = 0,
        temporal_kernel: int = 3,
        use_hypergraph: bool = True,
        dynamic_temporal: bool = True,
        topk_axis: str = "column",
        input_steps: int = 12,
    ):
        super().__init__()
        n_regions = adjacency.shape[0]
        self.views = tuple(views)
        self.k = k
        self.k_members = k_members
        self.use_hypergraph = use_hypergraph
        self.dynamic_temporal = dynamic_temporal
        self.topk_axis = topk_axis

        self.register_buffer("adjacency", torch.as_tensor(adjacency, dtype=torch.get_default_dtype()), persistent=False)
        self.register_buffer("static_history", torch.zeros(n_regions, input_steps))

        self.temporal = TemporalViewEmbedding(embed_dim, temporal_kernel)
        self.static = nn.ModuleDict()
        if "P" in self.views:
            self.static["P"] = StaticViewEmbedding(poi_dim, embed_dim)
        if "R" in self.views:
            self.static["R"] = StaticViewEmbedding(road_dim, embed_dim)

        self.positional = nn.Parameter(torch.empty(n_regions, embed_dim))
        _uniform_fan_in(self.positional, embed_dim)
        self.bases = nn.ParameterDict()
        if use_hypergraph:
            for view in self.views:
                basis = nn.Parameter(torch.empty(embed_dim, n_hyperedges))
                _uniform_fan_in(basis, embed_dim)
                self.bases[view] = basis

    def set_static_history(self, history: torch.Tensor) -> None:
        """Training-period mean-pooled sequence used when the temporal view is static."""
        self.static_history.copy_(torch.as_tensor(history, dtype=self.static_history.dtype))

    def embeddings(self, history: torch.Tensor, urban: Dict[str, torch.Tensor]) -> Dict[str, torch.Tensor]:
        """U^s per view; the temporal one is batched when dynamic."""
        out = {"S": self.positional}
        out["T"] = self.temporal(history if self.dynamic_temporal else self.static_history)
        for view, encoder in self.static.items():
            out[view] = encoder(urban[view])
        return out

    def forward(self, history: torch.Tensor, urban: Dict[str, torch.Tensor]) -> ViewStructures:
        batch = history.shape[0]
        U = self.embeddings(history, urban)
        structures = ViewStructures()

        for view in self.views:
            if view == "S":
                graph = spatial_view_graph(self.adjacency)
            else:
                graph = build_pairwise_graph(U[view], self.k, view=view)
            structures.pairwise[view] = graph
            structures.normalized[view] = _batched(normalize_pairwise(graph.A), batch)

            if self.use_hypergraph:
                U_h = U[view]
                hyper = build_hypergraph(U_h, self.bases[view], self.k_members, view=view, axis=self.topk_axis)
                if hyper.empty_edges:
                    logger.debug("view %s: %d empty hyperedge(s)", view, hyper.empty_edges)
                hyper.H = _batched(hyper.H, batch)
                structures.hyper[view] = hyper
        return structures


def _batched(tensor: torch.Tensor, batch: int) -> torch.Tensor:
    if tensor.dim() == 3:
        return tensor
    return tensor.unsqueeze(0).expand(batch, *tensor.shape)


def check_structures(structures: ViewStructures, k: int, k_members: int) -> None:
    """Assert the sparsity and range contracts; raises StructureViolationError."""
    for view, graph in structures.pairwise.items():
        A = graph.A.detach()
        if view != "S":
            nnz = int((A != 0).sum(dim=-1).max())
            if nnz > min(k, A.shape[-1]):
                raise StructureViolationError(
                    f"view {view}: pairwise row holds {nnz} entries, cap is {k}", {"view": view, "nnz": nnz}
                )
        if bool(((A < 0) | (A > 1)).any()) or not bool(torch.isfinite(A).all()):
            raise StructureViolationError(f"view {view}: pairwise affinity outside [0, 1]", {"view": view})

    for view, hyper in structures.hyper.items():
        H = hyper.H.detach()
        dim = -2 if hyper.axis == "column" else -1
        nnz = int((H != 0).sum(dim=dim).max())
        if nnz > hyper.k_members:
            raise StructureViolationError(
                f"view {view}: hyperedge holds {nnz} members, cap is {hyper.k_members}",
                {"view": view, "nnz": nnz, "axis": hyper.axis},
            )
        if bool(((H < 0) | (H > 1)).any()) or not bool(torch.isfinite(H).all()):
            raise StructureViolationError(f"view {view}: incidence outside [0, 1]", {"view": view})
