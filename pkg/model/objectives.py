"""
Local-global contrastive loss between the graph and hypergraph paths and the
joint training objective.
"""

import logging
from typing import List, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.schemas import LossBreakdown
from model.encoder import LayerState

logger = logging.getLogger(__name__)

# parameter-name fragments left out of the L2 term
_UNREGULARISED = ("bias", "norm1.weight", "norm2.weight")


def cosine_matrix(left: torch.Tensor, right: torch.Tensor) -> Tuple[torch.Tensor, int]:
    """Pairwise cosine (B, N, N); zero-norm vectors give cosine 0.

    Returns the matrix and the number of zero-norm vectors seen.
    """
    left_norm = left.norm(dim=-1, keepdim=True)
    right_norm = right.norm(dim=-1, keepdim=True)
    degenerate = int((left_norm == 0).sum() + (right_norm == 0).sum())
    left_unit = torch.where(left_norm > 0, left / left_norm.clamp_min(1e-12), torch.zeros_like(left))
    right_unit = torch.where(right_norm > 0, right / right_norm.clamp_min(1e-12), torch.zeros_like(right))
    return left_unit @ right_unit.transpose(-1, -2), degenerate


def info_nce(graph: torch.Tensor, hyper: torch.Tensor, temperature: float = 1.0) -> Tuple[torch.Tensor, int]:
    """Per-region -log softmax of the positive pair; (B, N) terms."""
    cos, degenerate = cosine_matrix(graph, hyper)
    log_probs = F.log_softmax(cos / temperature, dim=-1)
    return -torch.diagonal(log_probs, dim1=-2, dim2=-1), degenerate


def contrastive_loss(states: List[LayerState], temperature: float = 1.0) -> Tuple[torch.Tensor, int]:
    """InfoNCE averaged over (batch, view, layer, region).

    Region vectors are the time means of each per-view layer output; negatives
    are the other regions of the same view and layer.
    """
    terms = []
    degenerate = 0
    for state in states:
        for view, graph in state.graph_views.items():
            hyper = state.hyper_views.get(view)
            if hyper is None:
                continue
            term, zeros = info_nce(graph.mean(dim=2), hyper.mean(dim=2), temperature)
            terms.append(term)
            degenerate += zeros
    if not terms:
        raise ValueError("contrastive loss needs hypergraph-path states")
    if degenerate:
        logger.warning("contrastive loss: %d zero-norm region vector(s)", degenerate)
    return torch.stack(terms).mean(), degenerate


def l2_penalty(model: nn.Module) -> torch.Tensor:
    """Σ‖θ‖² over trainable weights, biases and normalization gains excluded."""
    total = None
    for name, param in model.named_parameters():
        if not param.requires_grad or name.endswith(_UNREGULARISED):
            continue
        term = param.pow(2).sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros(())
    return total


def joint_loss(
    Y: torch.Tensor,
    Y_hat: torch.Tensor,
    states: List[LayerState],
    model: nn.Module,
    lambda1: float = 0.1,
    lambda2: float = 0.001,
    temperature: float = 1.0,
    use_contrastive: bool = True,
) -> Tuple[torch.Tensor, LossBreakdown]:
    """mse + lambda1 * contrastive + lambda2 * l2; returns the graph tensor and its breakdown."""
    if Y.shape != Y_hat.shape:
        raise ValueError(f"target shape {tuple(Y.shape)} != prediction shape {tuple(Y_hat.shape)}")
    mse = F.mse_loss(Y_hat, Y, reduction="mean")
    has_hyper = any(state.hyper_views for state in states)
    if use_contrastive and lambda1 > 0 and has_hyper:
        contrastive, _ = contrastive_loss(states, temperature)
    else:
        contrastive = torch.zeros((), dtype=mse.dtype)
    l2 = l2_penalty(model).to(mse.dtype)
    total = mse + lambda1 * contrastive + lambda2 * l2

    breakdown = LossBreakdown(
        mse=float(mse),
        contrastive=float(contrastive),
        l2=float(l2),
        total=float(mse) + lambda1 * float(contrastive) + lambda2 * float(l2),
        lambda1=lambda1,
        lambda2=lambda2,
    )
    return total, breakdown
