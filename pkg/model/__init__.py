# Model package: view structures, encoder, decoder and objectives
from model.graphs import MultiViewGraphLearner, build_hypergraph, build_pairwise_graph, normalize_pairwise
from model.network import ForwardOutput, ModelDims, RiskHypergraphNet
from model.objectives import contrastive_loss, joint_loss

__all__ = [
    "MultiViewGraphLearner",
    "build_hypergraph",
    "build_pairwise_graph",
    "normalize_pairwise",
    "ForwardOutput",
    "ModelDims",
    "RiskHypergraphNet",
    "contrastive_loss",
    "joint_loss",
]
