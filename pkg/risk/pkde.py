"""
Prior-knowledge data enhancement for zero-inflated risk tensors.

Zero cells of region i are replaced by a negative intensity
pi_i = b1 * log2(eps_i) + b2 in [-1, -delta], where eps_i is the region's share
of training-period risk relative to the riskiest region. Nonzero cells are
scaled by the training-period maximum and clipped to (0, 1].
"""

import logging
from dataclasses import dataclass

import numpy as np

from core.errors import DataError
from risk.scores import RiskTensor

logger = logging.getLogger(__name__)

DEFAULT_FLOOR = 2.0 ** -10
DEFAULT_DELTA = 0.05
UNIFORM_PI = -0.5


@dataclass(frozen=True)
class PkdeParams:
    b1: float
    b2: float
    epsilon: np.ndarray  # (N,), floored
    pi: np.ndarray  # (N,), zero-cell replacement per region
    floor: float
    delta: float
    scale: float  # max nonzero value over the training slice

    def to_dict(self) -> dict:
        return {
            "b1": self.b1,
            "b2": self.b2,
            "epsilon": self.epsilon.tolist(),
            "pi": self.pi.tolist(),
            "floor": self.floor,
            "delta": self.delta,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PkdeParams":
        return cls(
            b1=float(data["b1"]),
            b2=float(data["b2"]),
            epsilon=np.asarray(data["epsilon"], dtype=np.float64),
            pi=np.asarray(data["pi"], dtype=np.float64),
            floor=float(data["floor"]),
            delta=float(data["delta"]),
            scale=float(data["scale"]),
        )


def fit_pkde(train_slice: RiskTensor, floor: float = DEFAULT_FLOOR, delta: float = DEFAULT_DELTA) -> PkdeParams:
    """Fit the zero-cell intensities and nonzero scale on the training period only."""
    if train_slice.kind != "raw":
        raise DataError("fit_pkde expects a raw risk tensor")
    values = train_slice.values
    totals = values.sum(axis=1)
    if totals.max(initial=0.0) <= 0:
        raise DataError("no accidents in training period")

    epsilon = np.maximum(totals / totals.max(), floor)
    log_eps = np.log2(epsilon)
    lo, hi = log_eps.min(), log_eps.max()
    if hi == lo:
        b1, b2 = 0.0, UNIFORM_PI
        pi = np.full_like(epsilon, UNIFORM_PI)
    else:
        # pi(eps_min) = -1, pi(eps_max) = -delta
        b1 = (1.0 - delta) / (hi - lo)
        b2 = -1.0 - b1 * lo
        pi = b1 * log_eps + b2
        pi[log_eps == lo] = -1.0
        pi[log_eps == hi] = -delta

    scale = float(values[values > 0].max())
    logger.debug("pkde fitted: b1=%.6f b2=%.6f scale=%.3f", b1, b2, scale)
    return PkdeParams(float(b1), float(b2), epsilon, pi, floor, delta, scale)


def apply_pkde(tensor: RiskTensor, params: PkdeParams) -> RiskTensor:
    if tensor.kind != "raw":
        raise DataError("apply_pkde expects a raw risk tensor")
    if tensor.n_regions != params.pi.shape[0]:
        raise DataError(f"shape mismatch: tensor has {tensor.n_regions} regions, params {params.pi.shape[0]}")
    values = tensor.values
    scaled = np.clip(values / params.scale, 0.0, 1.0)
    out = np.where(values > 0, scaled, params.pi[:, None])
    return RiskTensor(out, "pkde", tensor.interval_hours)


def scale_only(tensor: RiskTensor, scale: float) -> RiskTensor:
    """Transform used when PKDE is switched off: zeros stay zero."""
    return RiskTensor(np.clip(tensor.values / scale, 0.0, 1.0), "pkde", tensor.interval_hours)


def to_raw_scale(values: np.ndarray, scale: float) -> np.ndarray:
    """Map transformed predictions back onto the risk-score scale."""
    return np.clip(values, 0.0, None) * scale
