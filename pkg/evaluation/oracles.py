"""
Slow, loop-based reference implementations.

Each function recomputes something the fast code does with vectorised numpy or
torch, written as directly as possible so the two can be compared in tests.
"""

import itertools
import math
from typing import Callable, Iterable, List, Sequence, Set

import numpy as np
import torch

from core.schemas import AccidentEvent


# ------------------------- Risk accumulation -------------------------

def risk_accumulate(events: Iterable[AccidentEvent], n_regions: int, n_steps: int) -> np.ndarray:
    grid = np.zeros((n_regions, n_steps))
    for event in events:
        grid[event.region_index][event.time_index] += event.severity
    return grid


# ------------------------- Top-k -------------------------

def topk_row(row: Sequence[float], k: int) -> List[float]:
    """Repeatedly pick the largest remaining value, first occurrence wins."""
    remaining = list(range(len(row)))
    kept = set()
    for _ in range(min(k, len(row))):
        best = remaining[0]
        for i in remaining:
            if row[i] > row[best]:
                best = i
        kept.add(best)
        remaining.remove(best)
    return [row[i] if i in kept else 0.0 for i in range(len(row))]


def topk_set_exhaustive(values: Sequence[float], k: int, candidates: Sequence[int]) -> Set[int]:
    """First k-subset of ``candidates`` (lexicographic) that dominates every outsider."""
    candidates = list(candidates)
    if len(candidates) <= k:
        return set(candidates)
    for subset in itertools.combinations(candidates, k):
        inside = set(subset)
        outside = [i for i in candidates if i not in inside]
        if all(values[i] >= values[j] for i in inside for j in outside):
            return inside
    raise AssertionError("no dominating subset")


# ------------------------- Metrics -------------------------

def rmse_loop(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    n_windows, n_regions, horizon = Y.shape
    step_totals = []
    for j in range(horizon):
        total = 0.0
        for w in range(n_windows):
            for n in range(n_regions):
                total += (Y[w, n, j] - Y_hat[w, n, j]) ** 2
        step_totals.append(total / (n_windows * n_regions))
    return math.sqrt(sum(step_totals) / horizon)


def mae_loop(Y: np.ndarray, Y_hat: np.ndarray) -> float:
    total = 0.0
    count = 0
    for value, estimate in zip(Y.ravel().tolist(), Y_hat.ravel().tolist()):
        total += abs(value - estimate)
        count += 1
    return total / count


def recall_loop(Y: np.ndarray, Y_hat: np.ndarray, k_fraction: float) -> float:
    n_windows, n_regions, horizon = Y.shape
    k = max(1, int(round(k_fraction * n_regions)))
    scores = []
    for w in range(n_windows):
        for j in range(horizon):
            actual = Y[w, :, j].tolist()
            predicted = Y_hat[w, :, j].tolist()
            positives = [n for n in range(n_regions) if actual[n] > 0]
            if not positives:
                continue
            R = topk_set_exhaustive(actual, k, positives)
            R_hat = topk_set_exhaustive(predicted, k, range(n_regions))
            scores.append(len(R & R_hat) / len(R))
    return sum(scores) / len(scores) if scores else float("nan")


# ------------------------- Convolutions -------------------------

def dense_hgcn(E: np.ndarray, H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Hypergraph convolution for one sample: E (N, T, d), H (N, I), W (d, d_out)."""
    n_regions, steps, _ = E.shape
    n_edges = H.shape[1]
    Dv = [sum(H[n, i] for i in range(n_edges)) for n in range(n_regions)]
    De = [sum(H[n, i] for n in range(n_regions)) for i in range(n_edges)]
    out = np.zeros((n_regions, steps, W.shape[1]))
    for t in range(steps):
        M = np.zeros((n_edges, E.shape[2]))
        for i in range(n_edges):
            if De[i] == 0:
                continue
            acc = sum(H[n, i] * E[n, t] for n in range(n_regions))
            M[i] = np.maximum(acc / De[i], 0.0)
        for n in range(n_regions):
            if Dv[n] == 0:
                continue
            acc = sum(H[n, i] * M[i] for i in range(n_edges))
            out[n, t] = np.maximum((acc / math.sqrt(Dv[n])) @ W, 0.0)
    return out


def dense_gcn(E: np.ndarray, A_norm: np.ndarray, W: np.ndarray) -> np.ndarray:
    n_regions, steps, _ = E.shape
    out = np.zeros((n_regions, steps, W.shape[1]))
    for t in range(steps):
        for n in range(n_regions):
            acc = sum(A_norm[n, m] * E[m, t] for m in range(n_regions))
            out[n, t] = np.maximum(acc @ W, 0.0)
    return out


# ------------------------- Gradients -------------------------

def finite_difference_gradient(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central differences of a scalar function, one coordinate at a time."""
    grad = torch.zeros_like(x)
    flat = x.detach().clone().reshape(-1)
    for i in range(flat.numel()):
        original = flat[i].item()
        flat[i] = original + eps
        plus = float(fn(flat.reshape(x.shape)))
        flat[i] = original - eps
        minus = float(fn(flat.reshape(x.shape)))
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * eps)
    return grad


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = 1e-8) -> float:
    scale = max(float(analytic.abs().max()), float(numeric.abs().max()), floor)
    return float((analytic - numeric).abs().max()) / scale
