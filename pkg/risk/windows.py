"""
Sliding-window samples with a chronological train / val / test split.

A window belongs to the split whose time range contains its last target index.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.errors import DataError
from risk.scores import RiskTensor


@dataclass(frozen=True)
class SampleWindow:
    inputs: np.ndarray  # (N, T)
    targets: np.ndarray  # (N, tau)
    external_met: np.ndarray  # (N, T, d_M)
    external_cal: np.ndarray  # (N, T, d_C)
    window_start: int

    @property
    def input_range(self) -> Tuple[int, int]:
        return self.window_start, self.window_start + self.inputs.shape[1]

    @property
    def target_range(self) -> Tuple[int, int]:
        start = self.window_start + self.inputs.shape[1]
        return start, start + self.targets.shape[1]


@dataclass
class WindowSplits:
    train: List[SampleWindow] = field(default_factory=list)
    val: List[SampleWindow] = field(default_factory=list)
    test: List[SampleWindow] = field(default_factory=list)
    boundaries: Tuple[int, int] = (0, 0)

    @property
    def counts(self) -> Dict[str, int]:
        return {"train": len(self.train), "val": len(self.val), "test": len(self.test)}

    def __getitem__(self, split: str) -> List[SampleWindow]:
        if split not in ("train", "val", "test"):
            raise KeyError(split)
        return getattr(self, split)


def split_boundaries(n_steps: int, train_ratio: float, val_ratio: float) -> Tuple[int, int]:
    train_end = int(round(train_ratio * n_steps))
    val_end = int(round((train_ratio + val_ratio) * n_steps))
    return train_end, val_end


def window_starts(n_steps: int, input_steps: int, horizon: int) -> range:
    minimum = input_steps + horizon
    if n_steps < minimum:
        raise DataError(f"time axis too short: {n_steps} steps, need at least {minimum} (T + tau)")
    return range(n_steps - minimum + 1)


def make_windows(
    tensor: RiskTensor,
    externals: Optional[Tuple[np.ndarray, np.ndarray]],
    input_steps: int,
    horizon: int,
    split: Tuple[float, float] = (0.8, 0.1),
    targets: Optional[RiskTensor] = None,
) -> WindowSplits:
    """Slice stride-1 windows; ``targets`` defaults to ``tensor`` itself.

    Inputs are taken from ``tensor`` (usually PKDE-transformed) and targets
    from ``targets`` (usually the same transform; evaluation uses raw).
    """
    targets = targets if targets is not None else tensor
    n_regions, n_steps = tensor.values.shape
    if targets.values.shape != tensor.values.shape:
        raise DataError("inputs and targets tensors differ in shape")
    starts = window_starts(n_steps, input_steps, horizon)

    if externals is None:
        met = np.zeros((n_regions, n_steps, 0))
        cal = np.zeros((n_regions, n_steps, 0))
    else:
        met, cal = externals
        if met.shape[:2] != (n_regions, n_steps) or cal.shape[:2] != (n_regions, n_steps):
            raise DataError("external features are not aligned with the risk tensor")

    train_end, val_end = split_boundaries(n_steps, *split)
    splits = WindowSplits(boundaries=(train_end, val_end))
    for start in starts:
        mid = start + input_steps
        last_target = mid + horizon - 1
        window = SampleWindow(
            inputs=tensor.values[:, start:mid],
            targets=targets.values[:, mid:mid + horizon],
            external_met=met[:, start:mid],
            external_cal=cal[:, start:mid],
            window_start=start,
        )
        if last_target < train_end:
            splits.train.append(window)
        elif last_target < val_end:
            splits.val.append(window)
        else:
            splits.test.append(window)
    return splits


def stack_windows(windows: List[SampleWindow]) -> Dict[str, np.ndarray]:
    """Batch-major arrays for a list of windows."""
    if not windows:
        raise DataError("cannot stack an empty window list")
    return {
        "inputs": np.stack([w.inputs for w in windows]),
        "targets": np.stack([w.targets for w in windows]),
        "met": np.stack([w.external_met for w in windows]),
        "cal": np.stack([w.external_cal for w in windows]),
        "starts": np.array([w.window_start for w in windows], dtype=np.int64),
    }
