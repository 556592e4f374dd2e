"""Naive forecasts used as a sanity floor."""

from typing import Optional, Union

import numpy as np

from risk.windows import SampleWindow


def persistence_baseline(window: Union[SampleWindow, np.ndarray], horizon: Optional[int] = None) -> np.ndarray:
    """Repeat the last input step over the horizon.

    Accepts a SampleWindow (-> (N, tau)) or stacked inputs (W, N, T) with an
    explicit horizon (-> (W, N, tau)).
    """
    if isinstance(window, SampleWindow):
        inputs = window.inputs
        horizon = window.targets.shape[1] if horizon is None else horizon
    else:
        inputs = np.asarray(window)
        if horizon is None:
            raise ValueError("horizon is required for stacked inputs")
    last = inputs[..., -1:]
    return np.repeat(last, horizon, axis=-1)
