"""Input checks shared by the estimator front end."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .interval import IntervalVector
from .models import SystemModel, get_model


def check_model(model) -> SystemModel:
    if isinstance(model, SystemModel):
        return model
    if isinstance(model, str):
        return get_model(model)
    raise TypeError(f"model must be a SystemModel or a built-in model name, got {type(model).__name__}")


def check_box(value, dim: int | None = None, name: str = "box") -> IntervalVector:
    """An ``IntervalVector`` from a box or an array of ``[lo, hi]`` rows."""
    if isinstance(value, IntervalVector):
        box = value
    else:
        arr = check_array(value, dtype=float, ensure_2d=True, ensure_min_samples=1, input_name=name)
        if arr.shape[1] != 2:
            raise ValueError(f"{name} must have shape (dim, 2), got {arr.shape}")
        if np.any(arr[:, 0] > arr[:, 1]):
            raise ValueError(f"{name} has a row with lo > hi")
        box = IntervalVector(arr[:, 0], arr[:, 1])
    if dim is not None and len(box) != dim:
        raise ValueError(f"{name} has {len(box)} components, expected {dim}")
    return box


def check_points(Y, n: int) -> np.ndarray:
    Y = check_array(Y, dtype=float, ensure_2d=False)
    Y = np.atleast_2d(Y)
    if Y.shape[1] != n:
        raise ValueError(f"points have {Y.shape[1]} columns, expected {n}")
    return Y
