"""Input validation helpers for image-like arrays."""

import numpy as np
from sklearn.utils.validation import check_array


def check_field(field, name="field"):
    """Return ``field`` as a finite 2-D float64 array.

    Raises
    ------
    ValueError
        If the input is not 2-D, is empty, or contains NaN/inf.
    """
    arr = check_array(
        field,
        dtype=np.float64,
        ensure_2d=True,
        ensure_all_finite=True,
        input_name=name,
    )
    return np.ascontiguousarray(arr)


def check_mask(mask, shape=None, name="mask"):
    """Return ``mask`` as a 2-D boolean array, optionally checking its shape."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.all(np.isin(arr, (0, 1))):
            raise ValueError(f"{name} must be boolean or 0/1 valued")
        arr = arr.astype(bool)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_random_seed(seed):
    """Normalize ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if seed is None or isinstance(seed, (int, np.integer)):
        return np.random.default_rng(seed)
    raise TypeError(f"cannot build a random generator from {type(seed).__name__}")
