"""Feature assembly: frame stacking and SpecAugment masking."""

import numpy as np

from ..errors import ContractError


def frame_stack(features, factor):
    """Concatenate ``factor`` consecutive frames; the last window is zero-padded.

    (T_raw, d) -> (ceil(T_raw / factor), factor * d)
    """
    if factor < 1:
        raise ContractError(f"stack factor must be >= 1, got {factor}")
    features = np.asarray(features, dtype=np.float32)
    T_raw, d = features.shape
    T = -(-T_raw // factor)
    padded = np.zeros((T * factor, d), dtype=np.float32)
    padded[:T_raw] = features
    return padded.reshape(T, factor * d)


def frame_unstack(stacked, factor):
    """Inverse of :func:`frame_stack` (padding frames included)."""
    T, width = stacked.shape
    return np.asarray(stacked).reshape(T * factor, width // factor)


def spec_augment(features, n_freq_masks, max_freq_len, n_time_masks, max_time_len, seed):
    """Zero random frequency bands and time spans.

    Mask lengths are uniform on ``[0, max_len]`` and starts uniform over the
    positions where the mask fits. The input is not modified.
    """
    for value in (n_freq_masks, max_freq_len, n_time_masks, max_time_len):
        if value < 0:
            raise ContractError("SpecAugment parameters must be non-negative")
    out = np.array(features, dtype=np.float32, copy=True)
    T, F = out.shape
    rng = np.random.default_rng(seed)
    for _ in range(n_freq_masks):
        width = int(rng.integers(0, min(max_freq_len, F) + 1))
        start = int(rng.integers(0, F - width + 1))
        out[:, start:start + width] = 0.0
    for _ in range(n_time_masks):
        width = int(rng.integers(0, min(max_time_len, T) + 1))
        start = int(rng.integers(0, T - width + 1))
        out[start:start + width, :] = 0.0
    return out
