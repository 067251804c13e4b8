"""Pixel-level color transforms used by the detectors.

All transforms are pure, vectorized over any leading shape and computed
in floating point (no intermediate 8-bit quantization). Inputs are RGB
triples: a single (3,) vector or an (..., 3) stack.
"""

import numpy as np

# Full-range BT.601: chroma centered at 128, not studio swing, because
# the skin-cluster rules downstream assume [0, 255] chroma.
_Y_WEIGHTS = np.array([0.299, 0.587, 0.114])
_CB_WEIGHTS = np.array([-0.168736, -0.331264, 0.5])
_CR_WEIGHTS = np.array([0.5, -0.418688, -0.081312])

# Luma weights for the 1-D error signal; the "non-red" counterpart of a
# pixel is max(G, B).
_GRAY_WEIGHTS = np.array([0.2989, 0.5870, 0.1140])


def rgb_to_ycbcr(rgb):
    """Map RGB to full-range YCbCr, clamped to [0, 255] per channel."""
    x = np.asarray(rgb, dtype=np.float64)
    y = x @ _Y_WEIGHTS
    cb = 128.0 + x @ _CB_WEIGHTS
    cr = 128.0 + x @ _CR_WEIGHTS
    return np.clip(np.stack([y, cb, cr], axis=-1), 0.0, 255.0)


def chen_transform(rgb):
    """Channel differences (sR, sG, sB) = (R-G, G-B, R-B) as exact ints."""
    x = np.asarray(rgb).astype(np.int16)
    sr = x[..., 0] - x[..., 1]
    sg = x[..., 1] - x[..., 2]
    sb = x[..., 0] - x[..., 2]
    return np.stack([sr, sg, sb], axis=-1)


def cheddad_e(rgb):
    """1-D error signal: luma minus the brighter of G and B, on [0,1] inputs.

    Returns values in [-1, 1]; skin tones land in a narrow positive band
    because R dominates G and B.
    """
    x = np.asarray(rgb, dtype=np.float64) / 255.0
    gray = x @ _GRAY_WEIGHTS
    return gray - np.maximum(x[..., 1], x[..., 2])
