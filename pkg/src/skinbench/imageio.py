"""Raster types, PNG/JPEG decoding and the mask/probability conventions.

Everything downstream works on plain numpy arrays, row-major:

* image           -- (H, W, 3) uint8 RGB
* probability map -- (H, W) float64 in [0, 1]
* label mask      -- (H, W) uint8 holding NONSKIN / SKIN / DONTCARE

Masks persist as 8-bit grayscale PNG (SKIN=255, NONSKIN=0, DONTCARE=128).
Loading bands gray values so imprecisely annotated ground truth still
maps onto the three classes: >=192 skin, <=63 non-skin, don't-care in
between. Probability maps persist as round(255*v) gray PNG, lossy by
design.
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionMismatch

NONSKIN = 0
SKIN = 1
DONTCARE = 2

SKIN_GRAY = 255
NONSKIN_GRAY = 0
DONTCARE_GRAY = 128

# Banding thresholds applied when reading ground-truth masks.
_SKIN_MIN_GRAY = 192
_NONSKIN_MAX_GRAY = 63

_MASK_TO_GRAY = np.array([NONSKIN_GRAY, SKIN_GRAY, DONTCARE_GRAY], dtype=np.uint8)


def load_image(path):
    """Decode a PNG/JPEG file into an (H, W, 3) uint8 RGB array.

    Grayscale files are replicated across channels, alpha is dropped.
    Raises OSError for missing/unreadable files and DecodeError for
    files that are not decodable images.
    """
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image") from exc


def load_mask(path):
    """Read an 8-bit gray PNG as a label mask using the banding rule."""
    try:
        with Image.open(path) as im:
            gray = np.asarray(im.convert("L"))
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image") from exc
    mask = np.full(gray.shape, DONTCARE, dtype=np.uint8)
    mask[gray >= _SKIN_MIN_GRAY] = SKIN
    mask[gray <= _NONSKIN_MAX_GRAY] = NONSKIN
    return mask


def save_mask(mask, path):
    """Write a label mask as 8-bit gray PNG (255/0/128 encoding)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.max(initial=0) > DONTCARE:
        raise ValueError("mask contains values outside {NONSKIN, SKIN, DONTCARE}")
    Image.fromarray(_MASK_TO_GRAY[mask], mode="L").save(path, format="PNG")


def threshold_map(pmap, tau):
    """Binarize a probability map: SKIN iff value >= tau/255.

    The comparison is inclusive so tau=0 accepts every pixel, giving the
    sweep a well-defined endpoint.
    """
    tau = validate_tau(tau)
    pmap = np.asarray(pmap, dtype=np.float64)
    return np.where(pmap >= tau / 255.0, SKIN, NONSKIN).astype(np.uint8)


def save_probability_map(pmap, path):
    """Write a probability map as round(255*v) 8-bit gray PNG."""
    pmap = np.asarray(pmap, dtype=np.float64)
    if pmap.ndim != 2:
        raise ValueError(f"probability map must be 2-D, got shape {pmap.shape}")
    if pmap.min(initial=0.0) < 0.0 or pmap.max(initial=0.0) > 1.0:
        raise ValueError("probability values must lie in [0, 1]")
    gray = np.rint(pmap * 255.0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(path, format="PNG")


def load_probability_map(path):
    """Read an 8-bit gray PNG as a probability map (gray / 255)."""
    try:
        with Image.open(path) as im:
            gray = np.asarray(im.convert("L"), dtype=np.float64)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image") from exc
    return gray / 255.0


def validate_tau(tau):
    """Check an 8-bit threshold and return it as int."""
    value = int(tau)
    if value != tau or not 0 <= value <= 255:
        raise ValueError(f"tau must be an integer in [0, 255], got {tau!r}")
    return value


def require_same_shape(a, b, what="raster"):
    """Raise DimensionMismatch unless the two 2-D shapes agree."""
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatch(f"{what}: {a.shape[:2]} vs {b.shape[:2]}")
