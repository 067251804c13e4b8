"""Non-trained and lightly trained per-pixel detectors.

Three detectors live here: explicit channel-difference bounds, a 1-D
error-signal interval learned from data, and per-image dynamic YCbCr
clustering. The first two are pure per-pixel maps; the dynamic detector
computes per-image statistics first and labels second.
"""

from dataclasses import dataclass

import numpy as np

from .colorspace import cheddad_e, chen_transform, rgb_to_ycbcr
from .errors import DimensionMismatch, TooFewSamples
from .imageio import NONSKIN, SKIN, load_image, load_mask


@dataclass(frozen=True)
class ChenBounds:
    """Strict bounds on (sR, sG, sB); a pixel is skin iff all three hold.

    sign_flip negates the differences before testing, for experimenting
    with the mirrored convention (the published ranges imply R < G for
    skin, opposite to typical skin chromaticity).
    """

    lo_r: int = -142
    hi_r: int = 18
    lo_g: int = -48
    hi_g: int = 92
    lo_b: int = -32
    hi_b: int = 192
    sign_flip: bool = False

    def __post_init__(self):
        for lo, hi, name in (
            (self.lo_r, self.hi_r, "sR"),
            (self.lo_g, self.hi_g, "sG"),
            (self.lo_b, self.hi_b, "sB"),
        ):
            if lo >= hi:
                raise ValueError(f"{name} bounds must satisfy lo < hi, got ({lo}, {hi})")


def chen_detect(img, bounds=None):
    """Label pixels by strict channel-difference bounds."""
    if bounds is None:
        bounds = ChenBounds()
    s = chen_transform(img)
    if bounds.sign_flip:
        s = -s
    sr, sg, sb = s[..., 0], s[..., 1], s[..., 2]
    skin = (
        (bounds.lo_r < sr) & (sr < bounds.hi_r)
        & (bounds.lo_g < sg) & (sg < bounds.hi_g)
        & (bounds.lo_b < sb) & (sb < bounds.hi_b)
    )
    return np.where(skin, SKIN, NONSKIN).astype(np.uint8)


@dataclass(frozen=True)
class CheddadModel:
    """Skin interval and Gaussian fit on the 1-D error signal."""

    e_lo: float
    e_hi: float
    e_mean: float
    e_std: float

    def __post_init__(self):
        if not self.e_lo < self.e_hi:
            raise ValueError(f"interval must satisfy e_lo < e_hi, got [{self.e_lo}, {self.e_hi}]")
        if not self.e_lo <= self.e_mean <= self.e_hi:
            raise ValueError("e_mean must lie inside [e_lo, e_hi]")
        if self.e_std <= 0:
            raise ValueError("e_std must be positive")


def train_cheddad(entries, mass=0.95, min_skin_pixels=1000):
    """Fit the skin interval as the central `mass` quantile range of
    skin-pixel error values, plus a Gaussian (mean, std) on the same values."""
    if not 0.0 < mass < 1.0:
        raise ValueError(f"mass must be in (0, 1), got {mass}")
    chunks = []
    for entry in entries:
        img = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        if img.shape[:2] != mask.shape:
            raise DimensionMismatch(
                f"{entry.image_path} {img.shape[:2]} vs {entry.mask_path} {mask.shape}"
            )
        chunks.append(cheddad_e(img)[mask == SKIN])
    values = np.concatenate(chunks) if chunks else np.empty(0)
    if values.size < min_skin_pixels:
        raise TooFewSamples(
            f"need at least {min_skin_pixels} skin pixels, got {values.size}"
        )
    tail = (1.0 - mass) / 2.0
    e_lo, e_hi = np.quantile(values, [tail, 1.0 - tail])
    e_mean = float(values.mean())
    e_std = max(float(values.std()), 1e-4)
    if e_lo == e_hi:  # all mass on a single value
        e_lo -= 1e-4
        e_hi += 1e-4
    # Heavy skew can push the mean outside the central-mass interval;
    # widen so the probability peak stays inside it.
    e_lo = min(float(e_lo), e_mean)
    e_hi = max(float(e_hi), e_mean)
    return CheddadModel(e_lo, e_hi, e_mean, e_std)


def cheddad_detect(img, model):
    """Per-pixel skin probability: a Gaussian bump inside the learned
    interval, exactly zero outside it."""
    e = cheddad_e(img)
    z = (e - model.e_mean) / model.e_std
    p = np.exp(-0.5 * z * z)
    inside = (e >= model.e_lo) & (e <= model.e_hi)
    return np.where(inside, p, 0.0)


@dataclass(frozen=True)
class DycParams:
    """Gates and tolerances for the dynamic YCbCr detector."""

    y_lo: float = 16.0
    y_hi: float = 235.0
    cb_lo: float = 77.0
    cb_hi: float = 127.0
    cr_lo: float = 133.0
    cr_hi: float = 173.0
    q: float = 0.05
    delta: float = 12.0

    def __post_init__(self):
        if not 0.0 <= self.y_lo < self.y_hi <= 255.0:
            raise ValueError("luma gate must satisfy 0 <= Y_lo < Y_hi <= 255")
        if self.cb_lo >= self.cb_hi or self.cr_lo >= self.cr_hi:
            raise ValueError("static chroma gates must satisfy lo < hi")
        if not 0.0 < self.q < 0.5:
            raise ValueError(f"quantile q must be in (0, 0.5), got {self.q}")
        if self.delta <= 0.0:
            raise ValueError(f"correlation tolerance must be positive, got {self.delta}")


def dyc_detect(img, params=None):
    """Per-image adaptive skin clustering in (Cb, Cr).

    Candidate pixels (those passing the luma + static chroma gates) fix
    the per-image chroma ranges ([q, 1-q] quantiles) and a linear
    Cr ~ a*Cb + c correlation. Any pixel whose chroma falls inside both
    dynamic ranges and within delta of the correlation line is skin; an
    image with no candidates yields an all-NONSKIN mask.
    """
    if params is None:
        params = DycParams()
    ycc = rgb_to_ycbcr(img)
    y, cb, cr = ycc[..., 0], ycc[..., 1], ycc[..., 2]
    candidates = (
        (y >= params.y_lo) & (y <= params.y_hi)
        & (cb >= params.cb_lo) & (cb <= params.cb_hi)
        & (cr >= params.cr_lo) & (cr <= params.cr_hi)
    )
    out = np.zeros(y.shape, dtype=np.uint8)
    if not candidates.any():
        return out
    cb_cand = cb[candidates]
    cr_cand = cr[candidates]
    cb_lo, cb_hi = np.quantile(cb_cand, [params.q, 1.0 - params.q])
    cr_lo, cr_hi = np.quantile(cr_cand, [params.q, 1.0 - params.q])
    var = cb_cand.var()
    if var < 1e-12:  # all candidates share one Cb: horizontal fit
        slope = 0.0
        intercept = cr_cand.mean()
    else:
        slope = ((cb_cand - cb_cand.mean()) * (cr_cand - cr_cand.mean())).mean() / var
        intercept = cr_cand.mean() - slope * cb_cand.mean()
    residual = np.abs(cr - (slope * cb + intercept))
    accepted = (
        (cb >= cb_lo) & (cb <= cb_hi)
        & (cr >= cr_lo) & (cr <= cr_hi)
        & (residual <= params.delta)
    )
    out[accepted] = SKIN
    return out
