"""Spatial-analysis detectors: seed extraction, shortest-route skinness
propagation over the pixel grid, probability-map texture features with a
Fisher discriminant, and the self-adaptive variant.

Propagation runs on the 8-connected grid. Entering pixel x costs
255*(1-p(x)) per step, scaled by sqrt(2) for diagonal moves, so distance
thresholds live on a 0-255-like scale; pixels never reached stay at
+inf and are non-skin.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.special import expit

from .colorspace import rgb_to_ycbcr
from .errors import TooFewSamples
from .imageio import NONSKIN, SKIN, require_same_shape, validate_tau

SQRT2 = math.sqrt(2.0)

TEXTURE_KERNEL_SIZES = (3, 5, 7, 9)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def extract_seeds_fixed(pmap, q=230):
    """Seed every pixel whose probability reaches q/255."""
    q = validate_tau(q)
    return np.asarray(pmap, dtype=np.float64) >= q / 255.0


def extract_seeds_adaptive(pmap, floor=0.5, percentile=95.0, min_component_fraction=1e-4):
    """Per-image seed selection without a fixed threshold.

    The cutoff is max(floor, the image's `percentile` probability value);
    connected seed components covering less than `min_component_fraction`
    of the image area are discarded as noise.
    """
    pmap = np.asarray(pmap, dtype=np.float64)
    threshold = max(floor, float(np.percentile(pmap, percentile)))
    seeds = pmap >= threshold
    if not seeds.any():
        return seeds
    labels, count = ndimage.label(seeds, structure=_EIGHT_CONNECTED)
    min_size = min_component_fraction * pmap.size
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    small = sizes < min_size
    small[0] = False
    if small.any():
        seeds[small[labels]] = False
    return seeds


def propagate(pmap, seeds):
    """Exact multi-source shortest-path distances from the seed set.

    Seeds are at distance 0; with no seeds every pixel is unreachable
    (+inf). Edge u->v costs 255*(1-p(v)) times the step length (1 axial,
    sqrt(2) diagonal).
    """
    pmap = np.asarray(pmap, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=bool)
    require_same_shape(pmap, seeds, "probability map vs seeds")
    h, w = pmap.shape
    if not seeds.any():
        return np.full((h, w), np.inf)
    enter = 255.0 * (1.0 - pmap)
    index = np.arange(h * w).reshape(h, w)
    rows, cols, data = [], [], []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            length = SQRT2 if dy and dx else 1.0
            src_y = slice(max(0, -dy), h - max(0, dy))
            src_x = slice(max(0, -dx), w - max(0, dx))
            dst_y = slice(max(0, dy), h - max(0, -dy))
            dst_x = slice(max(0, dx), w - max(0, -dx))
            rows.append(index[src_y, src_x].ravel())
            cols.append(index[dst_y, dst_x].ravel())
            data.append((enter[dst_y, dst_x] * length).ravel())
    graph = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(h * w, h * w),
    )
    dist = dijkstra(graph, directed=True, indices=np.flatnonzero(seeds.ravel()), min_only=True)
    return dist.reshape(h, w)


def _distance_mask(dist, tau):
    tau = validate_tau(tau)
    return np.where(dist <= tau, SKIN, NONSKIN).astype(np.uint8)


def sa1_detect(img, base, tau, seed_q=230):
    """Propagation from fixed-threshold seeds of the base probability map.

    `base` maps an RGB image to a probability map. A pixel is skin iff
    its propagation distance is at most tau.
    """
    pmap = base(img)
    seeds = extract_seeds_fixed(pmap, seed_q)
    return _distance_mask(propagate(pmap, seeds), tau)


def texture_features(pmap, kernel_sizes=TEXTURE_KERNEL_SIZES, block_rows=64):
    """Neighborhood statistics of the probability map, 4 per kernel size.

    For each odd kernel size the per-pixel features are (median, min,
    max-min, population std) of the k x k window with edge-replication
    padding; the default four sizes give 16 features per pixel, ordered
    kernel-major. Windows are materialized in row blocks to bound memory.
    """
    pmap = np.asarray(pmap, dtype=np.float64)
    h, w = pmap.shape
    out = np.empty((h, w, 4 * len(kernel_sizes)))
    for i, k in enumerate(kernel_sizes):
        if k < 1 or k % 2 == 0:
            raise ValueError(f"kernel sizes must be odd, got {k}")
        r = k // 2
        padded = np.pad(pmap, r, mode="edge")
        for y0 in range(0, h, block_rows):
            y1 = min(h, y0 + block_rows)
            windows = np.lib.stride_tricks.sliding_window_view(
                padded[y0 : y1 + 2 * r, :], (k, k)
            ).reshape(y1 - y0, w, k * k)
            lo = windows.min(axis=-1)
            span = windows.max(axis=-1) - lo
            med = np.median(windows, axis=-1)
            # Shift by the window minimum before the moment computation:
            # variance is shift-invariant, and a constant window then
            # yields exactly zero instead of rounding noise.
            shifted = windows - lo[..., None]
            m1 = shifted.mean(axis=-1)
            m2 = (shifted * shifted).mean(axis=-1)
            std = np.sqrt(np.maximum(m2 - m1 * m1, 0.0))
            out[y0:y1, :, 4 * i + 0] = med
            out[y0:y1, :, 4 * i + 1] = lo
            out[y0:y1, :, 4 * i + 2] = span
            out[y0:y1, :, 4 * i + 3] = std
    return out


@dataclass(eq=False)
class LdaModel:
    """Fisher projection with a logistic squashing to [0, 1].

    w is unit-norm and oriented so skin projects positive; offset/scale
    place the logistic midpoint between the class means, scaled by the
    pooled projection spread.
    """

    w: np.ndarray
    offset: float
    scale: float


def train_lda(skin_features, nonskin_features, ridge=1e-6):
    """Closed-form two-class Fisher discriminant on feature vectors.

    The within-class scatter is regularized by ridge*I so degenerate
    scatters stay solvable; a near-zero projection separation triggers a
    quality warning instead of an error.
    """
    xs = np.asarray(skin_features, dtype=np.float64)
    xn = np.asarray(nonskin_features, dtype=np.float64)
    if xs.ndim != 2 or xn.ndim != 2 or xs.shape[1] != xn.shape[1]:
        raise ValueError("feature sets must be 2-D with a common dimension")
    if len(xs) == 0 or len(xn) == 0:
        raise TooFewSamples("both classes need at least one feature vector")
    dim = xs.shape[1]
    mu_s = xs.mean(axis=0)
    mu_n = xn.mean(axis=0)
    centered_s = xs - mu_s
    centered_n = xn - mu_n
    scatter = centered_s.T @ centered_s + centered_n.T @ centered_n
    scatter[np.diag_indices(dim)] += ridge
    w = np.linalg.solve(scatter, mu_s - mu_n)
    norm = np.linalg.norm(w)
    if norm == 0.0:  # identical class means: direction is arbitrary
        w = np.zeros(dim)
        w[0] = 1.0
    else:
        w = w / norm
    if w @ (mu_s - mu_n) < 0.0:
        w = -w
    proj_s = xs @ w
    proj_n = xn @ w
    within = np.concatenate([proj_s - proj_s.mean(), proj_n - proj_n.mean()])
    scale = max(float(np.sqrt((within * within).mean())), 1e-6)
    separation = float(proj_s.mean() - proj_n.mean())
    if abs(separation) < 1e-6 * scale:
        warnings.warn(
            "LDA classes project to nearly identical means; the discriminant "
            "carries almost no signal",
            stacklevel=2,
        )
    offset = float((proj_s.mean() + proj_n.mean()) / 2.0)
    return LdaModel(w=w, offset=offset, scale=scale)


def lda_probability(model, features):
    """Squash projected feature vectors to per-pixel probabilities."""
    t = np.asarray(features, dtype=np.float64) @ model.w
    return expit((t - model.offset) / model.scale)


def sa2_detect(img, base, lda, tau, seed_q=230):
    """Texture-feature pipeline: base map -> neighborhood statistics ->
    Fisher projection squashed to a new map -> fixed seeds -> propagation
    -> distance threshold."""
    pmap = base(img)
    features = texture_features(pmap)
    discriminant_map = lda_probability(lda, features)
    seeds = extract_seeds_fixed(discriminant_map, seed_q)
    return _distance_mask(propagate(discriminant_map, seeds), tau)


def sa3_detect(img, base, tau, blend=0.5, chroma_variance_floor=1.0):
    """Self-adaptive variant: adaptive seeds plus a per-image local
    chroma model.

    Seed pixels fit a diagonal Gaussian on (Cb, Cr); its peak-normalized
    density blends 50/50 with the base map before propagation. No seeds
    means no skin.
    """
    pmap = base(img)
    seeds = extract_seeds_adaptive(pmap)
    if not seeds.any():
        return np.full(pmap.shape, NONSKIN, dtype=np.uint8)
    ycc = rgb_to_ycbcr(img)
    cb, cr = ycc[..., 1], ycc[..., 2]
    mu_cb = cb[seeds].mean()
    mu_cr = cr[seeds].mean()
    var_cb = max(cb[seeds].var(), chroma_variance_floor)
    var_cr = max(cr[seeds].var(), chroma_variance_floor)
    d2 = (cb - mu_cb) ** 2 / var_cb + (cr - mu_cr) ** 2 / var_cr
    local = np.exp(-0.5 * d2)
    blended = blend * pmap + (1.0 - blend) * local
    return _distance_mask(propagate(blended, seeds), tau)
