"""Trainable color models and the binary model-file container.

Two model families live here: quantized RGB histograms (shared by the
posterior classifier and the log-ratio lookup table) and per-class
diagonal Gaussian mixtures fitted by EM. Laplace smoothing (eps=1) and
the variance floor keep every posterior strictly inside (0, 1), so
untrained colors come out neutral rather than undefined.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    FormatError,
    TooFewSamples,
    VersionError,
)
from .imageio import NONSKIN, SKIN, load_image, load_mask
from .rules import CheddadModel
from .spatial import LdaModel

SMOOTHING = 1.0
VARIANCE_FLOOR = 1.0

_TINY = np.nextafter(0.0, 1.0)
_BELOW_ONE = np.nextafter(1.0, 0.0)


def bin_shift(bins):
    """Bit shift turning an 8-bit channel into a bin coordinate."""
    if bins < 2 or bins > 256 or bins & (bins - 1):
        raise ValueError(f"bins per channel must be a power of two in [2, 256], got {bins}")
    return 8 - (int(bins).bit_length() - 1)


def quantize(rgb, bins):
    """Flattened histogram bin index for RGB triples of any leading shape."""
    shift = bin_shift(bins)
    x = np.asarray(rgb, dtype=np.uint8)
    r = (x[..., 0] >> shift).astype(np.int64)
    g = (x[..., 1] >> shift).astype(np.int64)
    b = (x[..., 2] >> shift).astype(np.int64)
    return (r * bins + g) * bins + b


@dataclass(eq=False)
class HistogramModel:
    """Per-class pixel counts on the quantized RGB lattice."""

    bins: int
    skin_counts: np.ndarray
    nonskin_counts: np.ndarray
    _tables: dict = field(default=None, init=False, repr=False, compare=False)

    @property
    def skin_total(self):
        return int(self.skin_counts.sum())

    @property
    def nonskin_total(self):
        return int(self.nonskin_counts.sum())

    @property
    def skin_prior(self):
        return self.skin_total / (self.skin_total + self.nonskin_total)

    def frequency_tables(self):
        """Laplace-smoothed per-bin frequencies (f_skin, f_nonskin)."""
        if self._tables is None:
            cells = self.bins**3
            f_s = (self.skin_counts + SMOOTHING) / (self.skin_total + SMOOTHING * cells)
            f_n = (self.nonskin_counts + SMOOTHING) / (
                self.nonskin_total + SMOOTHING * cells
            )
            self._tables = {"skin": f_s, "nonskin": f_n}
        return self._tables["skin"], self._tables["nonskin"]


def train_histogram(entries, bins=32):
    """Accumulate every non-DONTCARE pixel of the manifest into per-class
    histogram counts.

    Counts are order-insensitive, so the result does not depend on the
    manifest line order.
    """
    cells = bins**3
    skin = np.zeros(cells, dtype=np.int64)
    nonskin = np.zeros(cells, dtype=np.int64)
    for entry in entries:
        img = load_image(entry.image_path)
        mask = load_mask(entry.mask_path)
        if img.shape[:2] != mask.shape:
            raise DimensionMismatch(
                f"{entry.image_path} {img.shape[:2]} vs {entry.mask_path} {mask.shape}"
            )
        idx = quantize(img.reshape(-1, 3), bins)
        labels = mask.reshape(-1)
        skin += np.bincount(idx[labels == SKIN], minlength=cells)
        nonskin += np.bincount(idx[labels == NONSKIN], minlength=cells)
    if skin.sum() + nonskin.sum() == 0:
        raise EmptyTrainingSet("manifest contributed no skin or non-skin pixels")
    return HistogramModel(bins=bins, skin_counts=skin, nonskin_counts=nonskin)


def bayes_posterior(model, rgb):
    """P(skin | color) from smoothed class frequencies and the training prior.

    Accepts a single triple or any (..., 3) stack and returns matching
    leading dimensions; values are strictly inside (0, 1).
    """
    f_s, f_n = model.frequency_tables()
    idx = quantize(rgb, model.bins)
    prior = model.skin_prior
    num = f_s[idx] * prior
    return num / (num + f_n[idx] * (1.0 - prior))


def spl_logratio(model, rgb):
    """log2(f_skin / f_nonskin) per pixel; classify with l > tau (strict)."""
    f_s, f_n = model.frequency_tables()
    idx = quantize(rgb, model.bins)
    return np.log2(f_s[idx] / f_n[idx])


@dataclass(eq=False)
class GaussianMixture:
    """Diagonal-covariance mixture over RGB."""

    weights: np.ndarray  # (K,), non-negative, sums to 1
    means: np.ndarray  # (K, 3)
    variances: np.ndarray  # (K, 3), each >= the variance floor

    @property
    def n_components(self):
        return len(self.weights)

    def log_density(self, rgb):
        x = np.asarray(rgb, dtype=np.float64)
        diff = x[..., None, :] - self.means
        quad = (diff * diff / self.variances).sum(axis=-1)
        logdet = np.log(2.0 * np.pi * self.variances).sum(axis=-1)
        comp = np.log(np.maximum(self.weights, 1e-300)) - 0.5 * (logdet + quad)
        return logsumexp(comp, axis=-1)


@dataclass(eq=False)
class GmmModel:
    """Skin and non-skin mixtures plus the training class prior."""

    skin: GaussianMixture
    nonskin: GaussianMixture
    skin_prior: float


def _kmeans_pp_centers(x, k, rng):
    # Standard k-means++ seeding: next center drawn with probability
    # proportional to squared distance from the chosen set.
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(len(x))]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i] = x[rng.integers(len(x))]
        else:
            centers[i] = x[rng.choice(len(x), p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[i]) ** 2).sum(axis=1))
    return centers


def _log_joint(x, weights, means, variances):
    diff = x[:, None, :] - means[None, :, :]
    quad = (diff * diff / variances[None, :, :]).sum(axis=2)
    logdet = np.log(2.0 * np.pi * variances).sum(axis=1)
    return np.log(np.maximum(weights, 1e-300)) - 0.5 * (logdet + quad)


def fit_mixture(samples, k, seed=0, max_iter=200, tol=1e-6, variance_floor=VARIANCE_FLOOR):
    """Fit one diagonal-covariance mixture by EM.

    Seeded k-means++ initialization, variance floor in the M-step, stop
    when the mean per-sample log-likelihood gains less than `tol` or
    after `max_iter` updates. Returns (mixture, log-likelihood trace);
    the trace is non-decreasing because the floored M-step still
    maximizes the constrained expected complete-data log-likelihood.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"samples must be (N, 3), got shape {x.shape}")
    if k < 1:
        raise ValueError(f"component count must be positive, got {k}")
    if len(x) < k:
        raise TooFewSamples(f"{len(x)} samples cannot support {k} components")
    rng = np.random.default_rng(seed)
    means = _kmeans_pp_centers(x, k, rng)
    variances = np.tile(np.maximum(x.var(axis=0), variance_floor), (k, 1))
    weights = np.full(k, 1.0 / k)
    trace = []
    previous = -np.inf
    for _ in range(max_iter + 1):
        joint = _log_joint(x, weights, means, variances)
        norm = logsumexp(joint, axis=1)
        ll = float(norm.mean())
        trace.append(ll)
        if ll - previous < tol:
            break
        previous = ll
        resp = np.exp(joint - norm[:, None])
        occupancy = resp.sum(axis=0)
        for j in range(k):
            if occupancy[j] < 1e-10:
                continue  # starved component keeps its parameters
            mu = resp[:, j] @ x / occupancy[j]
            var = resp[:, j] @ (x - mu) ** 2 / occupancy[j]
            means[j] = mu
            variances[j] = np.maximum(var, variance_floor)
        weights = occupancy / len(x)
    return GaussianMixture(weights=weights, means=means, variances=variances), np.asarray(trace)


def train_gmm(skin_samples, nonskin_samples, k=16, seed=0, **fit_kwargs):
    """Fit the two class mixtures; the non-skin fit uses seed+1 so one
    seed determines the whole model."""
    skin_mix, _ = fit_mixture(skin_samples, k, seed=seed, **fit_kwargs)
    nonskin_mix, _ = fit_mixture(nonskin_samples, k, seed=seed + 1, **fit_kwargs)
    n_s = len(np.asarray(skin_samples))
    n_n = len(np.asarray(nonskin_samples))
    return GmmModel(skin=skin_mix, nonskin=nonskin_mix, skin_prior=n_s / (n_s + n_n))


def gmm_posterior(model, rgb, skin_prior=None, chunk=1 << 16):
    """P(skin | color) from the two mixture densities and a prior.

    Defaults to the training prior; the computation stays in log space
    and the result is clipped to the open interval (0, 1).
    """
    prior = model.skin_prior if skin_prior is None else float(skin_prior)
    if not 0.0 < prior < 1.0:
        raise ValueError(f"skin prior must be inside (0, 1), got {prior}")
    x = np.asarray(rgb, dtype=np.float64)
    lead = x.shape[:-1]
    flat = x.reshape(-1, 3)
    bias = np.log(prior) - np.log1p(-prior)
    out = np.empty(len(flat))
    for start in range(0, len(flat), chunk):
        part = flat[start : start + chunk]
        t = bias + model.skin.log_density(part) - model.nonskin.log_density(part)
        out[start : start + chunk] = expit(t)
    out = np.clip(out, _TINY, _BELOW_ONE)
    return out.reshape(lead) if lead else float(out[0])


# ---------------------------------------------------------------------------
# Model-file container: little-endian, magic "SKND", versioned.
#
#   offset  size  field
#        0     4  magic b"SKND"
#        4     2  format version (u16) = 1
#        6     2  model type tag (u16): 1 histogram, 2 gmm, 3 cheddad, 4 lda
#        8     -  parameter block, per type:
#   histogram: u32 bins; i8[bins^3] skin counts; i8[bins^3] nonskin counts
#   gmm:       f8 skin prior; per class (skin then nonskin):
#              u32 K; f8[K] weights; f8[K*3] means; f8[K*3] variances
#   cheddad:   f8 e_lo; f8 e_hi; f8 e_mean; f8 e_std
#   lda:       u32 dim; f8[dim] w; f8 offset; f8 scale
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"SKND"
MODEL_VERSION = 1

_TAG_HISTOGRAM = 1
_TAG_GMM = 2
_TAG_CHEDDAD = 3
_TAG_LDA = 4

MODEL_KINDS = {
    HistogramModel: "histogram",
    GmmModel: "gmm",
    CheddadModel: "cheddad",
    LdaModel: "lda",
}


def _pack_mixture(mix):
    return b"".join(
        (
            struct.pack("<I", mix.n_components),
            np.asarray(mix.weights, dtype="<f8").tobytes(),
            np.asarray(mix.means, dtype="<f8").tobytes(),
            np.asarray(mix.variances, dtype="<f8").tobytes(),
        )
    )


def save_model(model):
    """Serialize a trained model to bytes; load_model inverts bit-exactly."""
    if isinstance(model, HistogramModel):
        tag = _TAG_HISTOGRAM
        payload = b"".join(
            (
                struct.pack("<I", model.bins),
                np.asarray(model.skin_counts, dtype="<i8").tobytes(),
                np.asarray(model.nonskin_counts, dtype="<i8").tobytes(),
            )
        )
    elif isinstance(model, GmmModel):
        tag = _TAG_GMM
        payload = (
            struct.pack("<d", model.skin_prior)
            + _pack_mixture(model.skin)
            + _pack_mixture(model.nonskin)
        )
    elif isinstance(model, CheddadModel):
        tag = _TAG_CHEDDAD
        payload = struct.pack("<4d", model.e_lo, model.e_hi, model.e_mean, model.e_std)
    elif isinstance(model, LdaModel):
        tag = _TAG_LDA
        payload = (
            struct.pack("<I", len(model.w))
            + np.asarray(model.w, dtype="<f8").tobytes()
            + struct.pack("<2d", model.offset, model.scale)
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return MODEL_MAGIC + struct.pack("<HH", MODEL_VERSION, tag) + payload


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("model file truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype).copy()


def _read_mixture(r):
    (k,) = r.unpack("<I")
    if k < 1:
        raise FormatError("mixture must have at least one component")
    weights = r.array("<f8", k)
    means = r.array("<f8", 3 * k).reshape(k, 3)
    variances = r.array("<f8", 3 * k).reshape(k, 3)
    return GaussianMixture(weights=weights, means=means, variances=variances)


def load_model(data):
    """Inverse of save_model; rejects bad magic, versions and truncation."""
    r = _Reader(data)
    if r.take(4) != MODEL_MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, tag = r.unpack("<HH")
    if version != MODEL_VERSION:
        raise VersionError(f"unsupported model format version {version}")
    if tag == _TAG_HISTOGRAM:
        (bins,) = r.unpack("<I")
        cells = bins**3
        model = HistogramModel(
            bins=bins,
            skin_counts=r.array("<i8", cells),
            nonskin_counts=r.array("<i8", cells),
        )
    elif tag == _TAG_GMM:
        (prior,) = r.unpack("<d")
        model = GmmModel(skin=_read_mixture(r), nonskin=_read_mixture(r), skin_prior=prior)
    elif tag == _TAG_CHEDDAD:
        e_lo, e_hi, e_mean, e_std = r.unpack("<4d")
        model = CheddadModel(e_lo=e_lo, e_hi=e_hi, e_mean=e_mean, e_std=e_std)
    elif tag == _TAG_LDA:
        (dim,) = r.unpack("<I")
        w = r.array("<f8", dim)
        offset, scale = r.unpack("<2d")
        model = LdaModel(w=w, offset=offset, scale=scale)
    else:
        raise FormatError(f"unknown model type tag {tag}")
    if r.pos != len(data):
        raise FormatError("trailing bytes after model payload")
    return model


def save_model_file(model, path):
    with open(path, "wb") as fh:
        fh.write(save_model(model))


def load_model_file(path):
    with open(path, "rb") as fh:
        return load_model(fh.read())
