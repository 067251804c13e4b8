import math

import numpy as np
import pytest
from helpers import write_gray, write_manifest, write_rgb

from skinbench.errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    FormatError,
    TooFewSamples,
    VersionError,
)
from skinbench.evaluation import parse_manifest
from skinbench.models import (
    GaussianMixture,
    GmmModel,
    HistogramModel,
    bayes_posterior,
    fit_mixture,
    gmm_posterior,
    load_model,
    quantize,
    save_model,
    spl_logratio,
    train_gmm,
    train_histogram,
)
from skinbench.rules import CheddadModel
from skinbench.spatial import LdaModel


def _manifest_from_pairs(tmp_path, pairs):
    """Write (pixels, mask) image pairs and a manifest pointing at them."""
    rows = []
    for i, (pixels, mask) in enumerate(pairs):
        img_path = tmp_path / f"img{i}.png"
        mask_path = tmp_path / f"mask{i}.png"
        write_rgb(img_path, pixels)
        write_gray(mask_path, mask)
        rows.append((img_path.name, mask_path.name))
    manifest = tmp_path / "train.tsv"
    write_manifest(manifest, rows)
    return parse_manifest(manifest)


def test_quantize_matches_index_formula():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(200, 3), dtype=np.uint8)
    for bins in (2, 32, 256):
        shift = 8 - int(math.log2(bins))
        idx = quantize(pixels, bins)
        expected = (
            (pixels[:, 0].astype(int) >> shift) * bins * bins
            + (pixels[:, 1].astype(int) >> shift) * bins
            + (pixels[:, 2].astype(int) >> shift)
        )
        assert np.array_equal(idx, expected)


def test_quantize_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        quantize([0, 0, 0], 3)


def test_train_histogram_hand_accumulation(tmp_path):
    entries = _manifest_from_pairs(
        tmp_path, [([[(255, 0, 0), (0, 255, 0)]], [[255, 0]])]
    )
    model = train_histogram(entries, bins=2)
    assert model.skin_counts[quantize([255, 0, 0], 2)] == 1
    assert model.skin_counts.sum() == 1
    assert model.nonskin_counts[quantize([0, 255, 0], 2)] == 1
    assert model.nonskin_counts.sum() == 1
    assert model.skin_prior == 0.5


def test_train_histogram_all_dontcare_raises(tmp_path):
    entries = _manifest_from_pairs(tmp_path, [([[(10, 10, 10)]], [[128]])])
    with pytest.raises(EmptyTrainingSet):
        train_histogram(entries, bins=2)


def test_train_histogram_dimension_mismatch(tmp_path):
    entries = _manifest_from_pairs(
        tmp_path, [([[(1, 2, 3), (4, 5, 6)]], [[255]])]
    )
    with pytest.raises(DimensionMismatch):
        train_histogram(entries, bins=2)


def test_train_histogram_duplication_doubles_counts_keeps_posterior(tmp_path):
    rng = np.random.default_rng(1)
    pixels = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
    mask = rng.choice([0, 255], size=(4, 5)).astype(np.uint8)
    entries = _manifest_from_pairs(tmp_path, [(pixels, mask)])
    single = train_histogram(entries, bins=32)
    double = train_histogram(entries + entries, bins=32)
    assert np.array_equal(double.skin_counts, 2 * single.skin_counts)
    assert np.array_equal(double.nonskin_counts, 2 * single.nonskin_counts)
    probe = rng.integers(0, 256, size=(50, 3), dtype=np.uint8)
    # Smoothing denominators scale, so posteriors drift only marginally;
    # the prior and the ordering stay put.
    assert double.skin_prior == single.skin_prior
    assert np.allclose(
        bayes_posterior(double, probe), bayes_posterior(single, probe), atol=5e-3
    )


def test_train_histogram_permutation_invariant(tmp_path):
    rng = np.random.default_rng(2)
    pairs = []
    for _ in range(4):
        pixels = rng.integers(0, 256, size=(3, 3, 3), dtype=np.uint8)
        mask = rng.choice([0, 128, 255], size=(3, 3)).astype(np.uint8)
        pairs.append((pixels, mask))
    entries = _manifest_from_pairs(tmp_path, pairs)
    forward = train_histogram(entries, bins=16)
    backward = train_histogram(list(reversed(entries)), bins=16)
    assert np.array_equal(forward.skin_counts, backward.skin_counts)
    assert np.array_equal(forward.nonskin_counts, backward.nonskin_counts)


def _model_with_counts(bins, skin_updates, nonskin_updates):
    cells = bins**3
    skin = np.zeros(cells, dtype=np.int64)
    nonskin = np.zeros(cells, dtype=np.int64)
    for idx, count in skin_updates:
        skin[idx] = count
    for idx, count in nonskin_updates:
        nonskin[idx] = count
    return HistogramModel(bins=bins, skin_counts=skin, nonskin_counts=nonskin)


def test_bayes_posterior_smoothed_hand_value():
    # bins=2: one bin seen 100x as skin, never as non-skin; totals 100/100.
    model = _model_with_counts(2, [(0, 100)], [(7, 100)])
    p = bayes_posterior(model, [0, 0, 0])  # quantizes to bin 0
    # f_s = 101/108, f_n = 1/108, equal priors -> 101/102.
    assert abs(p - 101 / 102) < 1e-12
    assert abs(p - 0.9902) < 1e-4


def test_bayes_posterior_symmetry_and_untrained_bin():
    model = _model_with_counts(2, [(0, 40), (1, 60)], [(0, 40), (2, 60)])
    assert abs(bayes_posterior(model, [0, 0, 0]) - 0.5) < 1e-12  # identical counts
    # Bin 7 (255,255,255) is untrained in both classes: smoothing is neutral.
    assert abs(bayes_posterior(model, [255, 255, 255]) - 0.5) < 1e-12


def test_bayes_posterior_strictly_inside_unit_interval():
    model = _model_with_counts(2, [(0, 10**9)], [(7, 10**9)])
    high = bayes_posterior(model, [0, 0, 0])
    low = bayes_posterior(model, [255, 255, 255])
    assert 0.0 < low < high < 1.0


def test_spl_logratio_values():
    # Equal totals make the smoothing denominators cancel.
    model = _model_with_counts(2, [(0, 3), (1, 5)], [(1, 8)])
    assert abs(spl_logratio(model, [0, 0, 0]) - 2.0) < 1e-12  # ratio (3+1)/(0+1) = 4
    model_eq = _model_with_counts(2, [(0, 7)], [(0, 7)])
    assert spl_logratio(model_eq, [0, 0, 0]) == 0.0


def test_spl_and_bayes_consistent_with_equal_priors():
    rng = np.random.default_rng(3)
    bins = 4
    cells = bins**3
    skin = rng.integers(0, 50, size=cells).astype(np.int64)
    nonskin = rng.permutation(skin)  # same total: prior is exactly 0.5
    model = HistogramModel(bins=bins, skin_counts=skin, nonskin_counts=nonskin)
    assert model.skin_prior == 0.5
    probe = rng.integers(0, 256, size=(300, 3), dtype=np.uint8)
    ratio = spl_logratio(model, probe)
    posterior = bayes_posterior(model, probe)
    assert np.array_equal(ratio > 0, posterior > 0.5)


def test_fit_mixture_single_component_closed_form():
    rng = np.random.default_rng(4)
    samples = rng.normal(100, 20, size=(500, 3))
    mix, trace = fit_mixture(samples, k=1, seed=0)
    assert np.allclose(mix.means[0], samples.mean(axis=0), atol=1e-6)
    assert np.allclose(
        mix.variances[0], np.maximum(samples.var(axis=0), 1.0), atol=1e-6
    )
    assert mix.weights[0] == 1.0
    assert np.all(np.diff(trace) >= -1e-9)


def test_fit_mixture_variance_floor():
    samples = np.tile([[10.0, 20.0, 30.0]], (50, 1))  # zero variance data
    mix, _ = fit_mixture(samples, k=1, seed=0)
    assert np.all(mix.variances >= 1.0)


def test_fit_mixture_two_separated_clouds():
    rng = np.random.default_rng(5)
    cloud_a = rng.normal((30, 40, 50), 2.0, size=(400, 3))
    cloud_b = rng.normal((200, 180, 160), 2.0, size=(400, 3))
    mix, trace = fit_mixture(np.vstack([cloud_a, cloud_b]), k=2, seed=1)
    centroids = np.array([cloud_a.mean(axis=0), cloud_b.mean(axis=0)])
    # Match each centroid to its closest learned mean.
    for centroid in centroids:
        gap = np.linalg.norm(mix.means - centroid, axis=1).min()
        assert gap < 1.0
    assert np.all(np.diff(trace) >= -1e-9)
    assert abs(mix.weights.sum() - 1.0) < 1e-12


def test_fit_mixture_too_few_samples():
    with pytest.raises(TooFewSamples):
        fit_mixture(np.zeros((3, 3)), k=4)


def test_fit_mixture_deterministic_per_seed():
    rng = np.random.default_rng(6)
    samples = rng.uniform(0, 255, size=(300, 3))
    a, trace_a = fit_mixture(samples, k=4, seed=9)
    b, trace_b = fit_mixture(samples, k=4, seed=9)
    assert np.array_equal(a.means, b.means)
    assert np.array_equal(a.variances, b.variances)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(trace_a, trace_b)


def _single_gaussian(mean, var=1.0):
    return GaussianMixture(
        weights=np.array([1.0]),
        means=np.array([mean], dtype=float),
        variances=np.full((1, 3), var),
    )


def test_gmm_posterior_on_symmetry_plane():
    model = GmmModel(
        skin=_single_gaussian([40, 0, 0]),
        nonskin=_single_gaussian([60, 0, 0]),
        skin_prior=0.5,
    )
    assert gmm_posterior(model, [50, 0, 0]) == 0.5


def test_gmm_posterior_far_from_nonskin():
    model = GmmModel(
        skin=_single_gaussian([50, 50, 50]),
        nonskin=_single_gaussian([90, 90, 90]),  # 40 sigma away per channel
        skin_prior=0.5,
    )
    p = gmm_posterior(model, [50, 50, 50])
    assert p >= 0.999
    assert p < 1.0  # clipped inside the open interval


def test_gmm_posterior_density_ratio_three():
    # Choose means so the density ratio at the origin is exactly 3.
    b = math.sqrt(1 + 2 * math.log(3))
    model = GmmModel(
        skin=_single_gaussian([1.0, 0.0, 0.0]),
        nonskin=_single_gaussian([b, 0.0, 0.0]),
        skin_prior=0.5,
    )
    assert abs(gmm_posterior(model, [0, 0, 0]) - 0.75) < 1e-9


def test_gmm_posterior_matches_direct_density_computation():
    rng = np.random.default_rng(8)
    skin = rng.normal((80, 60, 50), 15, size=(300, 3))
    nonskin = rng.normal((120, 140, 160), 25, size=(300, 3))
    model = train_gmm(skin, nonskin, k=2, seed=3)

    def density(mix, x):
        total = 0.0
        for w, mu, var in zip(mix.weights, mix.means, mix.variances):
            quad = sum((xi - mi) ** 2 / vi for xi, mi, vi in zip(x, mu, var))
            norm = math.prod(math.sqrt(2 * math.pi * vi) for vi in var)
            total += w * math.exp(-0.5 * quad) / norm
        return total

    for x in rng.uniform(0, 255, size=(20, 3)):
        ls = density(model.skin, x)
        ln = density(model.nonskin, x)
        expected = model.skin_prior * ls / (model.skin_prior * ls + (1 - model.skin_prior) * ln)
        assert abs(gmm_posterior(model, x) - expected) < 1e-9


def test_train_gmm_prior_from_sample_sizes():
    rng = np.random.default_rng(9)
    model = train_gmm(
        rng.normal(50, 5, (30, 3)), rng.normal(150, 5, (90, 3)), k=1, seed=0
    )
    assert abs(model.skin_prior - 0.25) < 1e-12


def test_model_file_round_trips():
    rng = np.random.default_rng(10)
    hist = HistogramModel(
        bins=4,
        skin_counts=rng.integers(0, 1000, size=64).astype(np.int64),
        nonskin_counts=rng.integers(0, 1000, size=64).astype(np.int64),
    )
    back = load_model(save_model(hist))
    assert isinstance(back, HistogramModel)
    assert back.bins == 4
    assert np.array_equal(back.skin_counts, hist.skin_counts)
    assert np.array_equal(back.nonskin_counts, hist.nonskin_counts)

    gmm = train_gmm(rng.normal(80, 9, (50, 3)), rng.normal(170, 9, (70, 3)), k=2, seed=1)
    back = load_model(save_model(gmm))
    assert np.array_equal(back.skin.means, gmm.skin.means)
    assert np.array_equal(back.nonskin.variances, gmm.nonskin.variances)
    assert back.skin_prior == gmm.skin_prior

    cheddad = CheddadModel(e_lo=0.02, e_hi=0.11, e_mean=0.06, e_std=0.015)
    assert load_model(save_model(cheddad)) == cheddad

    lda = LdaModel(w=rng.normal(size=16), offset=0.37, scale=1.25)
    back = load_model(save_model(lda))
    assert np.array_equal(back.w, lda.w)
    assert back.offset == lda.offset and back.scale == lda.scale


def test_model_file_rejects_bad_magic():
    blob = save_model(CheddadModel(0.0, 1.0, 0.5, 0.1))
    with pytest.raises(FormatError):
        load_model(b"XXXX" + blob[4:])


def test_model_file_rejects_wrong_version():
    blob = bytearray(save_model(CheddadModel(0.0, 1.0, 0.5, 0.1)))
    blob[4:6] = (99).to_bytes(2, "little")
    with pytest.raises(VersionError):
        load_model(bytes(blob))


def test_model_file_rejects_truncation_and_trailing_junk():
    blob = save_model(CheddadModel(0.0, 1.0, 0.5, 0.1))
    with pytest.raises(FormatError):
        load_model(blob[:-3])
    with pytest.raises(FormatError):
        load_model(blob + b"\x00")
