import numpy as np
import pytest
from helpers import write_gray, write_manifest, write_rgb

from skinbench.colorspace import rgb_to_ycbcr
from skinbench.errors import TooFewSamples
from skinbench.evaluation import parse_manifest
from skinbench.imageio import NONSKIN, SKIN
from skinbench.rules import (
    CheddadModel,
    ChenBounds,
    DycParams,
    chen_detect,
    cheddad_detect,
    dyc_detect,
    train_cheddad,
)


def brute_force_chen(pixels):
    """Oracle: apply the three strict inequalities pixel by pixel."""
    out = []
    for r, g, b in pixels.tolist():
        sr, sg, sb = r - g, g - b, r - b
        skin = -142 < sr < 18 and -48 < sg < 92 and -32 < sb < 192
        out.append(SKIN if skin else NONSKIN)
    return out


def test_chen_detect_examples():
    img = np.array([[(100, 110, 120), (200, 120, 80)]], dtype=np.uint8)
    assert chen_detect(img).tolist() == [[SKIN, NONSKIN]]


def test_chen_detect_boundary_is_strict():
    # sR = 18 exactly (and sG, sB comfortably inside): rejected.
    img = np.array([[(118, 100, 90)]], dtype=np.uint8)
    sr = 118 - 100
    assert sr == 18
    assert chen_detect(img).tolist() == [[NONSKIN]]
    # One step inside the bound flips the label.
    img2 = np.array([[(117, 100, 90)]], dtype=np.uint8)
    assert chen_detect(img2).tolist() == [[SKIN]]


def test_chen_detect_matches_brute_force():
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, size=(20000, 3), dtype=np.uint8)
    got = chen_detect(pixels.reshape(1, -1, 3))[0].tolist()
    assert got == brute_force_chen(pixels)


def test_chen_sign_flip_mirrors_the_test():
    rng = np.random.default_rng(1)
    pixels = rng.integers(0, 256, size=(1, 500, 3), dtype=np.uint8)
    flipped = chen_detect(pixels, ChenBounds(sign_flip=True))
    mirrored = chen_detect(
        (255 - pixels.astype(int)).astype(np.uint8), ChenBounds()
    )
    # Negating the differences equals testing the channel-inverted image.
    assert np.array_equal(flipped, mirrored)


def test_chen_bounds_validation():
    with pytest.raises(ValueError):
        ChenBounds(lo_r=20, hi_r=10)


def _cheddad_manifest(tmp_path, e_values):
    """Build a single-image manifest whose skin pixels carry given e values.

    Pixels (r, 0, 0) give e = 0.2989 * r / 255, so r = e * 255 / 0.2989.
    """
    r = np.clip(np.rint(np.asarray(e_values) * 255.0 / 0.2989), 0, 255)
    pixels = np.zeros((1, len(r), 3), dtype=np.uint8)
    pixels[0, :, 0] = r.astype(np.uint8)
    write_rgb(tmp_path / "img0.png", pixels)
    write_gray(tmp_path / "mask0.png", np.full((1, len(r)), 255, dtype=np.uint8))
    write_manifest(tmp_path / "m.tsv", [("img0.png", "mask0.png")])
    return parse_manifest(tmp_path / "m.tsv")


def test_train_cheddad_recovers_uniform_quantiles(tmp_path):
    rng = np.random.default_rng(2)
    e_values = rng.uniform(0.02, 0.12, size=4000)
    entries = _cheddad_manifest(tmp_path, e_values)
    model = train_cheddad(entries, mass=0.95)
    # Central 95% interval of U(0.02, 0.12): [0.0225, 0.1175] up to
    # sampling noise and the 8-bit encoding of the synthetic pixels.
    assert abs(model.e_lo - 0.0225) < 2e-3
    assert abs(model.e_hi - 0.1175) < 2e-3
    assert model.e_lo <= model.e_mean <= model.e_hi
    assert model.e_std > 0


def test_train_cheddad_degenerate_single_value(tmp_path):
    entries = _cheddad_manifest(tmp_path, np.full(1500, 0.06))
    model = train_cheddad(entries)
    assert model.e_std == pytest.approx(1e-4)
    assert model.e_hi - model.e_lo == pytest.approx(2e-4)
    assert model.e_lo < model.e_mean < model.e_hi


def test_train_cheddad_too_few_skin_pixels(tmp_path):
    write_rgb(tmp_path / "img0.png", [[(200, 10, 10)]])
    write_gray(tmp_path / "mask0.png", [[0]])  # no skin at all
    write_manifest(tmp_path / "m.tsv", [("img0.png", "mask0.png")])
    with pytest.raises(TooFewSamples):
        train_cheddad(parse_manifest(tmp_path / "m.tsv"))


def test_cheddad_detect_gaussian_shape():
    model = CheddadModel(e_lo=0.02, e_hi=0.10, e_mean=0.06, e_std=0.01)
    # e for (r, 0, 0) is 0.2989 * r / 255; invert for the peak.
    r_peak = model.e_mean * 255 / 0.2989
    img = np.array([[(round(r_peak), 0, 0)]], dtype=np.uint8)
    p = cheddad_detect(img, model)[0, 0]
    assert p > 0.99  # 8-bit rounding keeps it just under the exact peak

    outside = np.array([[(255, 0, 0)]], dtype=np.uint8)  # e = 0.2989 > e_hi
    assert cheddad_detect(outside, model)[0, 0] == 0.0


def test_cheddad_detect_one_std_from_mean():
    model = CheddadModel(e_lo=-1.0, e_hi=1.0, e_mean=0.0, e_std=0.2989)
    img = np.array([[(255, 0, 0)]], dtype=np.uint8)  # e = 0.2989 = one std
    assert cheddad_detect(img, model)[0, 0] == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_cheddad_detect_non_increasing_away_from_mean():
    model = CheddadModel(e_lo=0.0, e_hi=0.3, e_mean=0.15, e_std=0.05)
    rs = np.arange(0, 256, dtype=np.uint8)
    img = np.zeros((1, 256, 3), dtype=np.uint8)
    img[0, :, 0] = rs
    p = cheddad_detect(img, model)[0]
    e = 0.2989 * rs / 255.0
    inside = (e >= model.e_lo) & (e <= model.e_hi)
    dist = np.abs(e - model.e_mean)
    order = np.argsort(dist[inside])
    assert np.all(np.diff(p[inside][order]) <= 1e-12)


def _skin_chroma_pixel():
    # A reddish tone that passes the default static gates.
    return np.array([180, 120, 100], dtype=np.uint8)


def test_dyc_detect_no_candidates_gives_empty_mask():
    img = np.zeros((4, 4, 3), dtype=np.uint8)  # Y=0 fails the luma gate
    assert not dyc_detect(img).any()


def test_dyc_detect_exact_correlation_line():
    # Two candidate chroma values on an exact Cr = a*Cb + c line, each
    # covering half the candidates so the [q, 1-q] quantiles include both.
    base = _skin_chroma_pixel()
    other = np.array([185, 118, 105], dtype=np.uint8)
    for px in (base, other):
        y, cb, cr = rgb_to_ycbcr(px)
        assert 16 <= y <= 235 and 77 <= cb <= 127 and 133 <= cr <= 173
    img = np.zeros((2, 8, 3), dtype=np.uint8)
    img[0] = base
    img[1] = other
    mask = dyc_detect(img)
    assert mask.all()  # every candidate sits on the fitted line


def test_dyc_detect_single_candidate_accepts_identical_chroma_only():
    img = np.zeros((3, 3, 3), dtype=np.uint8)  # background fails the gates
    img[1, 1] = _skin_chroma_pixel()
    mask = dyc_detect(img)
    assert mask[1, 1] == SKIN
    assert mask.sum() == 1  # dynamic ranges collapsed onto one chroma point


def test_dyc_detect_accepts_untagged_pixels_matching_the_cluster():
    # The gates only select the statistics sample; the dynamic cluster
    # decides membership. A uniform RGB shift leaves (Cb, Cr) exactly
    # unchanged, so this pixel fails the luma gate yet shares cand1's
    # chroma and must be accepted.
    cand1 = np.array([40, 20, 10], dtype=np.uint8)
    cand2 = np.array([60, 30, 20], dtype=np.uint8)
    outsider = np.array([30, 10, 0], dtype=np.uint8)  # cand1 - 10 per channel
    assert rgb_to_ycbcr(outsider)[0] < 16
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    img[0] = cand1
    img[1] = cand2
    img[2] = outsider
    img[3] = (0, 0, 0)  # chroma (128, 128): outside the dynamic cluster
    mask = dyc_detect(img)
    assert mask[0].all() and mask[1].all()
    assert mask[2].all()
    assert not mask[3].any()


def test_dyc_detect_permutation_invariance():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)
    mask = dyc_detect(img)
    perm = rng.permutation(36)
    shuffled = img.reshape(36, 3)[perm].reshape(6, 6, 3)
    shuffled_mask = dyc_detect(shuffled)
    assert np.array_equal(shuffled_mask.reshape(36)[np.argsort(perm)], mask.reshape(36))


def test_dyc_params_validation():
    with pytest.raises(ValueError):
        DycParams(q=0.7)
    with pytest.raises(ValueError):
        DycParams(delta=0.0)
    with pytest.raises(ValueError):
        DycParams(y_lo=240, y_hi=235)
