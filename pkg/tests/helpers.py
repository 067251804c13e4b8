"""Shared fixtures and reference oracles for the test suite."""

import math

import numpy as np
from PIL import Image


def write_rgb(path, pixels):
    """Write an (H, W, 3) uint8 array as PNG."""
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_gray(path, values):
    """Write an (H, W) uint8 array as 8-bit gray PNG."""
    Image.fromarray(np.asarray(values, dtype=np.uint8), mode="L").save(path, format="PNG")


def write_manifest(path, rows):
    """Write TAB-separated manifest rows (tuples of str-able fields)."""
    lines = ["\t".join(str(field) for field in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_mask(rng, h, w, dontcare_fraction=0.0):
    """Random ground-truth mask with an optional don't-care share."""
    mask = rng.integers(0, 2, size=(h, w)).astype(np.uint8)
    if dontcare_fraction > 0.0:
        mask[rng.random((h, w)) < dontcare_fraction] = 2
    return mask


GRID_MOVES = [
    (dy, dx, math.sqrt(2.0) if dy and dx else 1.0)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dy, dx) != (0, 0)
]


def bellman_ford(pmap, seeds):
    """Shortest-path oracle: relax edges to a fixpoint, no priority queue."""
    h, w = pmap.shape
    dist = np.full((h, w), np.inf)
    dist[seeds] = 0.0
    enter = 255.0 * (1.0 - pmap)
    changed = True
    while changed:
        changed = False
        for y in range(h):
            for x in range(w):
                d = dist[y, x]
                if d == np.inf:
                    continue
                for dy, dx, step in GRID_MOVES:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w:
                        cand = d + enter[ny, nx] * step
                        if cand < dist[ny, nx]:
                            dist[ny, nx] = cand
                            changed = True
    return dist


# Two color palettes with disjoint 32-bin histogram cells: reddish skin
# tones vs bluish backgrounds. Every synthetic image contains all 16
# colors, so any train/test split of the images is perfectly separable.
SKIN_PALETTE = [
    (200, 16, 16), (216, 24, 8), (232, 8, 24), (208, 40, 32),
    (248, 32, 8), (192, 8, 8), (224, 48, 16), (240, 16, 40),
]
BACKGROUND_PALETTE = [
    (16, 32, 200), (8, 64, 216), (24, 16, 232), (40, 80, 192),
    (8, 8, 248), (32, 48, 208), (16, 72, 224), (48, 24, 240),
]


def make_separable_dataset(root, n_images=8, seed=0):
    """Write images whose skin/background colors never share a histogram bin.

    Each 16x16 image has its left half drawn from the skin palette and
    its right half from the background palette, with per-image shuffled
    placement. Returns (image_path, mask_path) pairs.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_images):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        mask = np.zeros((16, 16), dtype=np.uint8)
        for y in range(16):
            skin_row = rng.permutation(8)
            bg_row = rng.permutation(8)
            for x in range(8):
                img[y, x] = SKIN_PALETTE[skin_row[x]]
                img[y, 8 + x] = BACKGROUND_PALETTE[bg_row[x]]
            mask[y, :8] = 255
        img_path = root / f"img{i:02d}.png"
        mask_path = root / f"gt{i:02d}.png"
        write_rgb(img_path, img)
        write_gray(mask_path, mask)
        pairs.append((img_path, mask_path))
    return pairs
