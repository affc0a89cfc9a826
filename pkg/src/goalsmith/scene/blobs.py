"""Color-blob detection used as an acceptance oracle on rendered/edited images."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .spec import InputError

PALETTE = ("red", "green", "blue", "dark", "gray")


def color_mask(image: np.ndarray, color: str) -> np.ndarray:
    """Tolerance-band mask for one palette color.

    Bands are wide enough to survive the slight color drift of
    diffusion-generated images.
    """
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    if color == "red":
        return (r > 0.45) & (r - np.maximum(g, b) > 0.22)
    if color == "green":
        return (g > 0.35) & (g - np.maximum(r, b) > 0.18)
    if color == "blue":
        return (b > 0.30) & (b - np.maximum(r, g) > 0.18)
    if color == "dark":
        return image.max(axis=-1) < 0.30
    if color == "gray":
        lum = image.mean(axis=-1)
        spread = image.max(axis=-1) - image.min(axis=-1)
        return (lum > 0.33) & (lum < 0.68) & (spread < 0.12)
    raise InputError(f"unknown palette color {color!r}; expected one of {PALETTE}")


def blob_detect(image: np.ndarray, color: str):
    """Centroid (fractional row/col) and pixel area of the largest matching blob.

    Returns None when no pixel falls inside the color band.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise InputError("blob_detect expects an (H, W, 3) image")
    mask = color_mask(image, color)
    if not mask.any():
        return None
    labels, n = ndimage.label(mask)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n + 1))
    best = int(np.argmax(sizes)) + 1
    rows, cols = np.nonzero(labels == best)
    h, w = mask.shape
    centroid = (float(rows.mean()) / (h - 1), float(cols.mean()) / (w - 1))
    return centroid, int(sizes[best - 1])
