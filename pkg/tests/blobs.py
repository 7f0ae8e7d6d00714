"""Saliency-map builders and brute-force oracles shared by the tests."""
from fractions import Fraction

import numpy as np


def gaussian_blob(size, cx, cy, sigma):
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    return np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))


def interior_blob(rng, size=64, sigma_range=(3.0, 8.0)):
    sigma = rng.uniform(*sigma_range)
    pad = 3.0 * sigma + 1.0
    cx, cy = rng.uniform(pad, size - 1 - pad, 2)
    return gaussian_blob(size, cx, cy, sigma)


def mass_inside(saliency, rect):
    """Mass of pixels whose centers lie in ``rect`` (edges inclusive)."""
    h, w = saliency.shape
    xs = np.arange(w)
    ys = np.arange(h)
    cols = (xs >= rect.x_min) & (xs <= rect.x_max)
    rows = (ys >= rect.y_min) & (ys <= rect.y_max)
    return float(saliency[np.ix_(rows, cols)].sum())


def loop_moments(saliency):
    """Moments by an explicit double loop over pixels, summed in exact rationals.

    Each per-pixel product is formed in floating point exactly as a direct
    implementation would, then accumulated without any rounding.
    """
    h, w = saliency.shape
    acc = [Fraction(0)] * 5
    for j in range(h):
        for i in range(w):
            s = float(saliency[j, i])
            fi, fj = float(i), float(j)
            terms = (s, fi * s, fj * s, (fi * fi) * s, (fj * fj) * s)
            acc = [a + Fraction(t) for a, t in zip(acc, terms)]
    return tuple(float(a) for a in acc)
