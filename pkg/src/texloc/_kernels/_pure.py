"""Pure numpy implementations of the hot kernels.

Mirrors the compiled core in ``_core.pyx``; the selector in ``__init__``
picks whichever is available. Arithmetic is done in float64 with the same
expression structure as the C loops so both backends agree to rounding.
"""

import numpy as np

BACKEND = "pure"


def sample_bilinear(img, xs, ys):
    """Bilinearly interpolate ``img`` (2-D float32) at float positions.

    Coordinates are clamped to the valid interpolation square, so callers
    that already guarantee in-bounds samples see no difference.
    """
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    ix = np.minimum(x.astype(np.int64), w - 2) if w > 1 else np.zeros_like(x, dtype=np.int64)
    iy = np.minimum(y.astype(np.int64), h - 2) if h > 1 else np.zeros_like(y, dtype=np.int64)
    fx = x - ix
    fy = y - iy
    v00 = img[iy, ix].astype(np.float64)
    v01 = img[iy, np.minimum(ix + 1, w - 1)].astype(np.float64)
    v10 = img[np.minimum(iy + 1, h - 1), ix].astype(np.float64)
    v11 = img[np.minimum(iy + 1, h - 1), np.minimum(ix + 1, w - 1)].astype(np.float64)
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def binary_comparison_bits(img, kp_xy, kp_cos_sin, offsets_a, offsets_b):
    """Evaluate pairwise intensity comparisons around oriented keypoints.

    img          smoothed image, 2-D float32
    kp_xy        (n, 2) keypoint positions
    kp_cos_sin   (n, 2) cos/sin of each keypoint orientation
    offsets_a/b  (c, 2) sampling offsets in the keypoint frame, pre-scaled

    Returns a (n, c) uint8 matrix where bit = 1 iff intensity(a) < intensity(b).
    """
    kp_xy = np.asarray(kp_xy, dtype=np.float64)
    cs = np.asarray(kp_cos_sin, dtype=np.float64)
    oa = np.asarray(offsets_a, dtype=np.float64)
    ob = np.asarray(offsets_b, dtype=np.float64)
    n = kp_xy.shape[0]
    c = oa.shape[0]
    if n == 0 or c == 0:
        return np.zeros((n, c), dtype=np.uint8)
    cos = cs[:, 0][:, None]
    sin = cs[:, 1][:, None]

    def rotated(off):
        rx = cos * off[:, 0][None, :] - sin * off[:, 1][None, :]
        ry = sin * off[:, 0][None, :] + cos * off[:, 1][None, :]
        return kp_xy[:, 0][:, None] + rx, kp_xy[:, 1][:, None] + ry

    ax, ay = rotated(oa)
    bx, by = rotated(ob)
    va = sample_bilinear(img, ax.ravel(), ay.ravel())
    vb = sample_bilinear(img, bx.ravel(), by.ravel())
    return (va < vb).reshape(n, c).astype(np.uint8)


def joint_peak_term(inlier_pmf_tail, outlier_pmf, others_weight):
    """Sum over j of conv(inlier_pmf_tail, outlier_pmf)[j] * others_weight[j].

    ``inlier_pmf_tail`` is the inlier vote PMF with entries below the minimum
    inlier count already zeroed; ``others_weight[j]`` is the probability that
    every other voting cell stays strictly below j votes.
    """
    a = np.asarray(inlier_pmf_tail, dtype=np.float64)
    b = np.asarray(outlier_pmf, dtype=np.float64)
    w = np.asarray(others_weight, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        return 0.0
    conv = np.convolve(a, b)
    m = min(conv.size, w.size)
    return float(np.dot(conv[:m], w[:m]))
