"""Keypoint detection, description, projection, and feature matching.

The detector is a multi-scale structure-tensor corner finder: responses are
scale-normalized minimum eigenvalues of the local gradient covariance, with
an eigenvalue-ratio edge rejection and 3x3 non-maximum suppression. Two
descriptor families are supported: a gradient-histogram real vector (meant
to be matched by nearest neighbour after projection to a low dimension) and
a seeded pairwise intensity-comparison bit string whose leading bits form
the identity-matching key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter
from scipy.spatial import cKDTree

from . import _kernels
from .errors import DegenerateInputError, EmptyIndexError, KindMismatchError
from .geometry import wrap_angle
from .imaging import GrayImage

SCALE_FACTOR = 1.5  # pyramid step between detector levels

# Fixed seed for the global comparison-pair layout. Pairs are drawn as one
# stream, so the first k pairs are identical for every comparison budget and
# "the leading kept_bits bits" is well defined across configurations.
_PAIR_LAYOUT_SEED = 2471


@dataclass(frozen=True)
class Keypoint:
    """Detected interest point in image (or map) coordinates."""

    x: float
    y: float
    orientation: float  # radians, (-pi, pi]
    size: float  # support diameter in pixels
    response: float = 0.0


@dataclass(frozen=True)
class Feature:
    """A keypoint plus its descriptor.

    ``kind`` is "real" (float vector) or "bits" (0/1 uint8 vector).
    """

    keypoint: Keypoint
    descriptor: np.ndarray
    kind: str


@dataclass(frozen=True)
class DetectorParams:
    response_threshold: float = 0.0008
    num_scales: int = 3
    edge_rejection: float = 8.0
    patch_size: float = 16.0

    def __post_init__(self):
        if self.response_threshold < 0:
            raise ValueError("response_threshold must be non-negative")
        if self.num_scales < 1:
            raise ValueError("num_scales must be at least 1")
        if self.edge_rejection <= 1:
            raise ValueError("edge_rejection must exceed 1")
        if self.patch_size < 4:
            raise ValueError("patch_size must be at least 4 pixels")


@dataclass(frozen=True)
class DescriptorParams:
    sampling_radius: float = 12.0
    comparison_count: int = 32
    kept_bits: int = 15

    def __post_init__(self):
        if not (8 <= self.kept_bits <= 24):
            raise ValueError("kept_bits must lie in [8, 24]")
        if self.kept_bits > self.comparison_count:
            raise ValueError("kept_bits cannot exceed comparison_count")
        if self.sampling_radius < 2:
            raise ValueError("sampling_radius must be at least 2 pixels")


class Match(NamedTuple):
    """A query-feature/reference-feature pairing.

    A named tuple rather than a dataclass: match lists can run to tens of
    thousands per query, and construction cost shows up in localization.
    """

    query_id: int
    ref_id: int
    query: Feature
    reference: Feature
    distance: float = 0.0


def _block_mean(a: np.ndarray, s: int) -> np.ndarray:
    h, w = a.shape
    hs, ws = (h // s) * s, (w // s) * s
    return a[:hs, :ws].reshape(h // s, s, w // s, s).mean(axis=(1, 3))


def detect_keypoints(
    image: GrayImage, params: DetectorParams, max_count: int | None = None
) -> list[Keypoint]:
    """Find corner keypoints, strongest response first.

    Returns at most ``max_count`` keypoints (all of them when None). A
    constant image yields an empty list. Ordering is deterministic: response
    descending with (y, x, level) as the tie-break.
    """
    f = image.pixels.astype(np.float32) / 255.0
    rows = []
    for level in range(params.num_scales):
        scale = SCALE_FACTOR**level
        smoothed = gaussian_filter(f, 0.8 * scale, mode="reflect")
        gy, gx = np.gradient(smoothed)
        sig_w = 1.4 * scale
        ixx = gaussian_filter(gx * gx, sig_w, mode="reflect")
        iyy = gaussian_filter(gy * gy, sig_w, mode="reflect")
        ixy = gaussian_filter(gx * gy, sig_w, mode="reflect")
        tr = ixx + iyy
        det = ixx * iyy - ixy * ixy
        half_gap = np.sqrt(np.maximum((ixx - iyy) ** 2 / 4.0 + ixy * ixy, 0.0))
        response = (tr / 2.0 - half_gap) * scale * scale

        r = params.edge_rejection
        edge_ok = (det > 0) & (tr * tr < ((r + 1.0) ** 2 / r) * np.maximum(det, 1e-30))
        is_max = response == maximum_filter(response, size=3, mode="constant", cval=-np.inf)
        size = params.patch_size * scale
        margin = int(math.ceil(size / 2.0)) + 1
        mask = is_max & edge_ok & (response >= params.response_threshold)
        if margin > 0:
            border = np.zeros_like(mask)
            if mask.shape[0] > 2 * margin and mask.shape[1] > 2 * margin:
                border[margin:-margin, margin:-margin] = True
            mask &= border

        ys, xs = np.nonzero(mask)
        if len(ys) == 0:
            continue
        # orientation from the Gaussian-weighted mean gradient at the point;
        # the weighting window is wide, so the smoothing runs on a block-mean
        # reduction of the gradient field and is sampled back bilinearly
        sub = 4 if min(gx.shape) >= 16 else 1
        o_sig = 0.35 * size / sub
        ogx = gaussian_filter(_block_mean(gx, sub), o_sig, mode="reflect").astype(np.float32)
        ogy = gaussian_filter(_block_mean(gy, sub), o_sig, mode="reflect").astype(np.float32)
        su = (xs - (sub - 1) / 2.0) / sub
        sv = (ys - (sub - 1) / 2.0) / sub
        oris = np.arctan2(_kernels.sample_bilinear(ogy, su, sv), _kernels.sample_bilinear(ogx, su, sv))
        resp = response[ys, xs]
        rows.append(
            np.column_stack([xs, ys, oris, np.full(len(ys), size), resp, np.full(len(ys), level)])
        )

    if not rows:
        return []
    all_rows = np.vstack(rows)
    order = np.lexsort((all_rows[:, 5], all_rows[:, 0], all_rows[:, 1], -all_rows[:, 4]))
    all_rows = all_rows[order]
    # cross-level duplicate suppression: one physical corner often peaks at
    # several pyramid levels with near-identical position and bits, which
    # would cast duplicated (correlated) votes downstream — keep only the
    # strongest detection within a 2 px radius
    if len(all_rows) > 1:
        pts = all_rows[:, :2]
        neighbors = cKDTree(pts).query_ball_point(pts, r=2.0)
        keep = np.ones(len(pts), dtype=bool)
        for i in range(len(pts)):  # rows are strongest-first
            if keep[i]:
                keep[neighbors[i]] = False
                keep[i] = True
        all_rows = all_rows[keep]
    if max_count is not None:
        all_rows = all_rows[:max_count]
    return [
        Keypoint(x=row[0], y=row[1], orientation=wrap_angle(row[2]), size=row[3], response=row[4])
        for row in all_rows
    ]


def subsample_features(items: list, count: int, seed: int = 0) -> list:
    """Keep a uniformly random subset of ``count`` items (seeded).

    When ``count`` covers the whole list, the original list is returned
    unchanged. Selected items keep their relative order.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count >= len(items):
        return list(items)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(items), size=count, replace=False))
    return [items[i] for i in idx]


def _keypoint_sampling_frame(keypoints: list[Keypoint]):
    xy = np.array([[k.x, k.y] for k in keypoints], dtype=np.float64).reshape(-1, 2)
    cs = np.array(
        [[math.cos(k.orientation), math.sin(k.orientation)] for k in keypoints], dtype=np.float64
    ).reshape(-1, 2)
    return xy, cs


def describe_real(image: GrayImage, keypoints: list[Keypoint]) -> list[Feature]:
    """Gradient-histogram descriptors: 4x4 spatial cells x 8 orientation bins.

    The patch is resampled in the keypoint's rotated frame, so descriptors of
    the same texture patch agree under pure translation of the image.
    Keypoints whose sampling grid leaves the image are dropped.
    """
    if not keypoints:
        return []
    f = gaussian_filter(image.pixels.astype(np.float32), 1.0, mode="reflect")
    h, w = f.shape
    grid_n = 16
    border = grid_n + 2
    lin = (np.arange(border) - (border - 1) / 2.0) / grid_n  # unit patch coords
    gu, gv = np.meshgrid(lin, lin)

    xy, cs = _keypoint_sampling_frame(keypoints)
    sizes = np.array([k.size for k in keypoints])
    # rotated sample lattice per keypoint
    px = gu[None, :, :] * sizes[:, None, None]
    py = gv[None, :, :] * sizes[:, None, None]
    cosv = cs[:, 0][:, None, None]
    sinv = cs[:, 1][:, None, None]
    sx = xy[:, 0][:, None, None] + cosv * px - sinv * py
    sy = xy[:, 1][:, None, None] + sinv * px + cosv * py

    reach = sizes * (border - 1) / (2.0 * grid_n) * math.sqrt(2.0) + 1.0
    keep = (
        (xy[:, 0] - reach >= 0)
        & (xy[:, 0] + reach <= w - 1)
        & (xy[:, 1] - reach >= 0)
        & (xy[:, 1] + reach <= h - 1)
    )
    idx_keep = np.nonzero(keep)[0]
    if len(idx_keep) == 0:
        return []
    sx, sy = sx[idx_keep], sy[idx_keep]
    n = len(idx_keep)

    patches = _kernels.sample_bilinear(f, sx.ravel(), sy.ravel()).reshape(n, border, border)
    dx = (patches[:, 1:-1, 2:] - patches[:, 1:-1, :-2]) / 2.0
    dy = (patches[:, 2:, 1:-1] - patches[:, :-2, 1:-1]) / 2.0
    mag = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx)
    obin = np.floor((ang + math.pi) / (2 * math.pi / 8.0)).astype(np.int64) % 8
    cell_r = (np.arange(grid_n) // (grid_n // 4))[None, :, None]
    cell_c = (np.arange(grid_n) // (grid_n // 4))[None, None, :]
    flat = (cell_r * 4 + cell_c) * 8 + obin
    desc = np.zeros((n, 128), dtype=np.float64)
    rows = np.broadcast_to(np.arange(n)[:, None, None], flat.shape)
    np.add.at(desc, (rows.ravel(), flat.ravel()), mag.ravel())

    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    desc = desc / np.maximum(norms, 1e-12)
    desc = np.minimum(desc, 0.25)
    norms = np.linalg.norm(desc, axis=1, keepdims=True)
    desc = desc / np.maximum(norms, 1e-12)

    return [Feature(keypoints[i], desc[j], "real") for j, i in enumerate(idx_keep)]


def comparison_pair_layout(params: DescriptorParams) -> tuple[np.ndarray, np.ndarray]:
    """The fixed global sampling-pair layout, scaled to ``sampling_radius``.

    Offsets are drawn uniformly from the disk as one seeded stream, so the
    first k pairs agree for every comparison budget of at least k.
    """
    rng = np.random.default_rng(_PAIR_LAYOUT_SEED)
    u = rng.uniform(size=(params.comparison_count, 4))
    ra = np.sqrt(u[:, 0]) * params.sampling_radius
    ta = u[:, 1] * 2 * math.pi
    rb = np.sqrt(u[:, 2]) * params.sampling_radius
    tb = u[:, 3] * 2 * math.pi
    a = np.column_stack([ra * np.cos(ta), ra * np.sin(ta)])
    b = np.column_stack([rb * np.cos(tb), rb * np.sin(tb)])
    return a, b


def describe_binary(
    image: GrayImage, keypoints: list[Keypoint], params: DescriptorParams
) -> list[Feature]:
    """Truncated pairwise-comparison bit descriptors (leading kept_bits bits).

    Comparisons read a sigma=2 smoothed copy of the image in the keypoint's
    rotated frame. Keypoints too close to the border are dropped.
    """
    if not keypoints:
        return []
    f = gaussian_filter(image.pixels.astype(np.float32), 2.0, mode="reflect")
    h, w = f.shape
    xy, cs = _keypoint_sampling_frame(keypoints)
    reach = params.sampling_radius + 2.0
    keep = (
        (xy[:, 0] - reach >= 0)
        & (xy[:, 0] + reach <= w - 1)
        & (xy[:, 1] - reach >= 0)
        & (xy[:, 1] + reach <= h - 1)
    )
    idx_keep = np.nonzero(keep)[0]
    if len(idx_keep) == 0:
        return []
    offs_a, offs_b = comparison_pair_layout(params)
    offs_a = offs_a[: params.kept_bits]
    offs_b = offs_b[: params.kept_bits]
    bits = _kernels.binary_comparison_bits(f, xy[idx_keep], cs[idx_keep], offs_a, offs_b)
    return [Feature(keypoints[i], bits[j], "bits") for j, i in enumerate(idx_keep)]


@dataclass
class Projection:
    """Affine projection onto the leading principal directions."""

    mean: np.ndarray
    components: np.ndarray  # (target_dim, source_dim), orthonormal rows
    singular_values: np.ndarray = field(default=None, repr=False)


def fit_projection(vectors, target_dim: int) -> Projection:
    """Fit a PCA projection to row vectors.

    Raises DegenerateInputError when fewer than ``target_dim`` samples are
    given or the data does not span ``target_dim`` directions.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of row vectors")
    n, d = x.shape
    if target_dim < 1 or target_dim > d:
        raise ValueError("target_dim must lie in [1, source_dim]")
    if n < target_dim:
        raise DegenerateInputError(f"need at least {target_dim} samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    if svals[0] <= 0 or np.sum(svals > svals[0] * 1e-9) < target_dim:
        raise DegenerateInputError("input rank is below target_dim")
    comps = vt[:target_dim].copy()
    # canonical sign: largest-magnitude entry of each component is positive
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return Projection(mean=mean, components=comps, singular_values=svals[:target_dim].copy())


def project(projection: Projection, vectors):
    """Apply the projection to one vector or a matrix of row vectors."""
    x = np.asarray(vectors, dtype=np.float64)
    single = x.ndim == 1
    out = (np.atleast_2d(x) - projection.mean) @ projection.components.T
    return out[0] if single else out


class NNIndex:
    """Exact nearest-neighbour index over real descriptors.

    Backed by a KD-tree; distance ties are resolved toward the lowest
    reference id.
    """

    def __init__(self, features: list[Feature], ids: list[int] | None = None):
        if not features:
            raise EmptyIndexError("cannot build an index from zero features")
        if any(f.kind != "real" for f in features):
            raise KindMismatchError("NNIndex requires real descriptors")
        self.features = list(features)
        self.ids = np.asarray(ids if ids is not None else range(len(features)), dtype=np.int64)
        self.matrix = np.vstack([f.descriptor for f in features]).astype(np.float64)
        self._tree = cKDTree(self.matrix)

    def __len__(self):
        return len(self.features)

    def query_nearest(self, qmat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row index and distance of the nearest reference per query row."""
        n = len(self.features)
        k = min(8, n)
        dist, idx = self._tree.query(np.atleast_2d(qmat), k=k)
        dist = np.atleast_2d(dist.reshape(len(qmat), k))
        idx = np.atleast_2d(idx.reshape(len(qmat), k))
        best = np.empty(len(qmat), dtype=np.int64)
        best_d = np.empty(len(qmat), dtype=np.float64)
        for qi in range(len(qmat)):
            tied = idx[qi][dist[qi] == dist[qi, 0]]
            if len(tied) == k and k < n:
                # every returned candidate is tied: fall back to a full scan
                d_all = np.linalg.norm(self.matrix - qmat[qi], axis=1)
                tied = np.nonzero(d_all == d_all.min())[0]
            pick = tied[np.argmin(self.ids[tied])]
            best[qi] = pick
            best_d[qi] = dist[qi, 0]
        return best, best_d


def match_nearest(query_features: list[Feature], index: NNIndex) -> list[Match]:
    """One match per query feature: its exact nearest reference descriptor."""
    if len(index) == 0:
        raise EmptyIndexError("empty reference index")
    if not query_features:
        return []
    if any(f.kind != "real" for f in query_features):
        raise KindMismatchError("match_nearest requires real descriptors")
    qmat = np.vstack([f.descriptor for f in query_features]).astype(np.float64)
    rows, dists = index.query_nearest(qmat)
    return [
        Match(
            query_id=qi,
            ref_id=int(index.ids[r]),
            query=query_features[qi],
            reference=index.features[r],
            distance=float(d),
        )
        for qi, (r, d) in enumerate(zip(rows, dists))
    ]


def pack_bits(bit_rows: np.ndarray) -> np.ndarray:
    """Pack 0/1 rows into integer keys (bit i -> weight 2**i)."""
    bit_rows = np.atleast_2d(np.asarray(bit_rows, dtype=np.int64))
    weights = np.int64(1) << np.arange(bit_rows.shape[1], dtype=np.int64)
    return bit_rows @ weights


def match_keys(
    query_keys: np.ndarray, ref_keys_sorted: np.ndarray, ref_order: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """All (query, reference) index pairs with equal packed keys.

    ``ref_keys_sorted`` must be ascending with ``ref_order`` mapping sorted
    slots back to original positions. Pairs come out grouped by query index,
    reference index ascending within a group.
    """
    lo = np.searchsorted(ref_keys_sorted, query_keys, side="left")
    hi = np.searchsorted(ref_keys_sorted, query_keys, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    q_idx = np.repeat(np.arange(len(query_keys), dtype=np.int64), counts)
    # grouped arange: for each query, the run lo[q], lo[q]+1, ..., hi[q]-1
    run_starts = np.cumsum(counts) - counts
    spans = np.repeat(lo, counts) + np.arange(total, dtype=np.int64) - np.repeat(run_starts, counts)
    return q_idx, ref_order[spans]


def match_identity(query_features: list[Feature], reference_features: list[Feature]) -> list[Match]:
    """Every pair of bit-identical descriptors, ordered by (query, reference)."""
    kinds = {f.kind for f in query_features} | {f.kind for f in reference_features}
    if kinds - {"bits"}:
        raise KindMismatchError("match_identity requires bit descriptors on both sides")
    widths = {len(f.descriptor) for f in query_features} | {
        len(f.descriptor) for f in reference_features
    }
    if len(widths) > 1:
        raise KindMismatchError(f"mixed bit widths {sorted(widths)}")
    if not query_features or not reference_features:
        return []
    qkeys = pack_bits(np.vstack([f.descriptor for f in query_features]))
    rkeys = pack_bits(np.vstack([f.descriptor for f in reference_features]))
    order = np.argsort(rkeys, kind="stable")
    qi, ri = match_keys(qkeys, rkeys[order], order)
    # within one query the reference ids must come out ascending
    return [
        Match(
            query_id=int(q),
            ref_id=int(r),
            query=query_features[q],
            reference=reference_features[r],
        )
        for q, r in zip(qi, ri)
    ]
