"""Query localization against a reference map, plus ground-truth labeling.

The pipeline: detect and describe query features, match them against the map
(per the configured variant), vote, take the heaviest cell, and estimate the
final pose with a two-point RANSAC over the peak's matches. Keypoint
orientations steer descriptors only; pose estimation uses point positions.

Labeling (used by evaluation, never at deployment) marks a match as an
inlier when any of three measures fires: its own pose vote is success-grade
against the truth (position and orientation); it forms a success-grade
two-point pose with some partner voting in the same cell; or it forms a
success-grade two-point pose with a synthetic anchor placed at the true
query position. All three ask the same question — could this match take
part in a success-grade pose — which keeps the labels meaningful even when
dense matching drops many accidental votes near the true position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ParameterConfig, config_fingerprint
from .errors import ConfigMismatchError, MapEmptyError, TooFewMatchesError
from .features import Match, describe_binary, describe_real, detect_keypoints, match_keys, match_nearest, project
from .geometry import Pose2D, SuccessThresholds, wrap_angle
from .imaging import GrayImage
from .mapping import ReferenceMap, nearby_reference_images
from .voting import VoteHistogram, VotingPeak, cast_votes, find_peak

DEFAULT_RANSAC_ITERATIONS = 1000
DEFAULT_RANSAC_TOLERANCE = 5.0  # pixels
_DEGENERATE_SPAN = 1e-9


@dataclass(frozen=True)
class PosePrior:
    """Rough pose with a search radius, limiting which map images to match."""

    pose: Pose2D
    radius: float


@dataclass
class LocStats:
    num_query_features: int = 0
    num_matches: int = 0
    num_occupied_cells: int = 0
    peak_votes: int = 0
    work_ops: float = 0.0
    inliers_on_peak: int | None = None
    inlier_cell_counts: list | None = None


@dataclass
class LocalizationResult:
    estimated_pose: Pose2D | None
    peak: VotingPeak | None
    matches: list
    histogram: VoteHistogram | None
    stats: LocStats = field(default_factory=LocStats)


@dataclass(frozen=True)
class MatchLabel:
    measure1: bool
    measure2: bool
    measure3: bool

    @property
    def is_inlier(self) -> bool:
        return self.measure1 or self.measure2 or self.measure3


def rigid_fit(src: np.ndarray, dst: np.ndarray) -> Pose2D:
    """Least-squares rigid transform (rotation + translation) src -> dst."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    ms = src.mean(axis=0)
    md = dst.mean(axis=0)
    s = src - ms
    d = dst - md
    num = float(np.sum(s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]))
    den = float(np.sum(s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]))
    theta = math.atan2(num, den)
    c, sn = math.cos(theta), math.sin(theta)
    tx = md[0] - (c * ms[0] - sn * ms[1])
    ty = md[1] - (sn * ms[0] + c * ms[1])
    return Pose2D(tx, ty, wrap_angle(theta))


def _pair_poses(q1, r1, q2, r2):
    """Vectorized two-point rigid fits; returns (tx, ty, theta, valid)."""
    u = q2 - q1
    v = r2 - r1
    span_q = np.hypot(u[:, 0], u[:, 1])
    span_r = np.hypot(v[:, 0], v[:, 1])
    valid = (span_q > _DEGENERATE_SPAN) & (span_r > _DEGENERATE_SPAN)
    theta = np.arctan2(
        u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0], u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]
    )
    ms = (q1 + q2) / 2.0
    md = (r1 + r2) / 2.0
    c, s = np.cos(theta), np.sin(theta)
    tx = md[:, 0] - (c * ms[:, 0] - s * ms[:, 1])
    ty = md[:, 1] - (s * ms[:, 0] + c * ms[:, 1])
    return tx, ty, theta, valid


def _match_points(matches: list) -> tuple[np.ndarray, np.ndarray]:
    q = np.array([[m.query.keypoint.x, m.query.keypoint.y] for m in matches], dtype=np.float64)
    r = np.array(
        [[m.reference.keypoint.x, m.reference.keypoint.y] for m in matches], dtype=np.float64
    )
    return q.reshape(-1, 2), r.reshape(-1, 2)


def estimate_pose_ransac(
    matches: list,
    iterations: int = DEFAULT_RANSAC_ITERATIONS,
    tolerance: float = DEFAULT_RANSAC_TOLERANCE,
    seed: int = 0,
) -> Pose2D | None:
    """Two-point RANSAC over match positions with least-squares refinement.

    The sampled pair always counts toward its own consensus, so two mutually
    inconsistent matches still yield a pose (consensus 2); that degenerate
    acceptance is deliberate, RANSAC cannot validate with only two matches.
    When all candidate pairs are geometrically degenerate (coincident
    points), returns None.
    """
    n = len(matches)
    if n < 2:
        raise TooFewMatchesError(f"pose estimation needs >= 2 matches, got {n}")
    q, r = _match_points(matches)

    n_pairs = n * (n - 1) // 2
    if n_pairs <= iterations:
        ii, jj = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        ii = rng.integers(0, n, size=iterations)
        jj = rng.integers(0, n, size=iterations)
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
        if len(ii) == 0:
            return None

    tx, ty, theta, valid = _pair_poses(q[ii], r[ii], q[jj], r[jj])
    if not valid.any():
        return None
    idx = np.nonzero(valid)[0]
    c, s = np.cos(theta[idx]), np.sin(theta[idx])
    # residuals of every match under every surviving hypothesis
    px = c[:, None] * q[None, :, 0] - s[:, None] * q[None, :, 1] + tx[idx][:, None]
    py = s[:, None] * q[None, :, 0] + c[:, None] * q[None, :, 1] + ty[idx][:, None]
    res2 = (px - r[None, :, 0]) ** 2 + (py - r[None, :, 1]) ** 2
    inliers = res2 <= tolerance * tolerance
    inliers[np.arange(len(idx)), ii[idx]] = True
    inliers[np.arange(len(idx)), jj[idx]] = True
    counts = inliers.sum(axis=1)
    sse = np.where(inliers, res2, 0.0).sum(axis=1)
    order = np.lexsort((sse, -counts))
    best = order[0]
    consensus = inliers[best]
    if consensus.sum() < 2:
        return None

    pose = rigid_fit(q[consensus], r[consensus])
    for _ in range(2):  # refinement rounds: re-fit on the refreshed consensus
        c1, s1 = math.cos(pose.theta), math.sin(pose.theta)
        rx = c1 * q[:, 0] - s1 * q[:, 1] + pose.x
        ry = s1 * q[:, 0] + c1 * q[:, 1] + pose.y
        new_consensus = (rx - r[:, 0]) ** 2 + (ry - r[:, 1]) ** 2 <= tolerance * tolerance
        if new_consensus.sum() < 2 or np.array_equal(new_consensus, consensus):
            break
        consensus = new_consensus
        pose = rigid_fit(q[consensus], r[consensus])
    return pose


def _identity_matches(refmap: ReferenceMap, query_features, image_ids=None):
    from .features import pack_bits

    if not query_features:
        return [], 0.0
    qkeys = pack_bits(np.vstack([f.descriptor for f in query_features]))
    images = refmap.images if image_ids is None else [refmap.image_by_id(i) for i in image_ids]
    matches = []
    probe_work = 0.0
    for im in images:
        skeys, order = im.identity_key_table()
        if len(skeys) == 0:
            continue
        probe_work += len(qkeys) * (math.log2(len(skeys) + 1) + 1.0)
        qi, ri = match_keys(qkeys, skeys, order)
        offset = im.feature_id_offset
        feats = im.features
        matches.extend(
            Match(a, offset + b, query_features[a], feats[b])
            for a, b in zip(qi.tolist(), ri.tolist())
        )
    return matches, probe_work


def localize(
    query_image: GrayImage,
    refmap: ReferenceMap,
    config: ParameterConfig,
    prior: PosePrior | None = None,
    ransac_iterations: int = DEFAULT_RANSAC_ITERATIONS,
    ransac_tolerance: float = DEFAULT_RANSAC_TOLERANCE,
    seed: int = 0,
) -> LocalizationResult:
    """Full localization attempt; deterministic given inputs and seed.

    The returned pose is None when the vote peak holds fewer than two
    matches (or no matches exist at all). ``stats.work_ops`` is a
    deterministic operation-count estimate of the attempt's cost, used by
    the optimizer as its time proxy.
    """
    if refmap.fingerprint != config_fingerprint(config):
        raise ConfigMismatchError(
            "map fingerprint does not match the session config; rebuild the map "
            "or load it with an explicit override"
        )
    if refmap.num_features == 0:
        raise MapEmptyError("reference map holds no features")

    npix = query_image.width * query_image.height
    work = npix * config.num_scales / 1000.0

    kps = detect_keypoints(query_image, config.detector_params(), max_count=config.query_feature_cap)
    if config.matching_variant == "nearest":
        feats = describe_real(query_image, kps)
        if feats and refmap.projection is not None:
            mat = project(refmap.projection, np.vstack([f.descriptor for f in feats]))
            feats = [f.__class__(f.keypoint, mat[i], "real") for i, f in enumerate(feats)]
        work += len(feats) * 324 * 4.0 / 1000.0
        if feats:
            matches = match_nearest(feats, refmap.nn_index())
            work += len(feats) * math.log2(refmap.num_features + 2) * config.pca_dim / 1000.0
        else:
            matches = []
    else:
        feats = describe_binary(query_image, kps, config.descriptor_params())
        work += len(feats) * config.comparison_count * 2 * 4.0 / 1000.0
        image_ids = None
        if prior is not None:
            image_ids = nearby_reference_images(refmap, prior.pose, prior.radius)
        matches, probe_work = _identity_matches(refmap, feats, image_ids)
        work += probe_work / 1000.0

    stats = LocStats(num_query_features=len(feats), num_matches=len(matches))
    if not matches:
        stats.work_ops = work
        return LocalizationResult(None, None, [], VoteHistogram(cell_size=config.cell_size), stats)

    hist = cast_votes(matches, config.cell_size)
    work += len(matches) * 8.0 / 1000.0
    peak = find_peak(hist)
    stats.num_occupied_cells = hist.num_occupied
    stats.peak_votes = peak.vote_count

    pose = None
    if peak.vote_count >= 2:
        peak_matches = [matches[i] for i in peak.match_ids]
        pose = estimate_pose_ransac(
            peak_matches, iterations=ransac_iterations, tolerance=ransac_tolerance, seed=seed
        )
        n_hyp = min(len(peak_matches) * (len(peak_matches) - 1) // 2, ransac_iterations)
        work += n_hyp * (4.0 + peak.vote_count * 6.0) / 1000.0
    stats.work_ops = work
    return LocalizationResult(pose, peak, matches, hist, stats)


def label_matches(
    matches: list,
    truth: Pose2D,
    thresholds: SuccessThresholds,
    histogram: VoteHistogram,
) -> list[MatchLabel]:
    """Ground-truth inlier labels for every match (see module docstring).

    ``histogram`` must be the one cast from ``matches`` (ids are positions).
    """
    n = len(matches)
    if n == 0:
        return []
    q, r = _match_points(matches)
    votes = histogram.votes
    m1_pos = (
        np.hypot(votes[:, 0] - truth.x, votes[:, 1] - truth.y)
        <= thresholds.max_position_error
    )
    m1_ang = np.abs(
        math.pi - (math.pi - (votes[:, 2] - truth.theta)) % (2.0 * math.pi)
    )
    m1 = m1_pos & (np.degrees(m1_ang) <= thresholds.max_orientation_error_deg)

    def pose_ok(tx, ty, theta, valid):
        # vectorized is_success over pair-fit pose arrays
        dpos = np.hypot(tx - truth.x, ty - truth.y)
        dang = np.abs(math.pi - (math.pi - (theta - truth.theta)) % (2.0 * math.pi))
        return (
            valid
            & (dpos <= thresholds.max_position_error)
            & (np.degrees(dang) <= thresholds.max_orientation_error_deg)
        )

    # measure 3: pair each match with an anchor at the true query position
    zeros = np.zeros_like(q)
    anchor = np.tile([truth.x, truth.y], (n, 1))
    m3 = pose_ok(*_pair_poses(q, r, zeros, anchor))

    # measure 2: success-grade two-point pose with a same-cell partner
    m2 = np.zeros(n, dtype=bool)
    for ids in histogram.cells.values():
        if len(ids) < 2:
            continue
        ids_arr = np.asarray(ids)
        ai, bi = np.triu_indices(len(ids_arr), k=1)
        ia, ib = ids_arr[ai], ids_arr[bi]
        ok = pose_ok(*_pair_poses(q[ia], r[ia], q[ib], r[ib]))
        m2[ia[ok]] = True
        m2[ib[ok]] = True

    return [MatchLabel(bool(m1[i]), bool(m2[i]), bool(m3[i])) for i in range(n)]


def inlier_counts_per_cell(histogram: VoteHistogram, labels: list) -> dict:
    """Cell -> number of labeled inliers among its votes."""
    return {
        cell: sum(1 for mid in ids if labels[mid].is_inlier)
        for cell, ids in histogram.cells.items()
    }


def attach_labels(result: LocalizationResult, labels: list) -> None:
    """Fill the label-dependent fields of ``result.stats`` in place."""
    if result.histogram is None or not labels:
        result.stats.inliers_on_peak = 0
        result.stats.inlier_cell_counts = []
        return
    per_cell = inlier_counts_per_cell(result.histogram, labels)
    counts = sorted((c for c in per_cell.values() if c > 0), reverse=True)
    result.stats.inlier_cell_counts = counts
    result.stats.inliers_on_peak = per_cell.get(result.peak.cell, 0) if result.peak else 0
