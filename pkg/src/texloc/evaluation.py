"""Test-image evaluation: the empirical side of the success model.

Two small localization campaigns feed the model. The *inlier* evaluation
runs each test query against a mini-map of overlapping reference images,
so true correspondences exist and get labeled by the ground-truth oracle.
The *outlier* evaluation runs the same queries against deliberately
non-overlapping references, so every match is spurious by construction.
From the two record sets we estimate the model inputs (expected feature,
match, and cell counts plus the per-cell inlier profile), compute baseline
predictors, and check the spatial-randomness assumption against the
observed per-cell vote counts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ParameterConfig, config_fingerprint
from .errors import EmptyInputError, EmptyRecordsError
from .geometry import DEFAULT_THRESHOLDS, Pose2D, SuccessThresholds, is_success, pose_error
from .imaging import GrayImage
from .localization import attach_labels, label_matches, localize
from .mapping import ReferenceMap, assemble_map, extract_image_features
from .prediction import InlierCellStats, PredictionInputs, outlier_cell_distribution


@dataclass(frozen=True)
class RefImage:
    """A reference image candidate for mini-maps, with its map-frame pose."""

    image_id: int
    image: GrayImage
    pose: Pose2D


@dataclass(frozen=True)
class QueryCase:
    query_id: int
    image: GrayImage
    truth: Pose2D


@dataclass
class TestImageSet:
    """Queries plus, per query, overlapping and non-overlapping references.

    ``target_map_images`` is the size of the full map this set stands in
    for; it converts per-reference-image cell averages into a whole-map
    expected cell count. ``map_extent``, when known, is the (width, height)
    of the region the full map covers; it caps that extrapolation, because
    votes from many reference images pile into the same bounded area
    instead of each image opening fresh cells.
    """

    queries: list
    inlier_refs: list  # parallel to queries: list[RefImage] each
    outlier_refs: list  # parallel to queries: list[RefImage] each
    target_map_images: int = 1
    map_extent: tuple = None  # (width, height) in map units, or None

    def __post_init__(self):
        if not (len(self.queries) == len(self.inlier_refs) == len(self.outlier_refs)):
            raise EmptyInputError("per-query reference lists must parallel the query list")
        if self.target_map_images < 1:
            raise EmptyInputError("target map size must be at least one image")
        if self.map_extent is not None:
            w, h = self.map_extent
            if not (w > 0 and h > 0):
                raise EmptyInputError("map extent must be a positive (width, height) pair")
            self.map_extent = (float(w), float(h))


@dataclass(frozen=True)
class EvalRecord:
    """Observables of one localization attempt, the unit of estimation."""

    query_id: int
    num_query_features: int
    num_matches: int
    num_occupied_cells: int
    num_reference_images: int
    peak_votes: int
    inliers_on_peak: int
    inlier_cell_counts: tuple  # per-cell labeled-inlier counts, descending
    cell_vote_counts: tuple  # per-cell total vote counts, descending
    success: bool
    position_error: float  # nan when no pose was produced
    orientation_error: float
    work_ops: float

    @property
    def num_inlier_matches(self) -> int:
        return int(sum(self.inlier_cell_counts))

    @property
    def num_outlier_matches(self) -> int:
        return self.num_matches - self.num_inlier_matches


class FeatureCache:
    """Per-image raw feature extraction memo, valid for one config only."""

    def __init__(self, config: ParameterConfig):
        self.config = config
        self.fingerprint = config_fingerprint(config)
        self._store = {}

    def features_for(self, ref: RefImage):
        got = self._store.get(ref.image_id)
        if got is None:
            got = extract_image_features(
                ref.image,
                self.config,
                subsample_seed=[0x7E57, ref.image_id],
            )
            self._store[ref.image_id] = got
        return got


def _mini_map(refs: list, cache: FeatureCache) -> ReferenceMap:
    entries = [
        (r.image_id, r.pose, r.image.width, r.image.height, cache.features_for(r))
        for r in refs
    ]
    return assemble_map(entries, cache.config)


def _attempt_record(
    query: QueryCase,
    refs: list,
    cache: FeatureCache,
    thresholds: SuccessThresholds,
    label: bool,
) -> EvalRecord:
    refmap = _mini_map(refs, cache)
    result = localize(query.image, refmap, cache.config, seed=query.query_id)

    if label and result.matches:
        labels = label_matches(result.matches, query.truth, thresholds, result.histogram)
        attach_labels(result, labels)
        inlier_counts = tuple(result.stats.inlier_cell_counts)
        on_peak = result.stats.inliers_on_peak
    else:
        inlier_counts = ()
        on_peak = 0

    if result.estimated_pose is not None:
        perr, oerr = pose_error(result.estimated_pose, query.truth)
        success = is_success(result.estimated_pose, query.truth, thresholds)
    else:
        perr, oerr, success = math.nan, math.nan, False

    cell_counts = tuple(sorted((len(ids) for ids in result.histogram.cells.values()), reverse=True))
    return EvalRecord(
        query_id=query.query_id,
        num_query_features=result.stats.num_query_features,
        num_matches=result.stats.num_matches,
        num_occupied_cells=result.stats.num_occupied_cells,
        num_reference_images=len(refs),
        peak_votes=result.stats.peak_votes,
        inliers_on_peak=on_peak,
        inlier_cell_counts=inlier_counts,
        cell_vote_counts=cell_counts,
        success=success,
        position_error=perr,
        orientation_error=oerr,
        work_ops=result.stats.work_ops,
    )


def run_inlier_evaluation(
    test_set: TestImageSet,
    config: ParameterConfig,
    thresholds: SuccessThresholds = DEFAULT_THRESHOLDS,
    cache: FeatureCache | None = None,
) -> list:
    """One attempt per query against its overlapping mini-map, with labels."""
    cache = _check_cache(cache, config)
    return [
        _attempt_record(q, refs, cache, thresholds, label=True)
        for q, refs in zip(test_set.queries, test_set.inlier_refs)
    ]


def run_outlier_evaluation(
    test_set: TestImageSet,
    config: ParameterConfig,
    thresholds: SuccessThresholds = DEFAULT_THRESHOLDS,
    cache: FeatureCache | None = None,
) -> list:
    """One attempt per query against non-overlapping references.

    No overlap means no true correspondence can exist, so the labeled
    inlier count is zero by construction and the oracle is skipped.
    """
    cache = _check_cache(cache, config)
    return [
        _attempt_record(q, refs, cache, thresholds, label=False)
        for q, refs in zip(test_set.queries, test_set.outlier_refs)
    ]


def _check_cache(cache, config: ParameterConfig) -> FeatureCache:
    if cache is None:
        return FeatureCache(config)
    if cache.fingerprint != config_fingerprint(config):
        raise EmptyInputError("feature cache was built for a different config")
    return cache


def estimate_model_inputs(
    inlier_records: list,
    outlier_records: list,
    expected_cells: float,
    matching_variant: str,
    expected_map_images: int = 1,
) -> PredictionInputs:
    """Turn the two record sets into success-model inputs.

    Query feature count averages over both campaigns. The expected outlier
    count is the mean match count of the outlier evaluation for the
    nearest-descriptor variant (one match per query feature regardless of
    map size); for identity matching every reference image contributes its
    own collisions, so the per-reference-image match rate is scaled up by
    ``expected_map_images``. The inlier profile ranks each record's
    per-cell inlier counts, averages them rank-wise, and drops trailing
    all-zero ranks.
    """
    if not inlier_records or not outlier_records:
        raise EmptyRecordsError("need at least one record of each kind")

    both = list(inlier_records) + list(outlier_records)
    expected_fq = float(np.mean([r.num_query_features for r in both]))

    if matching_variant == "identity":
        rates = [
            r.num_matches / r.num_reference_images
            for r in outlier_records
            if r.num_reference_images > 0
        ]
        per_image = float(np.mean(rates)) if rates else 0.0
        expected_outliers = per_image * expected_map_images
    else:
        expected_outliers = float(np.mean([r.num_matches for r in outlier_records]))

    depth = max((len(r.inlier_cell_counts) for r in inlier_records), default=0)
    cells = []
    for rank in range(depth):
        mean_count = float(
            np.mean([
                r.inlier_cell_counts[rank] if rank < len(r.inlier_cell_counts) else 0
                for r in inlier_records
            ])
        )
        if mean_count <= 0.0:
            continue
        p_hit = min(1.0, mean_count / expected_fq) if expected_fq > 0 else 0.0
        cells.append(InlierCellStats(mean_count=mean_count, hit_probability=p_hit))
    cells.sort(key=lambda c: -c.mean_count)

    return PredictionInputs(
        expected_cells=max(1.0, expected_cells),
        expected_query_features=expected_fq,
        expected_outliers=expected_outliers,
        inlier_cells=tuple(cells),
    )


def estimate_cells_per_reference_image(outlier_records: list) -> float:
    """Average occupied voting cells contributed per reference image."""
    if not outlier_records:
        raise EmptyRecordsError("no outlier records")
    ratios = [
        r.num_occupied_cells / r.num_reference_images
        for r in outlier_records
        if r.num_reference_images > 0
    ]
    return float(np.mean(ratios)) if ratios else 0.0


def vote_cell_bound(test_set: TestImageSet, cell_size: float) -> float:
    """Geometric ceiling on the number of distinct voting cells.

    Votes estimate the query's translation, so they concentrate on the
    map's covered area plus at most a query diagonal of spill on each
    side. Returns None when the set does not know its map extent.
    """
    if test_set.map_extent is None:
        return None
    if cell_size <= 0:
        raise EmptyInputError("cell size must be positive")
    ew, eh = test_set.map_extent
    diag = 0.0
    if test_set.queries:
        img = test_set.queries[0].image
        diag = math.hypot(img.width, img.height)
    nx = math.floor((ew + diag) / cell_size) + 1
    ny = math.floor((eh + diag) / cell_size) + 1
    return float(nx * ny)


def local_success_rate(inlier_records: list, outlier_records: list) -> float:
    """Baseline predictor: inlier-evaluation peaks vs outlier peaks.

    A query counts as a local success when its inlier-evaluation peak holds
    at least two labeled inliers and strictly more votes than the largest
    peak seen anywhere in the outlier evaluation (pooled maximum).
    """
    if not inlier_records:
        raise EmptyRecordsError("no inlier records")
    outlier_bar = max((r.peak_votes for r in outlier_records), default=0)
    hits = sum(
        1
        for r in inlier_records
        if r.inliers_on_peak >= 2 and r.peak_votes > outlier_bar
    )
    return hits / len(inlier_records)


def inlier_ratio(inlier_records: list, outlier_records: list) -> float:
    """Baseline predictor: labeled inliers over all matches, both campaigns."""
    records = list(inlier_records) + list(outlier_records)
    total = sum(r.num_matches for r in records)
    if total == 0:
        return 0.0
    return sum(r.num_inlier_matches for r in records) / total


def global_success_rate(
    queries: list,
    refmap: ReferenceMap,
    config: ParameterConfig,
    thresholds: SuccessThresholds = DEFAULT_THRESHOLDS,
) -> float:
    rate, _ = evaluate_global(queries, refmap, config, thresholds)
    return rate


def evaluate_global(
    queries: list,
    refmap: ReferenceMap,
    config: ParameterConfig,
    thresholds: SuccessThresholds = DEFAULT_THRESHOLDS,
) -> tuple:
    """Exhaustive evaluation against the full map: (success rate, records).

    The records skip the inlier-labeling oracle (it needs per-query
    mini-map context and is irrelevant to the headline rate).
    """
    if not queries:
        raise EmptyInputError("no queries to evaluate")
    records = []
    hits = 0
    for q in queries:
        result = localize(q.image, refmap, config, seed=q.query_id)
        if result.estimated_pose is not None:
            perr, oerr = pose_error(result.estimated_pose, q.truth)
            ok = is_success(result.estimated_pose, q.truth, thresholds)
        else:
            perr, oerr, ok = math.nan, math.nan, False
        hits += ok
        cell_counts = tuple(
            sorted((len(ids) for ids in result.histogram.cells.values()), reverse=True)
        )
        records.append(
            EvalRecord(
                query_id=q.query_id,
                num_query_features=result.stats.num_query_features,
                num_matches=result.stats.num_matches,
                num_occupied_cells=result.stats.num_occupied_cells,
                num_reference_images=len(refmap.images),
                peak_votes=result.stats.peak_votes,
                inliers_on_peak=0,
                inlier_cell_counts=(),
                cell_vote_counts=cell_counts,
                success=ok,
                position_error=perr,
                orientation_error=oerr,
                work_ops=result.stats.work_ops,
            )
        )
    return hits / len(queries), records


@dataclass
class CsrDiagnostic:
    """Observed vs predicted votes-per-cell histograms (cells with >= 1 vote)."""

    empirical: np.ndarray = field(repr=False)  # index i -> fraction of cells with i+1 votes
    predicted: np.ndarray = field(repr=False)
    total_variation: float = 0.0


def csr_diagnostic(outlier_records: list) -> CsrDiagnostic:
    """Check the spatial-randomness assumption on outlier-evaluation votes.

    Pools every record's per-cell vote counts into a ratio-of-cells
    histogram and compares it against the binomial law fitted from the
    records' mean match and cell counts. Real textures cluster a little,
    which typically shows up as the prediction undershooting the
    lowest-count bins.
    """
    populated = [r for r in outlier_records if r.num_occupied_cells > 0]
    if not populated:
        raise EmptyRecordsError("no outlier record has any votes")

    counts = np.concatenate([np.asarray(r.cell_vote_counts) for r in populated])
    empirical = np.bincount(counts)[1:].astype(np.float64)
    empirical /= empirical.sum()

    mean_cells = float(np.mean([r.num_occupied_cells for r in populated]))
    mean_matches = float(np.mean([r.num_matches for r in populated]))
    inputs = PredictionInputs(
        expected_cells=max(1.0, mean_cells),
        expected_query_features=0.0,
        expected_outliers=mean_matches,
    )
    predicted = outlier_cell_distribution(inputs).ratio_of_cells()

    width = max(len(empirical), len(predicted))
    emp = np.zeros(width)
    emp[: len(empirical)] = empirical
    pred = np.zeros(width)
    pred[: len(predicted)] = predicted
    tv = 0.5 * float(np.abs(emp - pred).sum())
    return CsrDiagnostic(empirical=emp, predicted=pred, total_variation=tv)


_CSV_COLUMNS = [
    "query_id",
    "num_query_features",
    "num_matches",
    "num_occupied_cells",
    "num_reference_images",
    "peak_votes",
    "inliers_on_peak",
    "inlier_cell_counts",
    "cell_vote_counts",
    "success",
    "position_error",
    "orientation_error",
    "work_ops",
]


def _fmt_float(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_records_csv(records: list, path) -> None:
    """Byte-stable CSV dump (floats via repr, count lists ';'-joined)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.query_id,
                    r.num_query_features,
                    r.num_matches,
                    r.num_occupied_cells,
                    r.num_reference_images,
                    r.peak_votes,
                    r.inliers_on_peak,
                    ";".join(str(c) for c in r.inlier_cell_counts),
                    ";".join(str(c) for c in r.cell_vote_counts),
                    int(r.success),
                    _fmt_float(r.position_error),
                    _fmt_float(r.orientation_error),
                    repr(float(r.work_ops)),
                ]
            )


def read_records_csv(path) -> list:
    def ints(cell: str) -> tuple:
        return tuple(int(v) for v in cell.split(";")) if cell else ()

    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != _CSV_COLUMNS:
            raise EmptyRecordsError(f"unrecognized record CSV header in {path}")
        for row in reader:
            records.append(
                EvalRecord(
                    query_id=int(row["query_id"]),
                    num_query_features=int(row["num_query_features"]),
                    num_matches=int(row["num_matches"]),
                    num_occupied_cells=int(row["num_occupied_cells"]),
                    num_reference_images=int(row["num_reference_images"]),
                    peak_votes=int(row["peak_votes"]),
                    inliers_on_peak=int(row["inliers_on_peak"]),
                    inlier_cell_counts=ints(row["inlier_cell_counts"]),
                    cell_vote_counts=ints(row["cell_vote_counts"]),
                    success=bool(int(row["success"])),
                    position_error=float(row["position_error"]),
                    orientation_error=float(row["orientation_error"]),
                    work_ops=float(row["work_ops"]),
                )
            )
    return records
