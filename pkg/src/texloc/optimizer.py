"""Model-driven parameter search over the ten-knob configuration grid.

The loop samples random grid configurations, scores each with the fast
test-image evaluation plus the analytic success model (never the full
map), and refines promising candidates by a gated local search. A
candidate enters local search when its score is within 0.05 of the
incumbent; it replaces the incumbent when its score is at least 0.005
higher, or within 0.005 while cheaper to evaluate.

"Time" here is a deterministic work proxy (mean per-attempt operation
count scaled to pseudo-seconds), not wall time, so optimization logs are
byte-reproducible under fixed seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import PARAM_NAMES, ParameterConfig, ParameterSpace
from .errors import EmptyRecordsError
from .evaluation import (
    FeatureCache,
    TestImageSet,
    estimate_cells_per_reference_image,
    estimate_model_inputs,
    run_inlier_evaluation,
    run_outlier_evaluation,
    vote_cell_bound,
)
from .prediction import (
    PredictionInputs,
    predict_success_rate,
    scale_inputs_for_nr,
)

LOCAL_OPT_GATE = 0.05  # candidate may trail the best by this much and still refine
SUPERIORITY_MARGIN = 0.005
MIN_LOCAL_ITERATIONS = 12
WORK_OPS_PER_PSEUDO_SECOND = 1e6


@dataclass(frozen=True)
class ScoredConfig:
    """A configuration with its predicted success and evaluation cost."""

    config: ParameterConfig
    predicted_success: float
    eval_time: float  # pseudo-seconds, deterministic work proxy
    inputs: PredictionInputs | None = None

    def __post_init__(self):
        if not (0.0 <= self.predicted_success <= 1.0):
            raise ValueError("predicted success must be a probability")


@dataclass
class OptLogEntry:
    iteration: int
    phase: str  # "sample" or "local"
    scored: ScoredConfig
    accepted: bool = False


@dataclass
class OptimizationResult:
    best: ScoredConfig
    log: list = field(default_factory=list)

    def sampled_entries(self) -> list:
        return [e for e in self.log if e.phase == "sample"]


def sample_config(space: ParameterSpace, rng: np.random.Generator) -> ParameterConfig:
    """Uniform draw over the space's grid (each knob independent)."""
    return space.sample(rng)


def evaluate_config(
    config: ParameterConfig,
    test_set: TestImageSet,
    expected_cells: float | None = None,
) -> ScoredConfig:
    """Score one configuration from test images alone.

    Runs the inlier and outlier evaluations on the set's mini-maps,
    estimates the model inputs, and predicts the full-map success rate.
    When ``expected_cells`` is omitted it is derived from the outlier
    records: occupied cells per reference image times the set's target map
    size. Never touches a full map, which is the whole point.
    """
    cache = FeatureCache(config)
    inlier_records = run_inlier_evaluation(test_set, config, cache=cache)
    outlier_records = run_outlier_evaluation(test_set, config, cache=cache)

    try:
        if expected_cells is None:
            per_image = estimate_cells_per_reference_image(outlier_records)
            expected_cells = per_image * test_set.target_map_images
            bound = vote_cell_bound(test_set, config.cell_size)
            if bound is not None:
                expected_cells = min(expected_cells, bound)
        inputs = estimate_model_inputs(
            inlier_records,
            outlier_records,
            expected_cells,
            config.matching_variant,
            expected_map_images=test_set.target_map_images,
        )
        predicted = predict_success_rate(inputs)
    except EmptyRecordsError:
        inputs = None
        predicted = 0.0

    records = inlier_records + outlier_records
    mean_ops = float(np.mean([r.work_ops for r in records])) if records else 0.0
    return ScoredConfig(
        config=config,
        predicted_success=predicted,
        eval_time=mean_ops / WORK_OPS_PER_PSEUDO_SECOND,
        inputs=inputs,
    )


def should_locally_optimize(candidate: ScoredConfig, best: ScoredConfig | None) -> bool:
    """Gate into local search: within 0.05 of the incumbent (or no incumbent)."""
    if best is None:
        return True
    return candidate.predicted_success >= best.predicted_success - LOCAL_OPT_GATE


def is_superior(a: ScoredConfig, b: ScoredConfig | None) -> bool:
    """Replacement rule: clearly better, or about as good but cheaper."""
    if b is None:
        return True
    if a.predicted_success >= b.predicted_success + SUPERIORITY_MARGIN:
        return True
    return (
        a.predicted_success >= b.predicted_success - SUPERIORITY_MARGIN
        and a.eval_time < b.eval_time
    )


def _rescored_for_nr(current: ScoredConfig, new_nr: int) -> ScoredConfig:
    """Budget-change shortcut: rescale the model inputs, run nothing."""
    old_nr = current.config.reference_feature_cap
    scaled = scale_inputs_for_nr(current.inputs, old_nr, new_nr)
    return ScoredConfig(
        config=current.config.with_value("reference_feature_cap", new_nr),
        predicted_success=predict_success_rate(scaled),
        eval_time=current.eval_time,
        inputs=scaled,
    )


def local_optimize(
    start: ScoredConfig,
    space: ParameterSpace,
    test_set: TestImageSet,
    rng: np.random.Generator,
    expected_cells: float | None = None,
    min_iterations: int = MIN_LOCAL_ITERATIONS,
    log: list | None = None,
    iteration: int = 0,
) -> ScoredConfig:
    """Coordinate-wise stochastic refinement around a scored start.

    Each round picks one knob at random, scores its grid neighbors at one
    and two steps in both directions, and adopts the best neighbor if it
    strictly improves the prediction. The reference-budget knob is scored
    through input rescaling with zero extra localization runs. Rounds
    continue while they improve, but always at least ``min_iterations``.
    """
    current = start
    rounds = 0
    while True:
        rounds += 1
        name = PARAM_NAMES[int(rng.integers(len(PARAM_NAMES)))]
        candidates = []
        for value in space.neighbor_values(name, getattr(current.config, name)):
            if name == "reference_feature_cap" and current.inputs is not None:
                scored = _rescored_for_nr(current, value)
            else:
                scored = evaluate_config(
                    current.config.with_value(name, value), test_set, expected_cells
                )
            candidates.append(scored)
            if log is not None:
                log.append(OptLogEntry(iteration=iteration, phase="local", scored=scored))
        improved = None
        for scored in candidates:
            if scored.predicted_success > current.predicted_success and (
                improved is None or scored.predicted_success > improved.predicted_success
            ):
                improved = scored
        if improved is not None:
            current = improved
            if log is not None:
                log[-len(candidates) + candidates.index(improved)].accepted = True
        elif rounds >= min_iterations:
            return current


def run_optimization(
    space: ParameterSpace,
    test_set: TestImageSet,
    budget_iterations: int,
    seed: int = 0,
    expected_cells: float | None = None,
) -> OptimizationResult:
    """Sample → gate → refine → keep-the-best, for a fixed iteration budget.

    Deterministic for a given seed and budget. Every scored configuration
    lands in the log; ``accepted`` marks sample rows whose (refined)
    candidate became the incumbent, and local rows adopted during
    refinement.
    """
    if budget_iterations < 1:
        raise ValueError("need at least one iteration")
    rng = np.random.default_rng(seed)
    best: ScoredConfig | None = None
    log: list = []
    for it in range(budget_iterations):
        candidate = evaluate_config(sample_config(space, rng), test_set, expected_cells)
        entry = OptLogEntry(iteration=it, phase="sample", scored=candidate)
        log.append(entry)
        if should_locally_optimize(candidate, best):
            candidate = local_optimize(
                candidate, space, test_set, rng, expected_cells, log=log, iteration=it
            )
        if is_superior(candidate, best):
            best = candidate
            entry.accepted = True
    return OptimizationResult(best=best, log=log)


_LOG_COLUMNS = (
    ["iteration", "phase", "matching_variant"]
    + list(PARAM_NAMES)
    + ["predicted_success", "eval_time", "accepted"]
)


def write_optimization_log(log: list, path) -> None:
    """Byte-stable CSV of every scored configuration."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_LOG_COLUMNS)
        for e in log:
            cfg = e.scored.config
            writer.writerow(
                [e.iteration, e.phase, cfg.matching_variant]
                + [repr(getattr(cfg, name)) for name in PARAM_NAMES]
                + [repr(e.scored.predicted_success), repr(e.scored.eval_time), int(e.accepted)]
            )
