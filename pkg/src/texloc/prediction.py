"""Closed-form localization success-rate model.

An attempt succeeds when the vote-histogram peak carries at least two true
correspondences. Treating outlier votes as spatially random (each of the
expected O outliers lands in any of the |V| occupied cells with equal
probability) and inlier votes per inlier-capable cell as independent
Bernoulli trials over the query features, the per-cell vote counts become
binomial laws. The success probability is then one minus the probability
that no inlier-capable cell simultaneously (a) collects at least two
inliers and (b) strictly out-votes every other cell.

All probability vectors are computed in log space (gammaln) and truncated
where the remaining tail mass is negligible, so the model stays exact to
around 1e-9 even for feature counts in the millions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import DomainError

_TAIL_EPS = 1e-12  # per-vector truncation; comfortably below the 1e-9 budget


def binomial_pmf(i, p: float, n: int):
    """P[X = i] for X ~ Binomial(n, p); ``i`` may be a scalar or array.

    Evaluated via log-gamma, so it stays finite and accurate for n up to the
    millions. Out-of-range i gives 0. Raises DomainError for an invalid law.
    """
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"success probability {p} outside [0, 1]")
    if n < 0 or int(n) != n:
        raise DomainError(f"trial count {n} must be a non-negative integer")
    n = int(n)
    i_arr = np.asarray(i)
    scalar = i_arr.ndim == 0
    k = np.atleast_1d(i_arr).astype(np.float64)
    out = np.zeros_like(k, dtype=np.float64)
    inside = (k >= 0) & (k <= n) & (k == np.floor(k))
    kk = k[inside]
    if p == 0.0:
        out[inside] = (kk == 0).astype(np.float64)
    elif p == 1.0:
        out[inside] = (kk == n).astype(np.float64)
    else:
        logpmf = (
            gammaln(n + 1.0)
            - gammaln(kk + 1.0)
            - gammaln(n - kk + 1.0)
            + kk * math.log(p)
            + (n - kk) * math.log1p(-p)
        )
        out[inside] = np.exp(logpmf)
    return float(out[0]) if scalar else out.reshape(i_arr.shape)


def _pmf_vector(p: float, n: int, tail: float = _TAIL_EPS) -> np.ndarray:
    """PMF values for counts 0..J where the mass beyond J is below ``tail``."""
    n = int(n)
    if n == 0 or p == 0.0:
        return np.array([1.0])
    if p == 1.0:
        v = np.zeros(n + 1)
        v[n] = 1.0
        return v
    mean = n * p
    sd = math.sqrt(n * p * (1.0 - p))
    hi = min(n, int(math.ceil(mean + 12.0 * sd + 30.0)))
    while True:
        v = binomial_pmf(np.arange(hi + 1), p, n)
        if hi >= n:
            return v
        # Beyond the mode the pmf decays at least geometrically with ratio
        # mean/hi, so the discarded mass is at most v[hi] * hi / (hi - mean).
        # Bounding via the last pmf value (rather than 1 - sum) keeps the
        # check immune to the log-gamma drift that dominates huge-n sums.
        if hi > mean and v[-1] * (hi / (hi - mean)) <= tail:
            return v
        hi = min(n, hi * 2 + 10)


@dataclass(frozen=True)
class InlierCellStats:
    """One inlier-capable voting cell: mean true-correspondence count and the
    per-query-feature probability of contributing an inlier vote there."""

    mean_count: float
    hit_probability: float

    def __post_init__(self):
        if self.mean_count < 0:
            raise DomainError("mean inlier count cannot be negative")
        if not (0.0 <= self.hit_probability <= 1.0):
            raise DomainError("hit probability outside [0, 1]")


@dataclass(frozen=True)
class PredictionInputs:
    """Everything the success model needs, in expectation.

    ``expected_matches`` must equal expected_outliers plus the summed inlier
    cell means (it is derived when omitted). Inlier cells are ordered by
    non-increasing mean count.
    """

    expected_cells: float  # E[|V|], occupied voting cells
    expected_query_features: float  # E[|F_q|]
    expected_outliers: float  # E[O]
    inlier_cells: tuple = ()
    expected_matches: float = None

    def __post_init__(self):
        if self.expected_cells < 1:
            raise DomainError("expected cell count must be at least 1")
        if self.expected_query_features < 0 or self.expected_outliers < 0:
            raise DomainError("expected counts cannot be negative")
        cells = tuple(self.inlier_cells)
        object.__setattr__(self, "inlier_cells", cells)
        means = [c.mean_count for c in cells]
        if any(a < b - 1e-9 for a, b in zip(means, means[1:])):
            raise DomainError("inlier cells must be ordered by non-increasing mean count")
        derived = self.expected_outliers + sum(means)
        if self.expected_matches is None:
            object.__setattr__(self, "expected_matches", derived)
        elif not math.isclose(self.expected_matches, derived, rel_tol=1e-6, abs_tol=1e-6):
            raise DomainError(
                f"expected_matches {self.expected_matches} inconsistent with "
                f"outliers + inlier means = {derived}"
            )


@dataclass
class CellDistribution:
    """A per-cell vote-count law with its truncated PMF."""

    probability: float
    trials: int
    pmf: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return self.trials * self.probability

    def cdf(self) -> np.ndarray:
        return np.minimum(np.cumsum(self.pmf), 1.0)

    def ratio_of_cells(self) -> np.ndarray:
        """Law conditioned on receiving at least one vote: entry [i] is the
        predicted fraction of occupied cells holding exactly i+1 votes."""
        p0 = self.pmf[0] if len(self.pmf) else 0.0
        rest = self.pmf[1:]
        denom = 1.0 - p0
        if denom <= 0:
            return np.zeros(0)
        return rest / denom


def outlier_cell_distribution(inputs: PredictionInputs) -> CellDistribution:
    """Vote-count law of a single cell fed only by spatially random outliers."""
    cells = max(1, round(inputs.expected_cells))
    n = round(inputs.expected_outliers)
    p = 1.0 / cells
    return CellDistribution(probability=p, trials=n, pmf=_pmf_vector(p, n))


def inlier_cell_distribution(inputs: PredictionInputs, cell_index: int = 0) -> CellDistribution:
    """Inlier vote-count law of one inlier-capable cell."""
    cell = inputs.inlier_cells[cell_index]
    n = round(inputs.expected_query_features)
    return CellDistribution(
        probability=cell.hit_probability, trials=n, pmf=_pmf_vector(cell.hit_probability, n)
    )


def _log_safe(v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(v)


def predict_success_details(inputs: PredictionInputs) -> tuple[float, list]:
    """Success probability plus each inlier cell's win contribution.

    A cell's win event — strictly out-voting every other cell while holding
    at least two inliers — can happen for at most one cell per attempt, so
    the per-cell win probabilities add up exactly; treating them as
    independent instead (one minus the product of misses) visibly
    under-predicts whenever two inlier cells have comparable strength.
    """
    n_in = len(inputs.inlier_cells)
    if n_in == 0:
        return 0.0, []
    cells = max(1, round(inputs.expected_cells))
    po = outlier_cell_distribution(inputs).pmf
    pis = [inlier_cell_distribution(inputs, i).pmf for i in range(n_in)]

    match_pmfs = [np.convolve(pi, po) for pi in pis]
    j_max = max(len(m) for m in match_pmfs)
    j_max = max(j_max, len(po))

    def padded_cdf(v):
        c = np.minimum(np.cumsum(v), 1.0)
        if len(c) < j_max:
            c = np.concatenate([c, np.full(j_max - len(c), c[-1] if len(c) else 1.0)])
        return c[:j_max]

    out_log_cdf = _log_safe(padded_cdf(po))
    match_log_cdfs = [_log_safe(padded_cdf(m)) for m in match_pmfs]
    n_pure = max(cells - n_in, 0)

    per_cell = []
    for i in range(n_in):
        others_log = n_pure * out_log_cdf
        for c in range(n_in):
            if c != i:
                others_log = others_log + match_log_cdfs[c]
        # weight[j] = P(every other cell stays below j votes) = CDF_others(j-1)
        weight = np.zeros(j_max + 1)
        weight[1:] = np.exp(others_log)
        pi_tail = pis[i].copy()
        pi_tail[: min(2, len(pi_tail))] = 0.0
        p_win = float(_kernels.joint_peak_term(pi_tail, po, weight))
        per_cell.append(min(max(p_win, 0.0), 1.0))
    return float(min(max(sum(per_cell), 0.0), 1.0)), per_cell


def predict_success_rate(inputs: PredictionInputs) -> float:
    """Probability that the vote peak ends up with at least two inliers."""
    prob, _ = predict_success_details(inputs)
    return prob


def scale_inputs_for_nr(
    inputs: PredictionInputs, nr_old: float, nr_new: float
) -> PredictionInputs:
    """Rescale the model inputs for a different per-image reference budget.

    Match counts grow linearly with the budget: inlier cell means, hit
    probabilities (clamped to 1), expected outliers, and expected matches
    all scale by nr_new/nr_old; cell and query-feature counts stay put.
    """
    if nr_old <= 0 or nr_new <= 0:
        raise DomainError("reference budgets must be positive")
    f = nr_new / nr_old
    cells = tuple(
        InlierCellStats(c.mean_count * f, min(1.0, c.hit_probability * f))
        for c in inputs.inlier_cells
    )
    return replace(
        inputs,
        expected_outliers=inputs.expected_outliers * f,
        inlier_cells=cells,
        expected_matches=inputs.expected_outliers * f + sum(c.mean_count for c in cells),
    )


def estimate_expected_cells(per_image_avg_cells: float, num_reference_images: int) -> float:
    """E[|V|] for a map: per-reference-image occupied-cell average times size."""
    if per_image_avg_cells < 0 or num_reference_images < 1:
        raise DomainError("need a non-negative per-image average and at least one image")
    return per_image_avg_cells * num_reference_images


def prediction_report(inputs: PredictionInputs) -> dict:
    """Structured summary of the model inputs and the resulting prediction."""
    prob, per_cell = predict_success_details(inputs)
    return {
        "expected_cells": inputs.expected_cells,
        "expected_query_features": inputs.expected_query_features,
        "expected_outliers": inputs.expected_outliers,
        "expected_matches": inputs.expected_matches,
        "inlier_cells": [
            {"mean_count": c.mean_count, "hit_probability": c.hit_probability}
            for c in inputs.inlier_cells
        ],
        "per_cell_win_probability": per_cell,
        "predicted_success_rate": prob,
    }


def write_prediction_report(inputs: PredictionInputs, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(prediction_report(inputs), fh, indent=2)
        fh.write("\n")
