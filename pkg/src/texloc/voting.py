"""Pose voting: every match proposes a full query pose, votes fall in cells.

A match pairs a query feature (image frame) with a reference feature (map
frame). Chaining the reference feature's map pose with the inverse of the
query feature's image pose yields the query-image pose implied by that match
alone. Only the translation takes part in the grid vote; the histogram peak
seeds the subsequent pose estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyHistogramError
from .features import Match
from .geometry import TAU, Pose2D, compose, inverse

Cell = tuple[int, int]


def _no_votes() -> np.ndarray:
    return np.zeros((0, 3), dtype=np.float64)


@dataclass
class VoteHistogram:
    """Sparse map from grid cell to the match ids that voted for it."""

    cell_size: float
    cells: dict = field(default_factory=dict)  # Cell -> list[int] (match ids)
    votes: np.ndarray = field(default_factory=_no_votes)  # (n, 3) x/y/theta rows

    @property
    def num_votes(self) -> int:
        return sum(len(v) for v in self.cells.values())

    @property
    def num_occupied(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class VotingPeak:
    cell: Cell
    vote_count: int
    match_ids: tuple


def vote_position(match: Match) -> Pose2D:
    """Query pose implied by one match.

    The reference keypoint's pose in the map, chained with the inverse of the
    query keypoint's pose in the image.
    """
    rk = match.reference.keypoint
    qk = match.query.keypoint
    ref_pose = Pose2D(rk.x, rk.y, rk.orientation)
    query_pose = Pose2D(qk.x, qk.y, qk.orientation)
    return compose(ref_pose, inverse(query_pose))


def cell_of(x: float, y: float, cell_size: float) -> Cell:
    return (int(math.floor(x / cell_size)), int(math.floor(y / cell_size)))


def cast_votes(matches: list[Match], cell_size: float) -> VoteHistogram:
    """Vote each match's implied translation into the grid.

    All vote poses are computed in one vectorized pass; row ``i`` of the
    returned ``votes`` array agrees with ``vote_position(matches[i])``.
    Cells are keyed in ascending (cx, cy) order, match ids ascending within
    a cell.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    n = len(matches)
    if n == 0:
        return VoteHistogram(cell_size=cell_size)
    rk = np.array(
        [(m.reference.keypoint.x, m.reference.keypoint.y, m.reference.keypoint.orientation) for m in matches]
    )
    qk = np.array([(m.query.keypoint.x, m.query.keypoint.y, m.query.keypoint.orientation) for m in matches])
    cq, sq = np.cos(qk[:, 2]), np.sin(qk[:, 2])
    inv_x = -(cq * qk[:, 0] + sq * qk[:, 1])
    inv_y = -(-sq * qk[:, 0] + cq * qk[:, 1])
    inv_t = math.pi - (math.pi + qk[:, 2]) % TAU
    cr, sr = np.cos(rk[:, 2]), np.sin(rk[:, 2])
    x = rk[:, 0] + cr * inv_x - sr * inv_y
    y = rk[:, 1] + sr * inv_x + cr * inv_y
    t = math.pi - (math.pi - (rk[:, 2] + inv_t)) % TAU

    cx = np.floor(x / cell_size).astype(np.int64)
    cy = np.floor(y / cell_size).astype(np.int64)
    order = np.lexsort((cy, cx))  # stable: ids stay ascending within a cell
    scx, scy = cx[order], cy[order]
    breaks = np.nonzero((scx[1:] != scx[:-1]) | (scy[1:] != scy[:-1]))[0] + 1
    starts = np.concatenate(([0], breaks))
    ends = np.concatenate((breaks, [n]))
    cells = {}
    for s0, e0 in zip(starts, ends):
        cells[(int(scx[s0]), int(scy[s0]))] = order[s0:e0].tolist()
    return VoteHistogram(cell_size=cell_size, cells=cells, votes=np.column_stack([x, y, t]))


def find_peak(hist: VoteHistogram) -> VotingPeak:
    """Cell with the most votes; ties go to the lexicographically smallest cell."""
    if not hist.cells:
        raise EmptyHistogramError("no votes were cast")
    best_cell = min(hist.cells, key=lambda c: (-len(hist.cells[c]), c))
    ids = hist.cells[best_cell]
    return VotingPeak(cell=best_cell, vote_count=len(ids), match_ids=tuple(ids))


def dump_cells(hist: VoteHistogram) -> str:
    """Cell occupancy as text lines "cell_x,cell_y,count", sorted by cell."""
    lines = [f"{cx},{cy},{len(ids)}" for (cx, cy), ids in sorted(hist.cells.items())]
    return "\n".join(lines) + ("\n" if lines else "")
