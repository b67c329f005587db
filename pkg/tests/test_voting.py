import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from texloc.errors import EmptyHistogramError
from texloc.features import Feature, Keypoint, Match
from texloc.geometry import Pose2D, compose, inverse
from texloc.voting import VoteHistogram, cast_votes, cell_of, dump_cells, find_peak, vote_position


def make_match(ref_xy_theta, query_xy_theta, distance=0.0):
    rx, ry, rt = ref_xy_theta
    qx, qy, qt = query_xy_theta
    ref = Feature(Keypoint(x=rx, y=ry, orientation=rt, size=12.0), np.zeros(4), "real")
    qf = Feature(Keypoint(x=qx, y=qy, orientation=qt, size=12.0), np.zeros(4), "real")
    return Match(query_id=0, ref_id=0, distance=distance, query=qf, reference=ref)


# ------------------------------------------------------------ single votes


def test_vote_from_aligned_match_is_pure_offset():
    """Zero-orientation keypoints vote with a plain coordinate difference."""
    m = make_match((250.0, 340.0, 0.0), (50.0, 40.0, 0.0))
    p = vote_position(m)
    assert (p.x, p.y) == (200.0, 300.0)
    assert p.theta == 0.0


def test_vote_with_quarter_turn_orientation():
    """A 90-degree keypoint-orientation difference turns the offset."""
    m = make_match((100.0, 40.0, math.pi / 2), (10.0, 20.0, 0.0))
    p = vote_position(m)
    # compose((100,40,90deg), inverse((10,20,0))) = (100,40,90) * (-10,-20,0)
    assert p.x == pytest.approx(100.0 + 20.0)
    assert p.y == pytest.approx(40.0 - 10.0)
    assert p.theta == pytest.approx(math.pi / 2)


def test_vote_recovers_true_query_pose():
    """When both keypoints observe the same map point, the vote is the truth."""
    truth = Pose2D(73.0, -12.0, 0.6)
    kp_query = Pose2D(33.0, 21.0, 1.1)  # keypoint pose in the query image
    kp_map = compose(truth, kp_query)  # same physical point in the map frame
    m = make_match((kp_map.x, kp_map.y, kp_map.theta), (kp_query.x, kp_query.y, kp_query.theta))
    p = vote_position(m)
    assert p.x == pytest.approx(truth.x, abs=1e-9)
    assert p.y == pytest.approx(truth.y, abs=1e-9)
    assert p.theta == pytest.approx(truth.theta, abs=1e-12)


# ------------------------------------------------------------------- cells


def test_cell_of_examples():
    assert cell_of(120.0, 260.0, 50.0) == (2, 5)
    assert cell_of(149.9, 0.0, 75.0) == (1, 0)
    assert cell_of(-0.1, -75.1, 75.0) == (-1, -2)
    assert cell_of(0.0, 0.0, 10.0) == (0, 0)


def test_cast_votes_groups_by_cell():
    matches = [
        make_match((10.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # vote (10,10) -> cell (0,0)
        make_match((60.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # vote (60,10) -> cell (1,0)
        make_match((30.0, 20.0, 0.0), (0.0, 0.0, 0.0)),  # vote (30,20) -> cell (0,0)
    ]
    hist = cast_votes(matches, 50.0)
    assert hist.num_votes == 3
    assert hist.num_occupied == 2
    assert hist.cells[(0, 0)] == [0, 2]
    assert hist.cells[(1, 0)] == [1]


def test_cast_votes_rows_match_scalar_path():
    rng = np.random.default_rng(7)
    matches = [
        make_match(tuple(rng.uniform(-200, 200, 2)) + (rng.uniform(-3, 3),),
                   tuple(rng.uniform(0, 100, 2)) + (rng.uniform(-3, 3),))
        for _ in range(50)
    ]
    hist = cast_votes(matches, 25.0)
    for i, m in enumerate(matches):
        p = vote_position(m)
        assert np.allclose(hist.votes[i], [p.x, p.y, p.theta], atol=1e-9)


def test_cast_votes_empty_and_bad_cell_size():
    hist = cast_votes([], 50.0)
    assert hist.num_votes == 0 and hist.num_occupied == 0
    assert hist.votes.shape == (0, 3)
    with pytest.raises(ValueError):
        cast_votes([], 0.0)


@given(
    st.lists(
        st.tuples(
            st.floats(-500, 500), st.floats(-500, 500), st.floats(-3.1, 3.1),
            st.floats(0, 300), st.floats(0, 200), st.floats(-3.1, 3.1),
        ),
        min_size=1,
        max_size=40,
    ),
    st.sampled_from([10.0, 37.5, 50.0]),
)
@settings(max_examples=60, deadline=None)
def test_vectorized_votes_agree_with_compose(raw, cell_size):
    matches = [make_match((rx, ry, rt), (qx, qy, qt)) for rx, ry, rt, qx, qy, qt in raw]
    hist = cast_votes(matches, cell_size)
    # every id appears in exactly one cell, and in the cell its vote lands in
    seen = sorted(i for ids in hist.cells.values() for i in ids)
    assert seen == list(range(len(matches)))
    for cell, ids in hist.cells.items():
        for i in ids:
            x, y, _ = hist.votes[i]
            assert cell_of(x, y, cell_size) == cell
    for i, m in enumerate(matches):
        p = vote_position(m)
        assert math.isclose(hist.votes[i][0], p.x, rel_tol=0, abs_tol=1e-6)
        assert math.isclose(hist.votes[i][1], p.y, rel_tol=0, abs_tol=1e-6)


# -------------------------------------------------------------------- peak


def test_find_peak_majority():
    matches = [
        make_match((10.0 + dx, 10.0, 0.0), (0.0, 0.0, 0.0)) for dx in (0.0, 5.0, 9.0)
    ] + [make_match((210.0, 10.0, 0.0), (0.0, 0.0, 0.0))]
    peak = find_peak(cast_votes(matches, 50.0))
    assert peak.cell == (0, 0)
    assert peak.vote_count == 3
    assert peak.match_ids == (0, 1, 2)


def test_find_peak_tie_goes_to_lexicographically_smallest():
    matches = [
        make_match((10.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # cell (0,0)
        make_match((110.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # cell (2,0)
        make_match((110.0, 20.0, 0.0), (0.0, 0.0, 0.0)),  # cell (2,0)
        make_match((20.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # cell (0,0)
    ]
    peak = find_peak(cast_votes(matches, 50.0))
    assert peak.cell == (0, 0)
    assert peak.vote_count == 2
    # negative cells sort before positive ones
    matches += [
        make_match((-10.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # cell (-1,0)
        make_match((-20.0, 10.0, 0.0), (0.0, 0.0, 0.0)),  # cell (-1,0)
    ]
    peak = find_peak(cast_votes(matches, 50.0))
    assert peak.cell == (-1, 0)


def test_find_peak_empty_histogram():
    with pytest.raises(EmptyHistogramError):
        find_peak(VoteHistogram(cell_size=50.0))
    with pytest.raises(EmptyHistogramError):
        find_peak(cast_votes([], 50.0))


def test_dump_cells_format():
    matches = [
        make_match((10.0, 10.0, 0.0), (0.0, 0.0, 0.0)),
        make_match((110.0, 10.0, 0.0), (0.0, 0.0, 0.0)),
        make_match((112.0, 12.0, 0.0), (0.0, 0.0, 0.0)),
    ]
    assert dump_cells(cast_votes(matches, 50.0)) == "0,0,1\n2,0,2\n"
    assert dump_cells(VoteHistogram(cell_size=50.0)) == ""
