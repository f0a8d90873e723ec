import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uhrbat.core import (
    BudgetSpec,
    CompressedSequence,
    ConfigurationError,
    DataError,
    DimensionError,
    InfeasibleBudgetError,
    PartitionError,
    RegionPartition,
    TokenGrid,
    TokenKind,
    TokenRecord,
    as_features,
    densify_labels,
    reshape_scores_to_grid,
    token_coordinates,
    validate_partition,
)


def test_reshape_row_major():
    out = reshape_scores_to_grid([1, 2, 3, 4], TokenGrid(2, 2))
    np.testing.assert_array_equal(out, [[1, 2], [3, 4]])
    np.testing.assert_array_equal(reshape_scores_to_grid([7], TokenGrid(1, 1)), [[7]])


def test_reshape_length_mismatch():
    with pytest.raises(DimensionError):
        reshape_scores_to_grid([1, 2, 3, 4, 5], TokenGrid(2, 2))


@given(st.integers(1, 30), st.integers(1, 30))
def test_reshape_then_flatten_is_identity(rows, cols):
    s = np.arange(rows * cols, dtype=float) * 0.37
    g = reshape_scores_to_grid(s, TokenGrid(rows, cols))
    assert g.shape == (rows, cols)
    np.testing.assert_array_equal(g.ravel(), s)


@pytest.mark.parametrize(
    "rows,cols,expected",
    [
        (1, 1, [(0.5, 0.5)]),
        (1, 2, [(0.25, 0.5), (0.75, 0.5)]),
        (2, 2, [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]),
    ],
)
def test_token_coordinates(rows, cols, expected):
    np.testing.assert_array_equal(token_coordinates(TokenGrid(rows, cols)), expected)


@given(st.integers(1, 200), st.integers(1, 200))
def test_coordinates_strictly_inside_unit_square(rows, cols):
    xy = TokenGrid(rows, cols).coords
    assert xy.shape == (rows * cols, 2)
    assert (xy > 0).all() and (xy < 1).all()
    # cell (u, v) -> ((v + .5)/cols, (u + .5)/rows)
    u, v = (rows - 1) // 2, (cols - 1) // 3
    assert tuple(xy[u * cols + v]) == ((v + 0.5) / cols, (u + 0.5) / rows)


def test_grid_from_resolution():
    g = TokenGrid.from_resolution(672, 14)
    assert g.shape == (48, 48) and g.n_tokens == 2304
    with pytest.raises(ConfigurationError):
        TokenGrid.from_resolution(680, 14)
    with pytest.raises(DimensionError):
        TokenGrid(0, 3)


def test_validate_partition_examples():
    assert validate_partition([0, 0, 1, 1], 2).ok
    rep = validate_partition([0, 2], 3)
    assert not rep.ok and rep.empty_regions == (1,)
    rep = validate_partition([0, -1])
    assert not rep.ok and rep.out_of_range == (1,)
    rep = validate_partition([0, 1], 2, n_tokens=3)
    assert rep.missing == (2,)


@given(st.lists(st.integers(-3, 8), min_size=1, max_size=40))
def test_validate_rejects_gaps_and_out_of_range(labels):
    lab = np.array(labels)
    rep = validate_partition(lab)
    present = set(labels)
    has_gap = any(r not in present for r in range(max(labels) + 1))
    assert rep.ok == (min(labels) >= 0 and not has_gap)


def test_region_partition_rejects_invalid():
    with pytest.raises(PartitionError):
        RegionPartition(np.array([0, 2]), 3)
    p = RegionPartition.from_labels([5, 5, 9, 2, 9])
    np.testing.assert_array_equal(p.labels, [0, 0, 1, 2, 1])
    assert p.n_regions == 3
    assert [r.tolist() for r in p.regions()] == [[0, 1], [2, 4], [3]]


def test_densify_first_occurrence():
    np.testing.assert_array_equal(densify_labels([7, 3, 7, -1, 3]), [0, 1, 0, 2, 1])


def test_feature_validation():
    with pytest.raises(DataError):
        as_features([[1.0, np.nan]])
    with pytest.raises(DimensionError):
        as_features([1.0, 2.0])
    f32 = np.ones((2, 3), dtype=np.float32)
    assert as_features(f32).dtype == np.float64


def test_budget_spec():
    BudgetSpec(100, (20, 30))
    with pytest.raises(InfeasibleBudgetError):
        BudgetSpec(10, (6, 6))
    with pytest.raises(ConfigurationError):
        BudgetSpec(10, (0, 6))


def test_compressed_sequence_records_roundtrip():
    recs = [
        TokenRecord(np.array([1.0, 2.0]), TokenKind.KEPT, 0, (3,), 0.9),
        TokenRecord(np.array([0.5, 0.5]), TokenKind.MERGED, 0, (0, 1), 0.4),
    ]
    seq = CompressedSequence.from_records(recs, n_tokens=4, dim=2)
    assert len(seq) == seq.budget_used == 2
    assert list(seq) == recs
    assert seq.n_kept == 1 and seq.n_merged == 1
    head = seq.head(1)
    assert len(head) == 1 and head[0] == recs[0]
    with pytest.raises(ValueError):
        seq.features[0, 0] = 5.0
